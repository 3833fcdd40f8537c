//! Central-difference verification of analytic gradients.
//!
//! The builder must be a deterministic pure function of the parameter store
//! (no dropout, no sampling) so that finite differences are meaningful.

use crate::graph::{Graph, NodeId};
use crate::params::{Bound, ParamStore};

pub struct GradCheck {
    pub eps: f64,
    /// Check every `stride`-th entry of each tensor; 1 checks all.
    pub stride: usize,
    /// Entries where analytic and numeric are both below this magnitude
    /// count as matching at zero. Central differences in f64 carry an
    /// absolute noise of about `ulp(loss) / (2 eps)` (2e-10 for a loss near
    /// 10 at the default eps), so gradients under the floor cannot be
    /// resolved to a 1e-4 relative tolerance.
    pub zero_floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-5,
            stride: 1,
            zero_floor: 1e-5,
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

impl GradCheck {
    /// Returns the worst relative error between analytic and numeric
    /// gradients over all parameters, and the entry where it occurred.
    pub fn run(
        &self,
        store: &mut ParamStore,
        build: impl Fn(&mut Graph, &Bound) -> NodeId,
    ) -> (f64, String) {
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let loss = build(&mut g, &bound);
        g.backward(loss);
        let analytic = bound.grads(&g);

        let names: Vec<String> = store.iter().map(|(n, _)| n.clone()).collect();
        let mut worst = 0.0;
        let mut worst_at = String::new();
        for name in names {
            let n = store.get(&name).numel();
            for k in (0..n).step_by(self.stride) {
                let orig = store.get(&name).data[k];

                store.get_mut(&name).data[k] = orig + self.eps;
                let lp = self.eval(store, &build);
                store.get_mut(&name).data[k] = orig - self.eps;
                let lm = self.eval(store, &build);
                store.get_mut(&name).data[k] = orig;

                assert!(
                    lp.is_finite() && lm.is_finite(),
                    "non-finite loss while perturbing {name}[{k}]: {lp} / {lm}"
                );
                let numeric = (lp - lm) / (2.0 * self.eps);
                let exact = analytic.get(&name).map_or(0.0, |g| g[k]);
                if exact.abs() < self.zero_floor && numeric.abs() < self.zero_floor {
                    continue;
                }
                let e = rel_err(exact, numeric);
                if e > worst {
                    worst = e;
                    worst_at = format!("{name}[{k}] analytic {exact:e} numeric {numeric:e}");
                }
            }
        }
        (worst, worst_at)
    }

    fn eval(&self, store: &ParamStore, build: &impl Fn(&mut Graph, &Bound) -> NodeId) -> f64 {
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let loss = build(&mut g, &bound);
        g.val(loss).data[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn quadratic_form_checks_out() {
        let mut ps = ParamStore::new();
        ps.insert("w", Tensor::matrix(2, 2, vec![0.3, -0.1, 0.7, 0.2]));
        ps.insert("x", Tensor::vector(vec![0.5, -0.4]));
        let (err, at) = GradCheck::default().run(&mut ps, |g, b| {
            let y = g.matvec(b.id("w"), b.id("x"));
            let t = g.tanh(y);
            let s = g.dot(t, t);
            g.sqrt(s)
        });
        assert!(err < 1e-6, "gradcheck failed at {at}: {err}");
    }
}

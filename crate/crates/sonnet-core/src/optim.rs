//! Adagrad and Adam with global-norm gradient clipping. Optimizer state is
//! keyed by parameter name, so several optimizers can drive overlapping
//! parameter subsets, each with its own accumulators.

use crate::params::ParamStore;
use indexmap::IndexMap;

pub type Grads = IndexMap<String, Vec<f64>>;

fn all_finite(grads: &Grads) -> bool {
    grads.values().all(|g| g.iter().all(|x| x.is_finite()))
}

pub fn global_norm(grads: &Grads) -> f64 {
    grads
        .values()
        .flat_map(|g| g.iter())
        .map(|&x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Scales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            for x in g.iter_mut() {
                *x *= s;
            }
        }
    }
    norm
}

pub struct Adagrad {
    pub lr: f64,
    eps: f64,
    acc: IndexMap<String, Vec<f64>>,
}

impl Adagrad {
    pub fn new(lr: f64) -> Adagrad {
        Adagrad { lr, eps: 1e-8, acc: IndexMap::new() }
    }

    /// Returns false and changes nothing when any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) -> bool {
        if !all_finite(grads) {
            return false;
        }
        for (name, g) in grads {
            let acc = self
                .acc
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            let p = params.get_mut(name);
            assert_eq!(p.numel(), g.len(), "gradient size mismatch for {name}");
            for k in 0..g.len() {
                acc[k] += g[k] * g[k];
                p.data[k] -= self.lr * g[k] / (acc[k].sqrt() + self.eps);
            }
        }
        true
    }
}

pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: IndexMap<String, Vec<f64>>,
    v: IndexMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: IndexMap::new(),
            v: IndexMap::new(),
        }
    }

    /// Returns false and changes nothing when any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) -> bool {
        if !all_finite(grads) {
            return false;
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            let p = params.get_mut(name);
            assert_eq!(p.numel(), g.len(), "gradient size mismatch for {name}");
            for k in 0..g.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p.data[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use approx::assert_relative_eq;

    fn one_param(x: f64) -> ParamStore {
        let mut ps = ParamStore::new();
        ps.insert("w", Tensor::scalar(x));
        ps
    }

    fn grad_of(g: f64) -> Grads {
        let mut m = IndexMap::new();
        m.insert("w".to_string(), vec![g]);
        m
    }

    #[test]
    fn adagrad_first_step_is_almost_lr() {
        let mut ps = one_param(1.0);
        let mut opt = Adagrad::new(0.05);
        opt.step(&mut ps, &grad_of(2.0));
        // acc = 4, update = lr * 2 / (2 + eps)
        assert_relative_eq!(ps.get("w").data[0], 1.0 - 0.05, epsilon = 1e-6);
    }

    #[test]
    fn adam_first_step_is_almost_lr() {
        let mut ps = one_param(1.0);
        let mut opt = Adam::new(0.001);
        opt.step(&mut ps, &grad_of(0.3));
        assert_relative_eq!(ps.get("w").data[0], 1.0 - 0.001, epsilon = 1e-6);
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut g = grad_of(3.0);
        let n = clip_global_norm(&mut g, 5.0);
        assert_relative_eq!(n, 3.0);
        assert_relative_eq!(g["w"][0], 3.0);
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut g = IndexMap::new();
        g.insert("a".to_string(), vec![3.0, 4.0]);
        g.insert("b".to_string(), vec![12.0]);
        let n = clip_global_norm(&mut g, 5.0);
        assert_relative_eq!(n, 13.0);
        assert_relative_eq!(global_norm(&g), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn adam_decays_toward_minimum() {
        // minimize (w - 2)^2 by hand-fed gradients
        let mut ps = one_param(0.0);
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            let w = ps.get("w").data[0];
            opt.step(&mut ps, &grad_of(2.0 * (w - 2.0)));
        }
        assert_relative_eq!(ps.get("w").data[0], 2.0, epsilon = 1e-3);
    }

    #[test]
    fn non_finite_gradient_rejects_step() {
        let mut ps = one_param(1.0);
        let mut ada = Adagrad::new(0.05);
        assert!(!ada.step(&mut ps, &grad_of(f64::NAN)));
        assert_eq!(ps.get("w").data[0], 1.0);
        let mut adam = Adam::new(0.001);
        assert!(!adam.step(&mut ps, &grad_of(f64::INFINITY)));
        assert_eq!(ps.get("w").data[0], 1.0);
        // a rejected step must not advance Adam's bias-correction clock
        assert!(adam.step(&mut ps, &grad_of(0.5)));
        assert_relative_eq!(ps.get("w").data[0], 1.0 - 0.001, epsilon = 1e-6);
    }
}

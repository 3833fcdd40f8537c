//! LSTM cells and bidirectional sequence encoders.
//!
//! Gate weights are packed: `wx` is `[4H, D]`, `wh` is `[4H, H]`, `b` is
//! `[4H]`, with the input, forget, cell and output gates in that order.

use crate::graph::{Graph, NodeId};
use crate::params::{Bound, ParamStore};
use crate::tensor::Tensor;
use rand::Rng;

pub fn lstm_init(ps: &mut ParamStore, prefix: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) {
    ps.insert(
        format!("{prefix}.wx"),
        Tensor::uniform(vec![4 * hidden, in_dim], -0.05, 0.05, rng),
    );
    ps.insert(
        format!("{prefix}.wh"),
        Tensor::uniform(vec![4 * hidden, hidden], -0.05, 0.05, rng),
    );
    ps.insert(format!("{prefix}.b"), Tensor::zeros(vec![4 * hidden]));
}

#[derive(Clone, Copy)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

pub fn lstm_zero_state(g: &mut Graph, hidden: usize) -> LstmState {
    let h = g.leaf(Tensor::zeros(vec![hidden]));
    let c = g.leaf(Tensor::zeros(vec![hidden]));
    LstmState { h, c }
}

pub fn lstm_step(
    g: &mut Graph,
    b: &Bound,
    prefix: &str,
    x: NodeId,
    st: LstmState,
    hidden: usize,
) -> LstmState {
    let zx = g.matvec(b.id(&format!("{prefix}.wx")), x);
    let zh = g.matvec(b.id(&format!("{prefix}.wh")), st.h);
    let zs = g.add(zx, zh);
    let z = {
        let bias = b.id(&format!("{prefix}.b"));
        g.add(zs, bias)
    };
    let zi = g.slice(z, 0, hidden);
    let zf = g.slice(z, hidden, hidden);
    let zg = g.slice(z, 2 * hidden, hidden);
    let zo = g.slice(z, 3 * hidden, hidden);
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let gg = g.tanh(zg);
    let o = g.sigmoid(zo);
    let fc = g.mul(f, st.c);
    let ig = g.mul(i, gg);
    let c = g.add(fc, ig);
    let tc = g.tanh(c);
    let h = g.mul(o, tc);
    LstmState { h, c }
}

/// Runs one direction over `inputs`, returning the hidden state at every
/// position (in input order).
pub fn lstm_run(
    g: &mut Graph,
    b: &Bound,
    prefix: &str,
    inputs: &[NodeId],
    hidden: usize,
    reverse: bool,
) -> Vec<NodeId> {
    let mut st = lstm_zero_state(g, hidden);
    let mut out = vec![NodeId(0); inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        st = lstm_step(g, b, prefix, inputs[t], st, hidden);
        out[t] = st.h;
    }
    out
}

/// Forward and backward passes over the same inputs, separate weights.
pub struct BiOutputs {
    pub fwd: Vec<NodeId>,
    pub bwd: Vec<NodeId>,
}

pub fn bilstm_init(ps: &mut ParamStore, prefix: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) {
    lstm_init(ps, &format!("{prefix}.f"), in_dim, hidden, rng);
    lstm_init(ps, &format!("{prefix}.r"), in_dim, hidden, rng);
}

pub fn bilstm_run(
    g: &mut Graph,
    b: &Bound,
    prefix: &str,
    inputs: &[NodeId],
    hidden: usize,
) -> BiOutputs {
    BiOutputs {
        fwd: lstm_run(g, b, &format!("{prefix}.f"), inputs, hidden, false),
        bwd: lstm_run(g, b, &format!("{prefix}.r"), inputs, hidden, true),
    }
}

impl BiOutputs {
    /// `[fwd_t; bwd_t]` at one position.
    pub fn at(&self, g: &mut Graph, t: usize) -> NodeId {
        g.concat(&[self.fwd[t], self.bwd[t]])
    }

    /// `[fwd at last position; bwd at first position]`: the summary used for
    /// whole-sequence encodings.
    pub fn ends(&self, g: &mut Graph) -> NodeId {
        g.concat(&[*self.fwd.last().unwrap(), self.bwd[0]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::GradCheck;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_hidden() {
        let mut ps = ParamStore::new();
        ps.insert("l.wx", Tensor::zeros(vec![8, 3]));
        ps.insert("l.wh", Tensor::zeros(vec![8, 2]));
        ps.insert("l.b", Tensor::zeros(vec![8]));
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let x = g.leaf(Tensor::vector(vec![1.0, -1.0, 2.0]));
        let st = lstm_zero_state(&mut g, 2);
        let st = lstm_step(&mut g, &b, "l", x, st, 2);
        assert!(g.val(st.h).data.iter().all(|&v| v == 0.0));
        assert!(g.val(st.c).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ps = ParamStore::new();
        lstm_init(&mut ps, "l", 3, 2, &mut rng);
        let xs: Vec<Tensor> = (0..3)
            .map(|_| Tensor::uniform(vec![3], -1.0, 1.0, &mut rng))
            .collect();
        let (err, at) = GradCheck::default().run(&mut ps, |g, b| {
            let inputs: Vec<NodeId> = xs.iter().map(|t| g.leaf(t.clone())).collect();
            let outs = lstm_run(g, b, "l", &inputs, 2, false);
            let last = *outs.last().unwrap();
            let d = g.dot(last, last);
            g.sum(d)
        });
        assert!(err < 1e-6, "gradcheck failed at {at}: {err}");
    }

    #[test]
    fn bilstm_backward_pass_sees_later_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamStore::new();
        bilstm_init(&mut ps, "e", 2, 3, &mut rng);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let xs: Vec<NodeId> = (0..4)
            .map(|_| {
                let t = Tensor::uniform(vec![2], -1.0, 1.0, &mut rng);
                g.leaf(t)
            })
            .collect();
        let outs = bilstm_run(&mut g, &b, "e", &xs, 3);
        assert_eq!(outs.fwd.len(), 4);
        let summary = outs.ends(&mut g);
        assert_eq!(g.val(summary).numel(), 6);
        // the backward direction's first-position state depends on all inputs
        let s = g.sum(outs.bwd[0]);
        g.backward(s);
        for &x in &xs {
            assert!(g.grad(x).is_some());
        }
    }
}

//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Values are computed eagerly as nodes are appended, so callers may inspect
//! intermediate results (sampling, argsort over forward values) while the
//! graph is still growing. Parents always precede children on the tape, so a
//! single reverse sweep from the loss node visits nodes in reverse
//! topological order. Gradients accumulate additively across fan-out.
//!
//! `backward` may be called once per graph; a second call panics. Shape
//! mismatches panic with the operation name and both operand shapes.

use crate::tensor::Tensor;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    Scale(NodeId, f64),
    Shift(NodeId),
    Detach,
    Softplus(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MinElem(NodeId, NodeId),
    MaxElem(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, off: usize, len: usize },
    StackRows(Vec<NodeId>),
    MatMul(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    VecMat(NodeId, NodeId),
    Dot(NodeId, NodeId),
    AddRowBroadcast(NodeId, NodeId),
    ScaleRows(NodeId, NodeId),
    Softmax(NodeId),
    MaskedSoftmax { x: NodeId, keep: Vec<bool> },
    NllFromLogits { logits: NodeId, target: usize },
    Lookup { table: NodeId, row: usize },
    Dropout { x: NodeId, mask: Vec<f64> },
    GaussWindow { mu: NodeId, len: usize, sigma_sq: f64 },
    LogGaussWindow { mu: NodeId, len: usize, sigma_sq: f64 },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
}

pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

fn check_same(op: &str, a: &Tensor, b: &Tensor) {
    assert_eq!(
        a.shape, b.shape,
        "{}: shape mismatch {:?} vs {:?}",
        op, a.shape, b.shape
    );
}

impl Graph {
    pub fn new() -> Graph {
        Graph { nodes: Vec::new(), backward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn val(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` loss with respect to node `id`.
    /// `None` if the node did not contribute to the loss.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, grad: None, op });
        id
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> NodeId {
        self.leaf(Tensor::scalar(x))
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let data = self.nodes[x.0].value.data.iter().map(|&v| f(v)).collect();
        let shape = self.nodes[x.0].value.shape.clone();
        self.push(Tensor { shape, data }, op)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn shift(&mut self, x: NodeId, c: f64) -> NodeId {
        self.unary(x, |v| v + c, Op::Shift(x))
    }

    /// Copies the value and blocks the gradient.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.clone();
        self.push(value, Op::Detach)
    }

    /// `ln(1 + e^x)`, evaluated stably; `softplus(-x)` is `-ln(sigmoid(x))`.
    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.max(0.0) + (-v.abs()).exp().ln_1p(), Op::Softplus(x))
    }

    fn binary(
        &mut self,
        name: &str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> NodeId {
        check_same(name, &self.nodes[a.0].value, &self.nodes[b.0].value);
        let shape = self.nodes[a.0].value.shape.clone();
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(Tensor { shape, data }, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Elementwise minimum. Ties send the gradient to the first argument.
    pub fn min_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary("min", a, b, f64::min, Op::MinElem(a, b))
    }

    /// Elementwise maximum. Ties send the gradient to the first argument.
    pub fn max_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary("max", a, b, f64::max, Op::MaxElem(a, b))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].value.data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x.0].value.numel();
        let s: f64 = self.nodes[x.0].value.data.iter().sum();
        self.push(Tensor::scalar(s / n as f64), Op::Mean(x))
    }

    /// Concatenates rank-1 tensors into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat: empty argument list");
        let mut data = Vec::new();
        for &p in parts {
            let t = &self.nodes[p.0].value;
            assert_eq!(t.shape.len(), 1, "concat: rank-{} operand {:?}", t.shape.len(), t.shape);
            data.extend_from_slice(&t.data);
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: NodeId, off: usize, len: usize) -> NodeId {
        let t = &self.nodes[x.0].value;
        assert_eq!(t.shape.len(), 1, "slice: rank-{} operand {:?}", t.shape.len(), t.shape);
        assert!(
            off + len <= t.numel(),
            "slice: range {}..{} out of bounds for {:?}",
            off,
            off + len,
            t.shape
        );
        let data = t.data[off..off + len].to_vec();
        self.push(Tensor::vector(data), Op::Slice { x, off, len })
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> NodeId {
        assert!(!rows.is_empty(), "stack_rows: empty argument list");
        let cols = self.nodes[rows[0].0].value.numel();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let t = &self.nodes[r.0].value;
            check_same("stack_rows", &self.nodes[rows[0].0].value, t);
            data.extend_from_slice(&t.data);
        }
        self.push(Tensor::matrix(rows.len(), cols, data), Op::StackRows(rows.to_vec()))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(
            ta.shape.len() == 2 && tb.shape.len() == 2 && ta.shape[1] == tb.shape[0],
            "matmul: incompatible shapes {:?} vs {:?}",
            ta.shape,
            tb.shape
        );
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = ta.data[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &tb.data[p * n..(p + 1) * n];
                let crow = &mut data[i * n..(i + 1) * n];
                for j in 0..n {
                    crow[j] += av * brow[j];
                }
            }
        }
        self.push(Tensor::matrix(m, n, data), Op::MatMul(a, b))
    }

    pub fn matvec(&mut self, a: NodeId, x: NodeId) -> NodeId {
        let (ta, tx) = (&self.nodes[a.0].value, &self.nodes[x.0].value);
        assert!(
            ta.shape.len() == 2 && tx.shape.len() == 1 && ta.shape[1] == tx.shape[0],
            "matvec: incompatible shapes {:?} vs {:?}",
            ta.shape,
            tx.shape
        );
        let (m, k) = (ta.shape[0], ta.shape[1]);
        let mut data = vec![0.0; m];
        for i in 0..m {
            let row = &ta.data[i * k..(i + 1) * k];
            data[i] = row.iter().zip(&tx.data).map(|(&a, &b)| a * b).sum();
        }
        self.push(Tensor::vector(data), Op::MatVec(a, x))
    }

    pub fn vecmat(&mut self, x: NodeId, a: NodeId) -> NodeId {
        let (tx, ta) = (&self.nodes[x.0].value, &self.nodes[a.0].value);
        assert!(
            tx.shape.len() == 1 && ta.shape.len() == 2 && tx.shape[0] == ta.shape[0],
            "vecmat: incompatible shapes {:?} vs {:?}",
            tx.shape,
            ta.shape
        );
        let (k, n) = (ta.shape[0], ta.shape[1]);
        let mut data = vec![0.0; n];
        for i in 0..k {
            let xv = tx.data[i];
            if xv == 0.0 {
                continue;
            }
            let row = &ta.data[i * n..(i + 1) * n];
            for j in 0..n {
                data[j] += xv * row[j];
            }
        }
        self.push(Tensor::vector(data), Op::VecMat(x, a))
    }

    /// Cosine similarity of two vectors, in [-1, 1].
    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> NodeId {
        check_same("cosine", &self.nodes[a.0].value, &self.nodes[b.0].value);
        for (name, id) in [("first", a), ("second", b)] {
            assert!(
                self.nodes[id.0].value.data.iter().any(|&v| v != 0.0),
                "cosine: {} argument is the zero vector",
                name
            );
        }
        let ab = self.dot(a, b);
        let aa = self.dot(a, a);
        let bb = self.dot(b, b);
        let na = self.sqrt(aa);
        let nb = self.sqrt(bb);
        let denom = self.mul(na, nb);
        self.div(ab, denom)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        check_same("dot", &self.nodes[a.0].value, &self.nodes[b.0].value);
        let s = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(&x, &y)| x * y)
            .sum();
        self.push(Tensor::scalar(s), Op::Dot(a, b))
    }

    /// Adds a vector to every row of a matrix.
    pub fn add_row_broadcast(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (tm, tv) = (&self.nodes[m.0].value, &self.nodes[v.0].value);
        assert!(
            tm.shape.len() == 2 && tv.shape.len() == 1 && tm.shape[1] == tv.shape[0],
            "add_row_broadcast: incompatible shapes {:?} vs {:?}",
            tm.shape,
            tv.shape
        );
        let (r, c) = (tm.shape[0], tm.shape[1]);
        let mut data = tm.data.clone();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += tv.data[j];
            }
        }
        self.push(Tensor::matrix(r, c, data), Op::AddRowBroadcast(m, v))
    }

    /// Multiplies row `i` of a matrix by `v[i]`.
    pub fn scale_rows(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (tm, tv) = (&self.nodes[m.0].value, &self.nodes[v.0].value);
        assert!(
            tm.shape.len() == 2 && tv.shape.len() == 1 && tm.shape[0] == tv.shape[0],
            "scale_rows: incompatible shapes {:?} vs {:?}",
            tm.shape,
            tv.shape
        );
        let (r, c) = (tm.shape[0], tm.shape[1]);
        let mut data = tm.data.clone();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] *= tv.data[i];
            }
        }
        self.push(Tensor::matrix(r, c, data), Op::ScaleRows(m, v))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let t = &self.nodes[x.0].value;
        assert_eq!(t.shape.len(), 1, "softmax: rank-{} operand {:?}", t.shape.len(), t.shape);
        let m = t.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut data: Vec<f64> = t.data.iter().map(|&v| (v - m).exp()).collect();
        let z: f64 = data.iter().sum();
        for v in &mut data {
            *v /= z;
        }
        self.push(Tensor::vector(data), Op::Softmax(x))
    }

    /// Softmax over the positions where `keep` is true; the rest get
    /// probability zero and pass no gradient.
    pub fn masked_softmax(&mut self, x: NodeId, keep: &[bool]) -> NodeId {
        let t = &self.nodes[x.0].value;
        assert_eq!(
            t.numel(),
            keep.len(),
            "masked_softmax: mask length {} vs operand {:?}",
            keep.len(),
            t.shape
        );
        assert!(keep.iter().any(|&k| k), "masked_softmax: all positions masked");
        let m = t
            .data
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut data = vec![0.0; t.numel()];
        let mut z = 0.0;
        for i in 0..t.numel() {
            if keep[i] {
                data[i] = (t.data[i] - m).exp();
                z += data[i];
            }
        }
        for v in &mut data {
            *v /= z;
        }
        self.push(Tensor::vector(data), Op::MaskedSoftmax { x, keep: keep.to_vec() })
    }

    /// Negative log-likelihood of `target` under `softmax(logits)`, fused for
    /// numerical stability.
    pub fn nll_from_logits(&mut self, logits: NodeId, target: usize) -> NodeId {
        let t = &self.nodes[logits.0].value;
        assert_eq!(t.shape.len(), 1, "nll: rank-{} operand {:?}", t.shape.len(), t.shape);
        assert!(
            target < t.numel(),
            "nll: target {} out of bounds for {:?}",
            target,
            t.shape
        );
        let m = t.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + t.data.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        let loss = lse - t.data[target];
        self.push(Tensor::scalar(loss), Op::NllFromLogits { logits, target })
    }

    /// Differentiable row fetch from an embedding matrix.
    pub fn lookup(&mut self, table: NodeId, row: usize) -> NodeId {
        let t = &self.nodes[table.0].value;
        assert!(
            t.shape.len() == 2 && row < t.shape[0],
            "lookup: row {} out of bounds for {:?}",
            row,
            t.shape
        );
        let data = t.row(row).to_vec();
        self.push(Tensor::vector(data), Op::Lookup { table, row })
    }

    /// Inverted dropout. Identity when `train` is false or `rate` is zero.
    pub fn dropout(&mut self, x: NodeId, rate: f64, train: bool, rng: &mut impl Rng) -> NodeId {
        if !train || rate == 0.0 {
            return x;
        }
        assert!((0.0..1.0).contains(&rate), "dropout: rate {} outside [0,1)", rate);
        let n = self.nodes[x.0].value.numel();
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let shape = self.nodes[x.0].value.shape.clone();
        let data = self.nodes[x.0]
            .value
            .data
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        self.push(Tensor { shape, data }, Op::Dropout { x, mask })
    }

    /// Gaussian window over `len` positions centred at the scalar `mu`:
    /// `p[j] = exp(-(j - mu)^2 / (2 sigma_sq))`.
    pub fn gaussian_window(&mut self, mu: NodeId, len: usize, sigma_sq: f64) -> NodeId {
        let t = &self.nodes[mu.0].value;
        assert!(t.is_scalar(), "gaussian_window: centre has shape {:?}", t.shape);
        let m = t.data[0];
        let data = (0..len)
            .map(|j| (-(j as f64 - m).powi(2) / (2.0 * sigma_sq)).exp())
            .collect();
        self.push(Tensor::vector(data), Op::GaussWindow { mu, len, sigma_sq })
    }

    /// `log` of the Gaussian window, computed directly so distant positions
    /// stay finite instead of passing through `log(0)`.
    pub fn log_gaussian_window(&mut self, mu: NodeId, len: usize, sigma_sq: f64) -> NodeId {
        let t = &self.nodes[mu.0].value;
        assert!(t.is_scalar(), "log_gaussian_window: centre has shape {:?}", t.shape);
        let m = t.data[0];
        let data = (0..len)
            .map(|j| -(j as f64 - m).powi(2) / (2.0 * sigma_sq))
            .collect();
        self.push(Tensor::vector(data), Op::LogGaussWindow { mu, len, sigma_sq })
    }

    fn add_grad(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: NodeId, f: impl FnOnce(&mut [f64])) {
        let slot = &mut grads[id.0];
        if slot.is_none() {
            *slot = Some(vec![0.0; nodes[id.0].value.numel()]);
        }
        f(slot.as_mut().unwrap());
    }

    /// Backpropagates from a scalar loss node. May be called once per graph.
    pub fn backward(&mut self, loss: NodeId) {
        assert!(!self.backward_done, "backward already run on this graph");
        self.backward_done = true;
        assert!(
            self.nodes[loss.0].value.is_scalar(),
            "backward: loss has shape {:?}, expected a scalar",
            self.nodes[loss.0].value.shape
        );

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let nodes = &self.nodes;
            let val = |id: NodeId| -> &Tensor { &nodes[id.0].value };
            let out = &nodes[i].value;
            match nodes[i].op.clone() {
                Op::Leaf => {}
                Op::Sigmoid(x) => Self::add_grad(&mut grads, nodes, x, |g| {
                    for (k, gk) in g.iter_mut().enumerate() {
                        let y = out.data[k];
                        *gk += gy[k] * y * (1.0 - y);
                    }
                }),
                Op::Tanh(x) => Self::add_grad(&mut grads, nodes, x, |g| {
                    for (k, gk) in g.iter_mut().enumerate() {
                        let y = out.data[k];
                        *gk += gy[k] * (1.0 - y * y);
                    }
                }),
                Op::Relu(x) => {
                    let xin = val(x).data.clone();
                    Self::add_grad(&mut grads, nodes, x, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            if xin[k] > 0.0 {
                                *gk += gy[k];
                            }
                        }
                    })
                }
                Op::Exp(x) => Self::add_grad(&mut grads, nodes, x, |g| {
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk += gy[k] * out.data[k];
                    }
                }),
                Op::Log(x) => {
                    let xin = val(x).data.clone();
                    Self::add_grad(&mut grads, nodes, x, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            // an input of exactly 0 only reaches here with 0
                            // incoming gradient (masked-out softmax slots);
                            // 0 * (1/0) must stay 0, not become NaN
                            if gy[k] != 0.0 {
                                *gk += gy[k] / xin[k];
                            }
                        }
                    })
                }
                Op::Sqrt(x) => Self::add_grad(&mut grads, nodes, x, |g| {
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk += gy[k] * 0.5 / out.data[k];
                    }
                }),
                Op::Scale(x, c) => Self::add_grad(&mut grads, nodes, x, |g| {
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk += gy[k] * c;
                    }
                }),
                Op::Shift(x) => Self::add_grad(&mut grads, nodes, x, |g| {
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk += gy[k];
                    }
                }),
                Op::Detach => {}
                Op::Softplus(x) => {
                    let xin = val(x).data.clone();
                    Self::add_grad(&mut grads, nodes, x, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk += gy[k] / (1.0 + (-xin[k]).exp());
                        }
                    })
                }
                Op::Add(a, b) => {
                    Self::add_grad(&mut grads, nodes, a, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk += gy[k];
                        }
                    });
                    Self::add_grad(&mut grads, nodes, b, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk += gy[k];
                        }
                    });
                }
                Op::Sub(a, b) => {
                    Self::add_grad(&mut grads, nodes, a, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk += gy[k];
                        }
                    });
                    Self::add_grad(&mut grads, nodes, b, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk -= gy[k];
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(a).data.clone(), val(b).data.clone());
                    Self::add_grad(&mut grads, nodes, a, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk += gy[k] * bv[k];
                        }
                    });
                    Self::add_grad(&mut grads, nodes, b, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk += gy[k] * av[k];
                        }
                    });
                }
                Op::Div(a, b) => {
                    let bv = val(b).data.clone();
                    let yv = out.data.clone();
                    Self::add_grad(&mut grads, nodes, a, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk += gy[k] / bv[k];
                        }
                    });
                    Self::add_grad(&mut grads, nodes, b, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk -= gy[k] * yv[k] / bv[k];
                        }
                    });
                }
                Op::MinElem(a, b) | Op::MaxElem(a, b) => {
                    let take_a: Vec<bool> = {
                        let (av, bv) = (&val(a).data, &val(b).data);
                        let is_min = matches!(nodes[i].op, Op::MinElem(..));
                        av.iter()
                            .zip(bv.iter())
                            .map(|(&x, &y)| if is_min { x <= y } else { x >= y })
                            .collect()
                    };
                    Self::add_grad(&mut grads, nodes, a, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            if take_a[k] {
                                *gk += gy[k];
                            }
                        }
                    });
                    Self::add_grad(&mut grads, nodes, b, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            if !take_a[k] {
                                *gk += gy[k];
                            }
                        }
                    });
                }
                Op::Sum(x) => Self::add_grad(&mut grads, nodes, x, |g| {
                    for gk in g.iter_mut() {
                        *gk += gy[0];
                    }
                }),
                Op::Mean(x) => {
                    let n = val(x).numel() as f64;
                    Self::add_grad(&mut grads, nodes, x, |g| {
                        for gk in g.iter_mut() {
                            *gk += gy[0] / n;
                        }
                    })
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = val(p).numel();
                        let seg = gy[off..off + n].to_vec();
                        Self::add_grad(&mut grads, nodes, p, |g| {
                            for (k, gk) in g.iter_mut().enumerate() {
                                *gk += seg[k];
                            }
                        });
                        off += n;
                    }
                }
                Op::Slice { x, off, len } => Self::add_grad(&mut grads, nodes, x, |g| {
                    for k in 0..len {
                        g[off + k] += gy[k];
                    }
                }),
                Op::StackRows(rows) => {
                    let cols = out.cols();
                    for (r, p) in rows.into_iter().enumerate() {
                        let seg = gy[r * cols..(r + 1) * cols].to_vec();
                        Self::add_grad(&mut grads, nodes, p, |g| {
                            for (k, gk) in g.iter_mut().enumerate() {
                                *gk += seg[k];
                            }
                        });
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(a).clone(), val(b).clone());
                    let (m, k, n) = (av.shape[0], av.shape[1], bv.shape[1]);
                    Self::add_grad(&mut grads, nodes, a, |g| {
                        for i2 in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += gy[i2 * n + j] * bv.data[p * n + j];
                                }
                                g[i2 * k + p] += s;
                            }
                        }
                    });
                    Self::add_grad(&mut grads, nodes, b, |g| {
                        for p in 0..k {
                            for j in 0..n {
                                let mut s = 0.0;
                                for i2 in 0..m {
                                    s += av.data[i2 * k + p] * gy[i2 * n + j];
                                }
                                g[p * n + j] += s;
                            }
                        }
                    });
                }
                Op::MatVec(a, x) => {
                    let (av, xv) = (val(a).clone(), val(x).data.clone());
                    let (m, k) = (av.shape[0], av.shape[1]);
                    Self::add_grad(&mut grads, nodes, a, |g| {
                        for i2 in 0..m {
                            for j in 0..k {
                                g[i2 * k + j] += gy[i2] * xv[j];
                            }
                        }
                    });
                    Self::add_grad(&mut grads, nodes, x, |g| {
                        for j in 0..k {
                            let mut s = 0.0;
                            for i2 in 0..m {
                                s += gy[i2] * av.data[i2 * k + j];
                            }
                            g[j] += s;
                        }
                    });
                }
                Op::VecMat(x, a) => {
                    let (xv, av) = (val(x).data.clone(), val(a).clone());
                    let (k, n) = (av.shape[0], av.shape[1]);
                    Self::add_grad(&mut grads, nodes, x, |g| {
                        for i2 in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += gy[j] * av.data[i2 * n + j];
                            }
                            g[i2] += s;
                        }
                    });
                    Self::add_grad(&mut grads, nodes, a, |g| {
                        for i2 in 0..k {
                            for j in 0..n {
                                g[i2 * n + j] += xv[i2] * gy[j];
                            }
                        }
                    });
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (val(a).data.clone(), val(b).data.clone());
                    Self::add_grad(&mut grads, nodes, a, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk += gy[0] * bv[k];
                        }
                    });
                    Self::add_grad(&mut grads, nodes, b, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk += gy[0] * av[k];
                        }
                    });
                }
                Op::AddRowBroadcast(m, v) => {
                    let (r, c) = (out.shape[0], out.shape[1]);
                    Self::add_grad(&mut grads, nodes, m, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk += gy[k];
                        }
                    });
                    Self::add_grad(&mut grads, nodes, v, |g| {
                        for i2 in 0..r {
                            for j in 0..c {
                                g[j] += gy[i2 * c + j];
                            }
                        }
                    });
                }
                Op::ScaleRows(m, v) => {
                    let (mv, vv) = (val(m).clone(), val(v).data.clone());
                    let (r, c) = (mv.shape[0], mv.shape[1]);
                    Self::add_grad(&mut grads, nodes, m, |g| {
                        for i2 in 0..r {
                            for j in 0..c {
                                g[i2 * c + j] += gy[i2 * c + j] * vv[i2];
                            }
                        }
                    });
                    Self::add_grad(&mut grads, nodes, v, |g| {
                        for i2 in 0..r {
                            let mut s = 0.0;
                            for j in 0..c {
                                s += gy[i2 * c + j] * mv.data[i2 * c + j];
                            }
                            g[i2] += s;
                        }
                    });
                }
                Op::Softmax(x) => {
                    let y = out.data.clone();
                    let dotp: f64 = gy.iter().zip(&y).map(|(&g, &p)| g * p).sum();
                    Self::add_grad(&mut grads, nodes, x, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            *gk += y[k] * (gy[k] - dotp);
                        }
                    });
                }
                Op::MaskedSoftmax { x, keep } => {
                    let y = out.data.clone();
                    let dotp: f64 = gy.iter().zip(&y).map(|(&g, &p)| g * p).sum();
                    Self::add_grad(&mut grads, nodes, x, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            if keep[k] {
                                *gk += y[k] * (gy[k] - dotp);
                            }
                        }
                    });
                }
                Op::NllFromLogits { logits, target } => {
                    let z = val(logits).data.clone();
                    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    Self::add_grad(&mut grads, nodes, logits, |g| {
                        for (k, gk) in g.iter_mut().enumerate() {
                            let p = exps[k] / sum;
                            let delta = if k == target { 1.0 } else { 0.0 };
                            *gk += gy[0] * (p - delta);
                        }
                    });
                }
                Op::Lookup { table, row } => {
                    let c = val(table).cols();
                    Self::add_grad(&mut grads, nodes, table, |g| {
                        for k in 0..c {
                            g[row * c + k] += gy[k];
                        }
                    });
                }
                Op::Dropout { x, mask } => Self::add_grad(&mut grads, nodes, x, |g| {
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk += gy[k] * mask[k];
                    }
                }),
                Op::GaussWindow { mu, len, sigma_sq } => {
                    let m = val(mu).data[0];
                    let p = out.data.clone();
                    Self::add_grad(&mut grads, nodes, mu, |g| {
                        let mut s = 0.0;
                        for j in 0..len {
                            s += gy[j] * p[j] * (j as f64 - m) / sigma_sq;
                        }
                        g[0] += s;
                    });
                }
                Op::LogGaussWindow { mu, len, sigma_sq } => {
                    let m = val(mu).data[0];
                    Self::add_grad(&mut grads, nodes, mu, |g| {
                        let mut s = 0.0;
                        for j in 0..len {
                            s += gy[j] * (j as f64 - m) / sigma_sq;
                        }
                        g[0] += s;
                    });
                }
            }
            self.nodes[i].grad = Some(gy);
        }
    }
}

//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! Operations execute eagerly: each builder method validates shapes, runs the
//! forward kernel, and appends a node recording the operation and its inputs.
//! The node list is already a topological order, so the backward pass is a
//! single reverse sweep. Gradients accumulate in one fixed order, which makes
//! whole training runs bit-reproducible for a given seed.
//!
//! Stochastic pieces (reparameterization noise, dropout masks) enter the graph
//! as constant leaves. `recompute_forward` then replays the tape exactly,
//! which is what finite-difference checking needs: perturb a leaf, replay,
//! read the loss.

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{fl, lane_sum, Real, Tensor};

pub type NodeId = usize;

/// Recorded operation. Fields are input node ids plus immediate attributes.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// x (b,i) * w (i,o) + bias (o)
    Affine { x: NodeId, w: NodeId, b: NodeId },
    /// a (m,k) * b (k,n)
    Matmul { a: NodeId, b: NodeId },
    /// Same-padding stride-1 convolution; x (b,ci,h,w), w (co,ci,k,k), bias (co).
    Conv2d { x: NodeId, w: NodeId, b: NodeId },
    /// 2x2 max pooling with stride 2.
    MaxPool2x2 { x: NodeId },
    Elu { x: NodeId },
    Sigmoid { x: NodeId },
    Exp { x: NodeId },
    Ln { x: NodeId },
    Softplus { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    AddScalar { x: NodeId, c: f64 },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    /// Columns [start, end) of a 2-d tensor.
    SliceCols { x: NodeId, start: usize, end: usize },
    Reshape { x: NodeId },
    Sum { x: NodeId },
    Mean { x: NodeId },
    /// Element-wise softplus(l) - l*t; targets carry no gradient (data).
    BernoulliCe { logits: NodeId, targets: NodeId },
    /// Per-row logsumexp(logits) - logits[class]; classes are data.
    SoftmaxCe { logits: NodeId, classes: Vec<usize> },
    /// mean + exp(log_std) * eps; eps is a recorded constant, no gradient.
    Reparam { mean: NodeId, log_std: NodeId, eps: NodeId },
    /// Per-row log density of z under a diagonal-Gaussian mixture.
    GmmLogDensity { z: NodeId, means: NodeId, log_stds: NodeId, logits: NodeId },
}

/// Forward-pass byproducts the backward pass reuses.
#[derive(Debug, Clone)]
enum Aux<F> {
    None,
    /// Flat input index of each pooling window maximum.
    ArgMax(Vec<u32>),
    /// Mixture responsibilities, row-major (batch, components).
    Resp(Vec<F>),
}

#[derive(Debug)]
struct Node<F: Real> {
    op: Op,
    value: Tensor<F>,
    aux: Aux<F>,
}

/// Gradients for registered parameters, in registration order.
/// Parameters the loss never touched get zero tensors.
#[derive(Debug, Clone)]
pub struct Gradients<F: Real> {
    entries: Vec<(String, Tensor<F>)>,
}

impl<F: Real> Gradients<F> {
    pub fn entries(&self) -> &[(String, Tensor<F>)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn into_entries(self) -> Vec<(String, Tensor<F>)> {
        self.entries
    }

    /// Assemble from named tensors directly (mutation tests, aggregation).
    pub fn from_entries(entries: Vec<(String, Tensor<F>)>) -> Self {
        Gradients { entries }
    }
}

/// Append-only computation tape.
pub struct Graph<F: Real> {
    nodes: Vec<Node<F>>,
    /// (name, node) in registration order; names are unique.
    params: Vec<(String, NodeId)>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), params: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id].value
    }

    /// Data leaf: recorded inputs, noise draws, dropout masks.
    pub fn constant(&mut self, value: Tensor<F>) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: "constant".into(), context: "leaf value".into() });
        }
        Ok(self.push(Op::Leaf, value, Aux::None))
    }

    /// Trainable leaf. Names must be unique within a graph.
    pub fn param(&mut self, name: &str, value: Tensor<F>) -> Result<NodeId> {
        if self.params.iter().any(|(n, _)| n == name) {
            return Err(Error::InvalidArg(format!("duplicate parameter name {name:?}")));
        }
        if !value.all_finite() {
            return Err(Error::NonFinite { op: "param".into(), context: format!("parameter {name:?}") });
        }
        let id = self.push(Op::Leaf, value, Aux::None);
        self.params.push((name.to_string(), id));
        Ok(id)
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|(n, _)| n.as_str())
    }

    pub fn param_node_id(&self, name: &str) -> Option<NodeId> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, id)| *id)
    }

    /// Mutable access to a leaf's value, for finite-difference probing.
    pub fn leaf_value_mut(&mut self, id: NodeId) -> Result<&mut Tensor<F>> {
        match self.nodes[id].op {
            Op::Leaf => Ok(&mut self.nodes[id].value),
            _ => Err(Error::InvalidArg(format!("node {id} is not a leaf"))),
        }
    }

    fn push(&mut self, op: Op, value: Tensor<F>, aux: Aux<F>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { op, value, aux });
        id
    }

    fn apply(&mut self, op: Op) -> Result<NodeId> {
        let (value, aux) = self.eval(&op)?;
        Ok(self.push(op, value, aux))
    }

    // ---- operation builders -------------------------------------------------

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Affine { x, w, b })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Matmul { a, b })
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Conv2d { x, w, b })
    }

    pub fn maxpool2x2(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::MaxPool2x2 { x })
    }

    pub fn elu(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Elu { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Sigmoid { x })
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Exp { x })
    }

    pub fn ln(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Ln { x })
    }

    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Softplus { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Mul { a, b })
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Op::Scale { x, c })
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Op::AddScalar { x, c })
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        if !(lo < hi) {
            return Err(Error::InvalidArg(format!("clamp bounds [{lo}, {hi}] are not ordered")));
        }
        self.apply(Op::Clamp { x, lo, hi })
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        self.apply(Op::SliceCols { x, start, end })
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let len: usize = shape.iter().product();
        if len != self.nodes[x].value.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch {
                op: "reshape".into(),
                detail: format!("cannot view {:?} as {:?}", self.nodes[x].value.shape(), shape),
            });
        }
        let id = self.apply(Op::Reshape { x })?;
        self.nodes[id].value.set_shape(shape.to_vec());
        Ok(id)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum { x })
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Mean { x })
    }

    /// Element-wise cross-entropy of Bernoulli targets against logits:
    /// softplus(l) - l * t. Targets must be exactly 0 or 1 and get no gradient.
    pub fn bernoulli_ce(&mut self, logits: NodeId, targets: NodeId) -> Result<NodeId> {
        self.apply(Op::BernoulliCe { logits, targets })
    }

    /// Per-row cross-entropy of integer classes against logits (b, k):
    /// logsumexp(row) - row[class]. Output shape (b).
    pub fn softmax_ce(&mut self, logits: NodeId, classes: &[usize]) -> Result<NodeId> {
        self.apply(Op::SoftmaxCe { logits, classes: classes.to_vec() })
    }

    /// z = mean + exp(log_std) * eps with eps a recorded constant, so the
    /// pathwise gradient is exact: dz/dmean = 1, dz/dlog_std = exp(log_std)*eps.
    pub fn reparam_sample(&mut self, mean: NodeId, log_std: NodeId, eps: NodeId) -> Result<NodeId> {
        self.apply(Op::Reparam { mean, log_std, eps })
    }

    /// Row-wise log m(z) for a diagonal-Gaussian mixture with softmax weights.
    /// z (b,l), means (m,l), log_stds (m,l), logits (m); output (b).
    pub fn gmm_log_density(
        &mut self,
        z: NodeId,
        means: NodeId,
        log_stds: NodeId,
        logits: NodeId,
    ) -> Result<NodeId> {
        self.apply(Op::GmmLogDensity { z, means, log_stds, logits })
    }

    // ---- forward evaluation --------------------------------------------------

    fn eval(&self, op: &Op) -> Result<(Tensor<F>, Aux<F>)> {
        let v = |id: NodeId| &self.nodes[id].value;
        let shape_err =
            |opname: &'static str, detail: String| Error::ShapeMismatch { op: opname.into(), detail };
        let out = match op {
            Op::Leaf => unreachable!("leaves are never re-evaluated"),
            Op::Affine { x, w, b } => {
                let (xv, wv, bv) = (v(*x), v(*w), v(*b));
                let (bs, i) = (xv.rows(), xv.cols());
                if wv.shape().len() != 2 || wv.shape()[0] != i {
                    return Err(shape_err("affine", format!("x {:?} w {:?}", xv.shape(), wv.shape())));
                }
                let o = wv.shape()[1];
                if bv.shape() != [o] {
                    return Err(shape_err("affine", format!("bias {:?}, expected [{o}]", bv.shape())));
                }
                let mut out = vec![F::zero(); bs * o];
                for r in 0..bs {
                    out[r * o..(r + 1) * o].copy_from_slice(bv.data());
                }
                kernels::matmul_nn_acc(xv.data(), wv.data(), bs, i, o, &mut out);
                (Tensor::new(vec![bs, o], out)?, Aux::None)
            }
            Op::Matmul { a, b } => {
                let (av, bv) = (v(*a), v(*b));
                let (m, k) = (av.rows(), av.cols());
                if bv.shape().len() != 2 || bv.shape()[0] != k {
                    return Err(shape_err("matmul", format!("a {:?} b {:?}", av.shape(), bv.shape())));
                }
                let n = bv.shape()[1];
                let mut out = vec![F::zero(); m * n];
                kernels::matmul_nn_acc(av.data(), bv.data(), m, k, n, &mut out);
                (Tensor::new(vec![m, n], out)?, Aux::None)
            }
            Op::Conv2d { x, w, b } => {
                let (xv, wv, bv) = (v(*x), v(*w), v(*b));
                let xs = xv.shape();
                let ws = wv.shape();
                if xs.len() != 4 || ws.len() != 4 {
                    return Err(shape_err("conv2d", format!("x {xs:?} w {ws:?}")));
                }
                let (bs, ci, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
                let (co, k) = (ws[0], ws[3]);
                if ws[1] != ci || ws[2] != k || k % 2 == 0 {
                    return Err(shape_err("conv2d", format!("kernel {ws:?} for input {xs:?}")));
                }
                if bv.shape() != [co] {
                    return Err(shape_err("conv2d", format!("bias {:?}, expected [{co}]", bv.shape())));
                }
                let mut out = vec![F::zero(); bs * co * h * wd];
                kernels::conv2d_forward(xv.data(), wv.data(), bv.data(), bs, ci, h, wd, co, k, &mut out);
                (Tensor::new(vec![bs, co, h, wd], out)?, Aux::None)
            }
            Op::MaxPool2x2 { x } => {
                let xv = v(*x);
                let xs = xv.shape();
                if xs.len() != 4 || xs[2] < 2 || xs[3] < 2 {
                    return Err(shape_err("maxpool2x2", format!("input {xs:?}")));
                }
                let (bs, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
                let (h2, w2) = (h / 2, wd / 2);
                let mut out = vec![F::zero(); bs * c * h2 * w2];
                let mut argmax = Vec::new();
                kernels::maxpool2x2_forward(xv.data(), bs, c, h, wd, &mut out, &mut argmax);
                (Tensor::new(vec![bs, c, h2, w2], out)?, Aux::ArgMax(argmax))
            }
            Op::Elu { x } => {
                let xv = v(*x);
                let one = F::one();
                let data = xv.data().iter().map(|&t| if t > F::zero() { t } else { t.exp() - one }).collect();
                (Tensor::new(xv.shape().to_vec(), data)?, Aux::None)
            }
            Op::Sigmoid { x } => {
                let xv = v(*x);
                let data = xv.data().iter().map(|&t| sigmoid(t)).collect();
                (Tensor::new(xv.shape().to_vec(), data)?, Aux::None)
            }
            Op::Exp { x } => {
                let xv = v(*x);
                let data = xv.data().iter().map(|&t| t.exp()).collect();
                (Tensor::new(xv.shape().to_vec(), data)?, Aux::None)
            }
            Op::Ln { x } => {
                let xv = v(*x);
                let data = xv.data().iter().map(|&t| t.ln()).collect();
                (Tensor::new(xv.shape().to_vec(), data)?, Aux::None)
            }
            Op::Softplus { x } => {
                let xv = v(*x);
                let data = xv.data().iter().map(|&t| softplus(t)).collect();
                (Tensor::new(xv.shape().to_vec(), data)?, Aux::None)
            }
            Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => {
                let (av, bv) = (v(*a), v(*b));
                if av.shape() != bv.shape() {
                    let name = match op {
                        Op::Add { .. } => "add",
                        Op::Sub { .. } => "sub",
                        _ => "mul",
                    };
                    return Err(shape_err(name, format!("{:?} vs {:?}", av.shape(), bv.shape())));
                }
                let data = av
                    .data()
                    .iter()
                    .zip(bv.data())
                    .map(|(&x, &y)| match op {
                        Op::Add { .. } => x + y,
                        Op::Sub { .. } => x - y,
                        _ => x * y,
                    })
                    .collect();
                (Tensor::new(av.shape().to_vec(), data)?, Aux::None)
            }
            Op::Scale { x, c } => {
                let xv = v(*x);
                let c = fl::<F>(*c);
                let data = xv.data().iter().map(|&t| t * c).collect();
                (Tensor::new(xv.shape().to_vec(), data)?, Aux::None)
            }
            Op::AddScalar { x, c } => {
                let xv = v(*x);
                let c = fl::<F>(*c);
                let data = xv.data().iter().map(|&t| t + c).collect();
                (Tensor::new(xv.shape().to_vec(), data)?, Aux::None)
            }
            Op::Clamp { x, lo, hi } => {
                let xv = v(*x);
                let (lo, hi) = (fl::<F>(*lo), fl::<F>(*hi));
                let data = xv
                    .data()
                    .iter()
                    .map(|&t| if t < lo { lo } else if t > hi { hi } else { t })
                    .collect();
                (Tensor::new(xv.shape().to_vec(), data)?, Aux::None)
            }
            Op::SliceCols { x, start, end } => {
                let xv = v(*x);
                if xv.shape().len() != 2 || *start >= *end || *end > xv.cols() {
                    return Err(shape_err(
                        "slice_cols",
                        format!("[{start}, {end}) of {:?}", xv.shape()),
                    ));
                }
                let (r, c) = (xv.rows(), xv.cols());
                let w = end - start;
                let mut data = Vec::with_capacity(r * w);
                for i in 0..r {
                    data.extend_from_slice(&xv.data()[i * c + start..i * c + end]);
                }
                (Tensor::new(vec![r, w], data)?, Aux::None)
            }
            Op::Reshape { x } => {
                // Shape is fixed up by the builder; value is a plain copy.
                (v(*x).clone(), Aux::None)
            }
            Op::Sum { x } => {
                let xv = v(*x);
                (Tensor::scalar(lane_sum(xv.data())), Aux::None)
            }
            Op::Mean { x } => {
                let xv = v(*x);
                let n = fl::<F>(xv.len() as f64);
                (Tensor::scalar(lane_sum(xv.data()) / n), Aux::None)
            }
            Op::BernoulliCe { logits, targets } => {
                let (lv, tv) = (v(*logits), v(*targets));
                if lv.shape() != tv.shape() {
                    return Err(shape_err(
                        "bernoulli_ce",
                        format!("logits {:?} targets {:?}", lv.shape(), tv.shape()),
                    ));
                }
                if tv.data().iter().any(|&t| t != F::zero() && t != F::one()) {
                    return Err(Error::InvalidArg("bernoulli_ce targets must be exactly 0 or 1".into()));
                }
                let data = lv
                    .data()
                    .iter()
                    .zip(tv.data())
                    .map(|(&l, &t)| softplus(l) - l * t)
                    .collect();
                (Tensor::new(lv.shape().to_vec(), data)?, Aux::None)
            }
            Op::SoftmaxCe { logits, classes } => {
                let lv = v(*logits);
                if lv.shape().len() != 2 || classes.len() != lv.rows() {
                    return Err(shape_err(
                        "softmax_ce",
                        format!("logits {:?} with {} classes", lv.shape(), classes.len()),
                    ));
                }
                let k = lv.cols();
                if let Some(&bad) = classes.iter().find(|&&c| c >= k) {
                    return Err(Error::InvalidArg(format!("class index {bad} out of range for {k} classes")));
                }
                let mut data = Vec::with_capacity(lv.rows());
                for (r, &cls) in classes.iter().enumerate() {
                    let row = &lv.data()[r * k..(r + 1) * k];
                    data.push(log_sum_exp(row) - row[cls]);
                }
                (Tensor::new(vec![lv.rows()], data)?, Aux::None)
            }
            Op::Reparam { mean, log_std, eps } => {
                let (mv, sv, ev) = (v(*mean), v(*log_std), v(*eps));
                if mv.shape() != sv.shape() || mv.shape() != ev.shape() {
                    return Err(shape_err(
                        "reparam_sample",
                        format!("mean {:?} log_std {:?} eps {:?}", mv.shape(), sv.shape(), ev.shape()),
                    ));
                }
                let data = mv
                    .data()
                    .iter()
                    .zip(sv.data())
                    .zip(ev.data())
                    .map(|((&m, &s), &e)| m + s.exp() * e)
                    .collect();
                (Tensor::new(mv.shape().to_vec(), data)?, Aux::None)
            }
            Op::GmmLogDensity { z, means, log_stds, logits } => {
                let (zv, mv, sv, wv) = (v(*z), v(*means), v(*log_stds), v(*logits));
                if zv.shape().len() != 2 || mv.shape().len() != 2 {
                    return Err(shape_err("gmm_log_density", format!("z {:?} means {:?}", zv.shape(), mv.shape())));
                }
                let (b, l) = (zv.rows(), zv.cols());
                let m = mv.rows();
                if mv.cols() != l || sv.shape() != [m, l] || wv.shape() != [m] {
                    return Err(shape_err(
                        "gmm_log_density",
                        format!(
                            "z {:?} means {:?} log_stds {:?} logits {:?}",
                            zv.shape(),
                            mv.shape(),
                            sv.shape(),
                            wv.shape()
                        ),
                    ));
                }
                let log_w = log_softmax(wv.data());
                let half_ln_2pi = fl::<F>(0.5 * (2.0 * std::f64::consts::PI).ln());
                let half = fl::<F>(0.5);
                let mut out = Vec::with_capacity(b);
                let mut resp = vec![F::zero(); b * m];
                let mut comp = vec![F::zero(); m];
                for bi in 0..b {
                    let zrow = &zv.data()[bi * l..(bi + 1) * l];
                    for j in 0..m {
                        let mrow = &mv.data()[j * l..(j + 1) * l];
                        let srow = &sv.data()[j * l..(j + 1) * l];
                        let mut acc = log_w[j];
                        for d in 0..l {
                            let inv = (-srow[d]).exp();
                            let t = (zrow[d] - mrow[d]) * inv;
                            acc = acc - half_ln_2pi - srow[d] - half * t * t;
                        }
                        comp[j] = acc;
                    }
                    let lse = log_sum_exp(&comp);
                    out.push(lse);
                    for j in 0..m {
                        resp[bi * m + j] = (comp[j] - lse).exp();
                    }
                }
                (Tensor::new(vec![b], out)?, Aux::Resp(resp))
            }
        };
        if !out.0.all_finite() {
            return Err(Error::NonFinite { op: op_name(op).into(), context: "forward output".into() });
        }
        Ok(out)
    }

    /// Replay every non-leaf node in tape order, refreshing values and aux
    /// data. Leaf values (including recorded noise) are left untouched, so a
    /// replay after perturbing one leaf is a deterministic function evaluation.
    pub fn recompute_forward(&mut self) -> Result<()> {
        for id in 0..self.nodes.len() {
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            let op = self.nodes[id].op.clone();
            let shape = self.nodes[id].value.shape().to_vec();
            let (mut value, aux) = self.eval(&op)?;
            if matches!(op, Op::Reshape { .. }) {
                value.set_shape(shape);
            }
            self.nodes[id].value = value;
            self.nodes[id].aux = aux;
        }
        Ok(())
    }

    // ---- backward ------------------------------------------------------------

    /// Reverse sweep from a scalar loss. Adjoints accumulate in tape order,
    /// each node distributing to its inputs exactly once, so results are
    /// bit-identical across runs.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients<F>> {
        if !self.nodes[loss].value.is_scalar() {
            return Err(Error::InvalidArg(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss].value.shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<F>>> = vec![None; n];
        grads[loss] = Some(vec![F::one()]);

        for id in (0..n).rev() {
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    op: op_name(&self.nodes[id].op).into(),
                    context: format!("adjoint of node {id}"),
                });
            }
            self.push_adjoint(id, &g, &mut grads)?;
        }

        let mut entries = Vec::with_capacity(self.params.len());
        for (name, pid) in &self.params {
            let shape = self.nodes[*pid].value.shape().to_vec();
            let data = match grads[*pid].take() {
                Some(g) => {
                    if g.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite {
                            op: "backward".into(),
                            context: format!("gradient of parameter {name:?}"),
                        });
                    }
                    g
                }
                None => vec![F::zero(); self.nodes[*pid].value.len()],
            };
            entries.push((name.clone(), Tensor::new(shape, data)?));
        }
        Ok(Gradients { entries })
    }

    /// Distribute the adjoint `g` of node `id` into its inputs' buffers.
    fn push_adjoint(&self, id: NodeId, g: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        // Two-phase borrow: read input values from &self, then write buffers.
        let val = |nid: NodeId| &self.nodes[nid].value;
        macro_rules! sink {
            ($nid:expr) => {
                grads[$nid].get_or_insert_with(|| vec![F::zero(); self.nodes[$nid].value.len()])
            };
        }
        match &self.nodes[id].op {
            Op::Leaf => unreachable!(),
            Op::Affine { x, w, b } => {
                let (bs, i) = (val(*x).rows(), val(*x).cols());
                let o = val(*w).shape()[1];
                {
                    let dx = sink!(*x);
                    kernels::matmul_nt_acc(g, val(*w).data(), bs, o, i, dx);
                }
                {
                    let dw = sink!(*w);
                    kernels::matmul_tn_acc(val(*x).data(), g, i, bs, o, dw);
                }
                let db = sink!(*b);
                for r in 0..bs {
                    for (d, &gv) in db.iter_mut().zip(&g[r * o..(r + 1) * o]) {
                        *d = *d + gv;
                    }
                }
            }
            Op::Matmul { a, b } => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let nn = val(*b).shape()[1];
                {
                    let da = sink!(*a);
                    kernels::matmul_nt_acc(g, val(*b).data(), m, nn, k, da);
                }
                let db = sink!(*b);
                kernels::matmul_tn_acc(val(*a).data(), g, k, m, nn, db);
            }
            Op::Conv2d { x, w, b } => {
                let xs = val(*x).shape().to_vec();
                let ws = val(*w).shape().to_vec();
                let (bs, ci, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
                let (co, k) = (ws[0], ws[3]);
                {
                    let dx = sink!(*x);
                    kernels::conv2d_backward_input_acc(g, val(*w).data(), bs, ci, h, wd, co, k, dx);
                }
                // dw and db accumulate in one pass; split the two sinks safely.
                let mut dwbuf = vec![F::zero(); val(*w).len()];
                let mut dbbuf = vec![F::zero(); val(*b).len()];
                kernels::conv2d_backward_params_acc(
                    g,
                    val(*x).data(),
                    bs,
                    ci,
                    h,
                    wd,
                    co,
                    k,
                    &mut dwbuf,
                    &mut dbbuf,
                );
                {
                    let dw = sink!(*w);
                    for (d, v) in dw.iter_mut().zip(&dwbuf) {
                        *d = *d + *v;
                    }
                }
                let db = sink!(*b);
                for (d, v) in db.iter_mut().zip(&dbbuf) {
                    *d = *d + *v;
                }
            }
            Op::MaxPool2x2 { x } => {
                let argmax = match &self.nodes[id].aux {
                    Aux::ArgMax(a) => a,
                    _ => unreachable!("maxpool node without argmax"),
                };
                let dx = sink!(*x);
                kernels::maxpool2x2_backward_acc(g, argmax, dx);
            }
            Op::Elu { x } => {
                let one = F::one();
                let dx = sink!(*x);
                for ((d, &gv), (&xv, &yv)) in dx
                    .iter_mut()
                    .zip(g)
                    .zip(val(*x).data().iter().zip(self.nodes[id].value.data()))
                {
                    // For x <= 0 the output is exp(x) - 1, so the slope is output + 1.
                    let slope = if xv > F::zero() { one } else { yv + one };
                    *d = *d + gv * slope;
                }
            }
            Op::Sigmoid { x } => {
                let one = F::one();
                let dx = sink!(*x);
                for ((d, &gv), &yv) in dx.iter_mut().zip(g).zip(self.nodes[id].value.data()) {
                    *d = *d + gv * yv * (one - yv);
                }
            }
            Op::Exp { x } => {
                let dx = sink!(*x);
                for ((d, &gv), &yv) in dx.iter_mut().zip(g).zip(self.nodes[id].value.data()) {
                    *d = *d + gv * yv;
                }
            }
            Op::Ln { x } => {
                let dx = sink!(*x);
                for ((d, &gv), &xv) in dx.iter_mut().zip(g).zip(val(*x).data()) {
                    *d = *d + gv / xv;
                }
            }
            Op::Softplus { x } => {
                let dx = sink!(*x);
                for ((d, &gv), &xv) in dx.iter_mut().zip(g).zip(val(*x).data()) {
                    *d = *d + gv * sigmoid(xv);
                }
            }
            Op::Add { a, b } => {
                {
                    let da = sink!(*a);
                    for (d, &gv) in da.iter_mut().zip(g) {
                        *d = *d + gv;
                    }
                }
                let db = sink!(*b);
                for (d, &gv) in db.iter_mut().zip(g) {
                    *d = *d + gv;
                }
            }
            Op::Sub { a, b } => {
                {
                    let da = sink!(*a);
                    for (d, &gv) in da.iter_mut().zip(g) {
                        *d = *d + gv;
                    }
                }
                let db = sink!(*b);
                for (d, &gv) in db.iter_mut().zip(g) {
                    *d = *d - gv;
                }
            }
            Op::Mul { a, b } => {
                {
                    let da = sink!(*a);
                    for ((d, &gv), &bv) in da.iter_mut().zip(g).zip(val(*b).data()) {
                        *d = *d + gv * bv;
                    }
                }
                let db = sink!(*b);
                for ((d, &gv), &av) in db.iter_mut().zip(g).zip(val(*a).data()) {
                    *d = *d + gv * av;
                }
            }
            Op::Scale { x, c } => {
                let c = fl::<F>(*c);
                let dx = sink!(*x);
                for (d, &gv) in dx.iter_mut().zip(g) {
                    *d = *d + gv * c;
                }
            }
            Op::AddScalar { x, .. } => {
                let dx = sink!(*x);
                for (d, &gv) in dx.iter_mut().zip(g) {
                    *d = *d + gv;
                }
            }
            Op::Clamp { x, lo, hi } => {
                let (lo, hi) = (fl::<F>(*lo), fl::<F>(*hi));
                let dx = sink!(*x);
                for ((d, &gv), &xv) in dx.iter_mut().zip(g).zip(val(*x).data()) {
                    if xv > lo && xv < hi {
                        *d = *d + gv;
                    }
                }
            }
            Op::SliceCols { x, start, .. } => {
                let c = val(*x).cols();
                let w = self.nodes[id].value.cols();
                let rows = val(*x).rows();
                let dx = sink!(*x);
                for r in 0..rows {
                    for j in 0..w {
                        dx[r * c + start + j] = dx[r * c + start + j] + g[r * w + j];
                    }
                }
            }
            Op::Reshape { x } => {
                let dx = sink!(*x);
                for (d, &gv) in dx.iter_mut().zip(g) {
                    *d = *d + gv;
                }
            }
            Op::Sum { x } => {
                let gv = g[0];
                let dx = sink!(*x);
                for d in dx.iter_mut() {
                    *d = *d + gv;
                }
            }
            Op::Mean { x } => {
                let gv = g[0] / fl::<F>(val(*x).len() as f64);
                let dx = sink!(*x);
                for d in dx.iter_mut() {
                    *d = *d + gv;
                }
            }
            Op::BernoulliCe { logits, targets } => {
                // d/dl [softplus(l) - l t] = sigmoid(l) - t; targets are data.
                let tv = val(*targets).data();
                let lv = val(*logits).data();
                let dl = sink!(*logits);
                for i in 0..g.len() {
                    dl[i] = dl[i] + g[i] * (sigmoid(lv[i]) - tv[i]);
                }
            }
            Op::SoftmaxCe { logits, classes } => {
                // d/dl = softmax(l) - onehot(class), scaled by the row adjoint.
                let lv = val(*logits);
                let k = lv.cols();
                let dl = sink!(*logits);
                for (r, &cls) in classes.iter().enumerate() {
                    let row = &lv.data()[r * k..(r + 1) * k];
                    let lse = log_sum_exp(row);
                    let gr = g[r];
                    for j in 0..k {
                        let p = (row[j] - lse).exp();
                        let delta = if j == cls { F::one() } else { F::zero() };
                        dl[r * k + j] = dl[r * k + j] + gr * (p - delta);
                    }
                }
            }
            Op::Reparam { mean, log_std, eps } => {
                {
                    let dm = sink!(*mean);
                    for (d, &gv) in dm.iter_mut().zip(g) {
                        *d = *d + gv;
                    }
                }
                // dz/dlog_std = exp(log_std) * eps; the noise itself is data.
                let sv = val(*log_std).data();
                let ev = val(*eps).data();
                let ds = sink!(*log_std);
                for i in 0..g.len() {
                    ds[i] = ds[i] + g[i] * sv[i].exp() * ev[i];
                }
            }
            Op::GmmLogDensity { z, means, log_stds, logits } => {
                let resp = match &self.nodes[id].aux {
                    Aux::Resp(r) => r,
                    _ => unreachable!("mixture node without responsibilities"),
                };
                let (zv, mv, sv, wv) = (val(*z), val(*means), val(*log_stds), val(*logits));
                let (b, l) = (zv.rows(), zv.cols());
                let m = mv.rows();
                let w_soft = softmax(wv.data());
                let one = F::one();

                // Mixture weight logits: d/dlogit_j = sum_b g_b (r_bj - w_j).
                {
                    let dwl = sink!(*logits);
                    for bi in 0..b {
                        let gb = g[bi];
                        for j in 0..m {
                            dwl[j] = dwl[j] + gb * (resp[bi * m + j] - w_soft[j]);
                        }
                    }
                }
                // Per-component Gaussian terms, weighted by responsibilities.
                {
                    let dz = sink!(*z);
                    for bi in 0..b {
                        let gb = g[bi];
                        let zrow = &zv.data()[bi * l..(bi + 1) * l];
                        for j in 0..m {
                            let r = resp[bi * m + j];
                            if r == F::zero() {
                                continue;
                            }
                            let mrow = &mv.data()[j * l..(j + 1) * l];
                            let srow = &sv.data()[j * l..(j + 1) * l];
                            for d in 0..l {
                                let inv2 = (-srow[d] - srow[d]).exp();
                                dz[bi * l + d] = dz[bi * l + d] - gb * r * (zrow[d] - mrow[d]) * inv2;
                            }
                        }
                    }
                }
                {
                    let dm = sink!(*means);
                    for bi in 0..b {
                        let gb = g[bi];
                        let zrow = &zv.data()[bi * l..(bi + 1) * l];
                        for j in 0..m {
                            let r = resp[bi * m + j];
                            if r == F::zero() {
                                continue;
                            }
                            let mrow = &mv.data()[j * l..(j + 1) * l];
                            let srow = &sv.data()[j * l..(j + 1) * l];
                            for d in 0..l {
                                let inv2 = (-srow[d] - srow[d]).exp();
                                dm[j * l + d] = dm[j * l + d] + gb * r * (zrow[d] - mrow[d]) * inv2;
                            }
                        }
                    }
                }
                let ds = sink!(*log_stds);
                for bi in 0..b {
                    let gb = g[bi];
                    let zrow = &zv.data()[bi * l..(bi + 1) * l];
                    for j in 0..m {
                        let r = resp[bi * m + j];
                        if r == F::zero() {
                            continue;
                        }
                        let mrow = &mv.data()[j * l..(j + 1) * l];
                        let srow = &sv.data()[j * l..(j + 1) * l];
                        for d in 0..l {
                            let t = (zrow[d] - mrow[d]) * (-srow[d]).exp();
                            // d/dls [-ls - 0.5 t^2] with t = (z-mu) e^{-ls}: t^2 - 1.
                            ds[j * l + d] = ds[j * l + d] + gb * r * (t * t - one);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Affine { .. } => "affine",
        Op::Matmul { .. } => "matmul",
        Op::Conv2d { .. } => "conv2d",
        Op::MaxPool2x2 { .. } => "maxpool2x2",
        Op::Elu { .. } => "elu",
        Op::Sigmoid { .. } => "sigmoid",
        Op::Exp { .. } => "exp",
        Op::Ln { .. } => "ln",
        Op::Softplus { .. } => "softplus",
        Op::Add { .. } => "add",
        Op::Sub { .. } => "sub",
        Op::Mul { .. } => "mul",
        Op::Scale { .. } => "scale",
        Op::AddScalar { .. } => "add_scalar",
        Op::Clamp { .. } => "clamp",
        Op::SliceCols { .. } => "slice_cols",
        Op::Reshape { .. } => "reshape",
        Op::Sum { .. } => "sum",
        Op::Mean { .. } => "mean",
        Op::BernoulliCe { .. } => "bernoulli_ce",
        Op::SoftmaxCe { .. } => "softmax_ce",
        Op::Reparam { .. } => "reparam_sample",
        Op::GmmLogDensity { .. } => "gmm_log_density",
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<F: Real>(x: F) -> F {
    let one = F::one();
    if x >= F::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

/// softplus(x) = ln(1 + e^x) computed as max(x, 0) + ln(1 + e^{-|x|}).
pub fn softplus<F: Real>(x: F) -> F {
    let zero = F::zero();
    let m = if x > zero { x } else { zero };
    m + (-x.abs()).exp().ln_1p()
}

/// Stable logsumexp of a non-empty slice.
pub fn log_sum_exp<F: Real>(xs: &[F]) -> F {
    let mut m = xs[0];
    for &x in &xs[1..] {
        if x > m {
            m = x;
        }
    }
    if !m.is_finite() {
        return m;
    }
    let mut s = F::zero();
    for &x in xs {
        s = s + (x - m).exp();
    }
    m + s.ln()
}

fn log_softmax<F: Real>(xs: &[F]) -> Vec<F> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| x - lse).collect()
}

fn softmax<F: Real>(xs: &[F]) -> Vec<F> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| (x - lse).exp()).collect()
}

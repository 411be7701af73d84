//! The check-grads subcommand: central-difference verification of every
//! differentiable primitive on freshly sampled inputs, h = 1e-5, flagging
//! relative errors above 1e-4.

use rdprobe_core::graph::{Graph, NodeId};
use rdprobe_core::{derive_seed, finite_difference_check, FdSettings, Result, Rng, Tensor};

/// Random inputs sampled per primitive.
pub const DEFAULT_TRIALS: usize = 50;

/// Worst observed error for one primitive across all trials.
#[derive(Debug, Clone)]
pub struct GradLine {
    pub name: &'static str,
    pub trials: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

fn rand_tensor(rng: &mut Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

type Builder = fn(&mut Graph<f64>, &mut Rng) -> Result<NodeId>;

fn affine(g: &mut Graph<f64>, rng: &mut Rng) -> Result<NodeId> {
    let x = g.param("x", rand_tensor(rng, vec![3, 4]))?;
    let w = g.param("w", rand_tensor(rng, vec![4, 2]))?;
    let b = g.param("b", rand_tensor(rng, vec![2]))?;
    let y = g.affine(x, w, b)?;
    let s = g.sigmoid(y)?;
    g.sum(s)
}

fn matmul(g: &mut Graph<f64>, rng: &mut Rng) -> Result<NodeId> {
    let a = g.param("a", rand_tensor(rng, vec![2, 3]))?;
    let b = g.param("b", rand_tensor(rng, vec![3, 4]))?;
    let y = g.matmul(a, b)?;
    let e = g.elu(y)?;
    g.sum(e)
}

fn conv2d(g: &mut Graph<f64>, rng: &mut Rng) -> Result<NodeId> {
    let x = g.param("x", rand_tensor(rng, vec![1, 2, 5, 5]))?;
    let w = g.param("w", rand_tensor(rng, vec![2, 2, 3, 3]))?;
    let b = g.param("b", rand_tensor(rng, vec![2]))?;
    let y = g.conv2d(x, w, b)?;
    let s = g.sigmoid(y)?;
    g.sum(s)
}

fn maxpool(g: &mut Graph<f64>, rng: &mut Rng) -> Result<NodeId> {
    let x = g.param("x", rand_tensor(rng, vec![1, 1, 6, 6]))?;
    let p = g.maxpool2x2(x)?;
    let s = g.sigmoid(p)?;
    g.sum(s)
}

fn unary_chain(g: &mut Graph<f64>, rng: &mut Rng) -> Result<NodeId> {
    let x = g.param("x", rand_tensor(rng, vec![8]))?;
    let e = g.elu(x)?;
    let s = g.sigmoid(e)?;
    let ex = g.exp(s)?;
    let sp = g.softplus(ex)?;
    let pos = g.add_scalar(sp, 0.5)?;
    let l = g.ln(pos)?;
    g.sum(l)
}

fn binary_chain(g: &mut Graph<f64>, rng: &mut Rng) -> Result<NodeId> {
    let a = g.param("a", rand_tensor(rng, vec![2, 3]))?;
    let b = g.param("b", rand_tensor(rng, vec![2, 3]))?;
    let sum = g.add(a, b)?;
    let diff = g.sub(sum, b)?;
    let prod = g.mul(diff, a)?;
    let sc = g.scale(prod, -1.7)?;
    let sh = g.add_scalar(sc, 0.3)?;
    let sg = g.sigmoid(sh)?;
    g.mean(sg)
}

fn clamp_slice_reshape(g: &mut Graph<f64>, rng: &mut Rng) -> Result<NodeId> {
    let x = g.param("x", rand_tensor(rng, vec![3, 4]))?;
    let c = g.clamp(x, -1.5, 1.5)?;
    let left = g.slice_cols(c, 0, 2)?;
    let right = g.slice_cols(c, 2, 4)?;
    let prod = g.mul(left, right)?;
    let flat = g.reshape(prod, &[6])?;
    let s = g.sigmoid(flat)?;
    g.sum(s)
}

fn bernoulli_ce(g: &mut Graph<f64>, rng: &mut Rng) -> Result<NodeId> {
    let logits = g.param("logits", rand_tensor(rng, vec![3, 5]))?;
    let tdata: Vec<f64> = (0..15).map(|_| if rng.next_f64() < 0.5 { 0.0 } else { 1.0 }).collect();
    let targets = g.constant(Tensor::new(vec![3, 5], tdata)?)?;
    let ce = g.bernoulli_ce(logits, targets)?;
    g.sum(ce)
}

fn softmax_ce(g: &mut Graph<f64>, rng: &mut Rng) -> Result<NodeId> {
    let logits = g.param("logits", rand_tensor(rng, vec![4, 6]))?;
    let classes: Vec<usize> = (0..4).map(|_| rng.below(6)).collect();
    let ce = g.softmax_ce(logits, &classes)?;
    g.mean(ce)
}

fn reparam_sample(g: &mut Graph<f64>, rng: &mut Rng) -> Result<NodeId> {
    let mean = g.param("mean", rand_tensor(rng, vec![2, 3]))?;
    let log_std = g.param("log_std", rand_tensor(rng, vec![2, 3]))?;
    let eps = g.constant(rng.gaussian_tensor(vec![2, 3]))?;
    let z = g.reparam_sample(mean, log_std, eps)?;
    let s = g.sigmoid(z)?;
    g.sum(s)
}

fn gmm_log_density(g: &mut Graph<f64>, rng: &mut Rng) -> Result<NodeId> {
    let z = g.param("z", rand_tensor(rng, vec![4, 2]))?;
    let means = g.param("means", rand_tensor(rng, vec![3, 2]))?;
    let log_stds = g.param("log_stds", rand_tensor(rng, vec![3, 2]))?;
    let logits = g.param("logits", rand_tensor(rng, vec![3]))?;
    let ld = g.gmm_log_density(z, means, log_stds, logits)?;
    g.mean(ld)
}

const CASES: &[(&str, Builder)] = &[
    ("affine", affine),
    ("matmul", matmul),
    ("conv2d", conv2d),
    ("maxpool2x2", maxpool),
    ("unary-elementwise", unary_chain),
    ("binary-elementwise", binary_chain),
    ("clamp-slice-reshape", clamp_slice_reshape),
    ("bernoulli-ce", bernoulli_ce),
    ("softmax-ce", softmax_ce),
    ("reparam-sample", reparam_sample),
    ("gmm-log-density", gmm_log_density),
];

/// Run every primitive's check `trials` times with fresh random inputs.
pub fn run_gradient_suite(trials: usize, seed: u64) -> Result<Vec<GradLine>> {
    let settings = FdSettings::default();
    let mut out = Vec::with_capacity(CASES.len());
    for (name, builder) in CASES {
        let mut rng = Rng::new(derive_seed(seed, name));
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let mut g: Graph<f64> = Graph::new();
            let loss = builder(&mut g, &mut rng)?;
            let report = finite_difference_check(&mut g, loss, settings)?;
            worst = worst.max(report.max_rel_err());
        }
        out.push(GradLine {
            name,
            trials,
            max_rel_err: worst,
            passed: worst <= settings.tolerance,
        });
    }
    Ok(out)
}

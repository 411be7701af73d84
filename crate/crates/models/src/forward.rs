//! Graph builders for the model forward passes. Parameters are bound into a
//! graph once per pass; the same builders serve training (backward through
//! the returned nodes) and evaluation (read values, drop the graph).

use rdprobe_core::{fl, Error, Graph, NodeId, Real, Result, Rng, Tensor};

use crate::params::ParamSet;
use crate::specs::{ClassifierSpec, ConvClassifierSpec, DecoderSpec, EncoderSpec, TrunkSpec};

/// Name to node-id map for one graph's bound parameters.
pub struct Bound {
    entries: Vec<(String, NodeId)>,
}

impl Bound {
    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .ok_or_else(|| Error::InvalidArg(format!("parameter {name} is not bound in this graph")))
    }
}

/// Register every tensor of `params` as a graph parameter, in set order.
pub fn bind<F: Real>(g: &mut Graph<F>, params: &ParamSet<F>) -> Result<Bound> {
    let mut entries = Vec::with_capacity(params.len());
    for (name, t) in params.entries() {
        entries.push((name.clone(), g.param(name, t.clone())?));
    }
    Ok(Bound { entries })
}

/// Whether a forward pass draws fresh dropout masks or runs deterministically.
pub enum RunMode<'a> {
    Eval,
    Train { rng: &'a mut Rng },
}

fn dropout_mask<F: Real>(rng: &mut Rng, shape: Vec<usize>, rate: f64) -> Result<Tensor<F>> {
    let keep = 1.0 - rate;
    let inv = fl::<F>(1.0 / keep);
    let n: usize = shape.iter().product();
    let data: Vec<F> =
        (0..n).map(|_| if rng.next_f64() < keep { inv } else { fl(0.0) }).collect();
    Tensor::new(shape, data)
}

/// Run a trunk over a flat (batch, input_dim) node; returns flat features.
/// Conv trunks reshape internally and apply pooling and, in training mode,
/// inverted dropout at their configured layers.
pub fn trunk_forward<F: Real>(
    g: &mut Graph<F>,
    bound: &Bound,
    prefix: &str,
    trunk: &TrunkSpec,
    x: NodeId,
    mode: &mut RunMode,
) -> Result<NodeId> {
    match trunk {
        TrunkSpec::Mlp { hidden, .. } => {
            let mut h = x;
            for i in 0..hidden.len() {
                let w = bound.node(&format!("{prefix}.w{i}"))?;
                let b = bound.node(&format!("{prefix}.b{i}"))?;
                h = g.affine(h, w, b)?;
                h = g.elu(h)?;
            }
            Ok(h)
        }
        TrunkSpec::Conv {
            side,
            in_channels,
            layers,
            depth,
            pool_after,
            dropout_after,
            dropout_rate,
        } => {
            let batch = g.value(x).shape()[0];
            let mut h = g.reshape(x, &[batch, *in_channels, *side, *side])?;
            let mut s = *side;
            for i in 0..*layers {
                let w = bound.node(&format!("{prefix}.w{i}"))?;
                let b = bound.node(&format!("{prefix}.b{i}"))?;
                h = g.conv2d(h, w, b)?;
                h = g.elu(h)?;
                let layer = i + 1;
                if pool_after.contains(&layer) {
                    h = g.maxpool2x2(h)?;
                    s /= 2;
                }
                if dropout_after.contains(&layer) {
                    if let RunMode::Train { rng } = mode {
                        let mask =
                            dropout_mask::<F>(rng, vec![batch, *depth, s, s], *dropout_rate)?;
                        let mask = g.constant(mask)?;
                        h = g.mul(h, mask)?;
                    }
                }
            }
            g.reshape(h, &[batch, depth * s * s])
        }
    }
}

/// Encoder output nodes: per-example posterior mean and clamped log-std,
/// each (batch, latent_dim).
pub struct PosteriorNodes {
    pub mean: NodeId,
    pub log_std: NodeId,
}

pub const LOG_STD_MIN: f64 = -7.0;
pub const LOG_STD_MAX: f64 = 7.0;

pub fn encode_nodes<F: Real>(
    g: &mut Graph<F>,
    bound: &Bound,
    spec: &EncoderSpec,
    x: NodeId,
) -> Result<PosteriorNodes> {
    let feat = trunk_forward(g, bound, "enc", &spec.trunk, x, &mut RunMode::Eval)?;
    let w = bound.node("enc.head.w0")?;
    let b = bound.node("enc.head.b0")?;
    let head = g.affine(feat, w, b)?;
    let l = spec.latent_dim;
    let mean = g.slice_cols(head, 0, l)?;
    let raw_log_std = g.slice_cols(head, l, 2 * l)?;
    let log_std = g.clamp(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)?;
    Ok(PosteriorNodes { mean, log_std })
}

/// Decoder logits node, (batch, output_dim). Bernoulli probabilities are
/// sigmoid(logits); losses consume the logits directly.
pub fn decode_nodes<F: Real>(
    g: &mut Graph<F>,
    bound: &Bound,
    spec: &DecoderSpec,
    z: NodeId,
) -> Result<NodeId> {
    let mut h = z;
    for i in 0..spec.hidden.len() {
        let w = bound.node(&format!("dec.w{i}"))?;
        let b = bound.node(&format!("dec.b{i}"))?;
        h = g.affine(h, w, b)?;
        h = g.elu(h)?;
    }
    let w = bound.node("dec.head.w0")?;
    let b = bound.node("dec.head.b0")?;
    g.affine(h, w, b)
}

/// Classifier logits node, (batch, class_count).
pub fn classify_nodes<F: Real>(
    g: &mut Graph<F>,
    bound: &Bound,
    spec: &ClassifierSpec,
    x: NodeId,
) -> Result<NodeId> {
    let trunk = TrunkSpec::Mlp { input_dim: spec.input_dim, hidden: spec.hidden.clone() };
    let feat = trunk_forward(g, bound, "cls", &trunk, x, &mut RunMode::Eval)?;
    let w = bound.node("cls.head.w0")?;
    let b = bound.node("cls.head.b0")?;
    g.affine(feat, w, b)
}

/// Penultimate activations of the classifier trunk; the fully connected
/// random-encoder features.
pub fn classify_trunk_nodes<F: Real>(
    g: &mut Graph<F>,
    bound: &Bound,
    spec: &ClassifierSpec,
    x: NodeId,
) -> Result<NodeId> {
    let trunk = TrunkSpec::Mlp { input_dim: spec.input_dim, hidden: spec.hidden.clone() };
    trunk_forward(g, bound, "cls", &trunk, x, &mut RunMode::Eval)
}

/// Convolutional classifier logits. Training mode draws dropout masks from
/// `rng`; evaluation applies none (inverted scaling keeps magnitudes equal).
pub fn conv_classify_nodes<F: Real>(
    g: &mut Graph<F>,
    bound: &Bound,
    spec: &ConvClassifierSpec,
    x: NodeId,
    mode: &mut RunMode,
) -> Result<NodeId> {
    let mut h = trunk_forward(g, bound, "cls", &spec.conv, x, mode)?;
    for i in 0..spec.fc_hidden.len() {
        let w = bound.node(&format!("cls.fc.w{i}"))?;
        let b = bound.node(&format!("cls.fc.b{i}"))?;
        h = g.affine(h, w, b)?;
        h = g.elu(h)?;
    }
    let w = bound.node("cls.head.w0")?;
    let b = bound.node("cls.head.b0")?;
    g.affine(h, w, b)
}

/// Flattened conv-trunk features with dropout disabled; the convolutional
/// random-encoder features.
pub fn conv_trunk_nodes<F: Real>(
    g: &mut Graph<F>,
    bound: &Bound,
    spec: &ConvClassifierSpec,
    x: NodeId,
) -> Result<NodeId> {
    trunk_forward(g, bound, "cls", &spec.conv, x, &mut RunMode::Eval)
}

/// One-shot value-level encode: builds a private graph, returns posterior
/// mean and log-std tensors. For evaluation paths that never backprop.
pub fn encode_posterior<F: Real>(
    params: &ParamSet<F>,
    spec: &EncoderSpec,
    images: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    let mut g = Graph::new();
    let bound = bind(&mut g, params)?;
    let x = g.constant(images.clone())?;
    let post = encode_nodes(&mut g, &bound, spec, x)?;
    Ok((g.value(post.mean).clone(), g.value(post.log_std).clone()))
}

/// One-shot value-level decode to Bernoulli logits.
pub fn decode_logits<F: Real>(
    params: &ParamSet<F>,
    spec: &DecoderSpec,
    z: &Tensor<F>,
) -> Result<Tensor<F>> {
    let mut g = Graph::new();
    let bound = bind(&mut g, params)?;
    let zn = g.constant(z.clone())?;
    let logits = decode_nodes(&mut g, &bound, spec, zn)?;
    Ok(g.value(logits).clone())
}

/// One-shot value-level classify to class logits.
pub fn classify_logits<F: Real>(
    params: &ParamSet<F>,
    spec: &ClassifierSpec,
    x: &Tensor<F>,
) -> Result<Tensor<F>> {
    let mut g = Graph::new();
    let bound = bind(&mut g, params)?;
    let xn = g.constant(x.clone())?;
    let logits = classify_nodes(&mut g, &bound, spec, xn)?;
    Ok(g.value(logits).clone())
}

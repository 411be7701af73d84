//! Random-network encoders: freshly initialized trunks, never trained.
//! Their penultimate activations show how much label information survives
//! a random feature map of matching architecture.

use rdprobe_core::{Error, Graph, NodeId, Real, Result, Tensor};
use rdprobe_models::{
    bind, classify_trunk_nodes, conv_trunk_nodes, init_classifier, init_conv_classifier,
    ClassifierSpec, ConvClassifierSpec,
};

const FORWARD_BATCH: usize = 256;

/// Architecture of the untrained feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomEncoderKind {
    /// The probe trunk (2x200 ELU) applied to raw pixels.
    FullyConnected,
    /// The convolutional classifier trunk; square images, dropout off.
    Convolutional,
}

/// Penultimate activations of a randomly initialized trunk over the images.
/// Pure in (kind, seed, images): the same triple always yields the same
/// features. Forward passes run in batches to bound graph size.
pub fn random_encoder<F: Real>(
    kind: RandomEncoderKind,
    seed: u64,
    images: &Tensor<F>,
) -> Result<Tensor<F>> {
    if images.shape().len() != 2 || images.rows() == 0 {
        return Err(Error::ShapeMismatch {
            op: "random_encoder",
            detail: format!("images must be nonempty (n, dim), got {:?}", images.shape()),
        });
    }
    let d = images.cols();
    match kind {
        RandomEncoderKind::FullyConnected => {
            let spec = ClassifierSpec::probe(d, 10);
            let params = init_classifier::<F>(&spec, seed)?;
            run_batched(images, *spec.hidden.last().expect("probe trunk has layers"), |g, x| {
                let bound = bind(g, &params)?;
                classify_trunk_nodes(g, &bound, &spec, x)
            })
        }
        RandomEncoderKind::Convolutional => {
            let side = (d as f64).sqrt().round() as usize;
            if side * side != d {
                return Err(Error::InvalidArg(format!(
                    "convolutional random encoder needs square images, got dim {d}"
                )));
            }
            let spec = ConvClassifierSpec::baseline(side, 1, 10);
            let params = init_conv_classifier::<F>(&spec, seed)?;
            run_batched(images, spec.conv.output_dim(), |g, x| {
                let bound = bind(g, &params)?;
                conv_trunk_nodes(g, &bound, &spec, x)
            })
        }
    }
}

fn run_batched<F: Real>(
    images: &Tensor<F>,
    out_dim: usize,
    forward: impl Fn(&mut Graph<F>, NodeId) -> Result<NodeId>,
) -> Result<Tensor<F>> {
    let n = images.rows();
    let d = images.cols();
    let mut out = Tensor::<F>::zeros(vec![n, out_dim]);
    let mut start = 0;
    while start < n {
        let end = (start + FORWARD_BATCH).min(n);
        let rows = end - start;
        let chunk =
            Tensor::new(vec![rows, d], images.data()[start * d..end * d].to_vec())?;
        let mut g = Graph::new();
        let x = g.constant(chunk)?;
        let feat_node = forward(&mut g, x)?;
        let feat = g.value(feat_node);
        out.data_mut()[start * out_dim..end * out_dim].copy_from_slice(feat.data());
        start = end;
    }
    Ok(out)
}

//! Distortion D: reconstruction cost in nats under the factorized Bernoulli
//! decoder, computed from logits for stability at saturation.

use rdprobe_core::{Error, Real, Result, RunningMean, Tensor};
use rdprobe_models::{decode_logits, DecoderSpec, ParamSet};

/// Per-example sum over pixels of Bernoulli cross-entropy from logits.
/// Targets must be exactly 0 or 1.
pub fn distortion_per_example<F: Real>(logits: &Tensor<F>, x: &Tensor<F>) -> Result<Vec<f64>> {
    if logits.shape() != x.shape() || logits.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "distortion",
            detail: format!(
                "logits {:?} and targets {:?} must be equal 2-d shapes",
                logits.shape(),
                x.shape()
            ),
        });
    }
    let mut per = Vec::with_capacity(x.rows());
    for b in 0..x.rows() {
        let lr = logits.row(b);
        let xr = x.row(b);
        let mut nats = 0.0;
        for i in 0..xr.len() {
            let t = xr[i].to_f64_();
            if t != 0.0 && t != 1.0 {
                return Err(Error::InvalidArg(format!(
                    "distortion targets must be binary, found {t}"
                )));
            }
            let l = lr[i].to_f64_();
            nats += rdprobe_core::softplus(l) - l * t;
        }
        per.push(nats);
    }
    Ok(per)
}

/// Batch mean of the per-example distortion.
pub fn distortion<F: Real>(logits: &Tensor<F>, x: &Tensor<F>) -> Result<f64> {
    let per = distortion_per_example(logits, x)?;
    let mut batch = RunningMean::new();
    for nats in per {
        batch.push(nats);
    }
    Ok(batch.mean())
}

/// Distortion of a decoder at given latents: decode z, score against x.
pub fn decoder_distortion<F: Real>(
    params: &ParamSet<F>,
    spec: &DecoderSpec,
    x: &Tensor<F>,
    z: &Tensor<F>,
) -> Result<f64> {
    let logits = decode_logits(params, spec, z)?;
    distortion(&logits, x)
}

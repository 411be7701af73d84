//! Log density of the latent marginal m(z), as plain values for evaluation
//! and as graph nodes for training through a learned mixture.

use rdprobe_core::{log_sum_exp, Error, Graph, NodeId, Real, Result, Tensor};

use crate::forward::Bound;
use crate::params::ParamSet;
use crate::specs::MarginalSpec;

const LN_2PI: f64 = 1.8378770664093453;

/// Per-row log m(z) in f64, z shaped (batch, latent_dim).
pub fn marginal_log_density<F: Real>(
    spec: &MarginalSpec,
    params: &ParamSet<F>,
    latent_dim: usize,
    z: &Tensor<F>,
) -> Result<Vec<f64>> {
    if z.shape().len() != 2 || z.cols() != latent_dim {
        return Err(Error::ShapeMismatch {
            op: "marginal_log_density",
            detail: format!("z shape {:?} does not match latent_dim {latent_dim}", z.shape()),
        });
    }
    match spec {
        MarginalSpec::FixedStandard => Ok((0..z.rows())
            .map(|b| {
                z.row(b).iter().map(|&v| {
                    let v = v.to_f64_();
                    -0.5 * (LN_2PI + v * v)
                }).sum()
            })
            .collect()),
        MarginalSpec::LearnedMixture { components } => {
            let means = required(params, "marg.means", &[*components, latent_dim])?;
            let log_stds = required(params, "marg.log_stds", &[*components, latent_dim])?;
            let logits = required(params, "marg.logits", &[*components])?;
            let lw: Vec<f64> = logits.data().iter().map(|&v| v.to_f64_()).collect();
            let lse = f64_log_sum_exp(&lw);
            let log_w: Vec<f64> = lw.iter().map(|v| v - lse).collect();
            Ok((0..z.rows())
                .map(|b| {
                    let zr = z.row(b);
                    let per: Vec<f64> = (0..*components)
                        .map(|j| {
                            let mu = means.row(j);
                            let ls = log_stds.row(j);
                            let mut acc = log_w[j];
                            for i in 0..latent_dim {
                                let lsi = ls[i].to_f64_();
                                let t = (zr[i].to_f64_() - mu[i].to_f64_()) * (-lsi).exp();
                                acc += -0.5 * LN_2PI - lsi - 0.5 * t * t;
                            }
                            acc
                        })
                        .collect();
                    f64_log_sum_exp(&per)
                })
                .collect())
        }
    }
}

fn required<'a, F: Real>(
    params: &'a ParamSet<F>,
    name: &str,
    shape: &[usize],
) -> Result<&'a Tensor<F>> {
    let t = params
        .get(name)
        .ok_or_else(|| Error::InvalidArg(format!("marginal parameter {name} is missing")))?;
    if t.shape() != shape {
        return Err(Error::ShapeMismatch {
            op: "marginal_log_density",
            detail: format!("{name} has shape {:?}, expected {shape:?}", t.shape()),
        });
    }
    Ok(t)
}

fn f64_log_sum_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs)
}

/// Graph node computing per-row log m(z), shape (batch).
///
/// The fixed marginal is expressed as a one-component mixture held in
/// constants, so both cases flow through the same kernel; gradients reach
/// mixture parameters only in the learned case.
pub fn marginal_log_density_node<F: Real>(
    g: &mut Graph<F>,
    bound: Option<&Bound>,
    spec: &MarginalSpec,
    latent_dim: usize,
    z: NodeId,
) -> Result<NodeId> {
    match spec {
        MarginalSpec::FixedStandard => {
            let means = g.constant(Tensor::zeros(vec![1, latent_dim]))?;
            let log_stds = g.constant(Tensor::zeros(vec![1, latent_dim]))?;
            let logits = g.constant(Tensor::zeros(vec![1]))?;
            g.gmm_log_density(z, means, log_stds, logits)
        }
        MarginalSpec::LearnedMixture { .. } => {
            let bound = bound.ok_or_else(|| {
                Error::InvalidArg("learned mixture marginal needs bound parameters".into())
            })?;
            let means = bound.node("marg.means")?;
            let log_stds = bound.node("marg.log_stds")?;
            let logits = bound.node("marg.logits")?;
            g.gmm_log_density(z, means, log_stds, logits)
        }
    }
}

//! The VAE training loop: Adam on the beta-weighted objective with
//! epoch-end evaluation on a held-out split. Deterministic in the seed; a
//! non-finite loss aborts the run and keeps every finite row written so far.

use rdprobe_core::{
    derive_seed, Adam, AdamConfig, Error, Graph, Real, Result, Rng, RunningMean, Tensor,
};
use rdprobe_datasets::{iterate_batches, DatasetSplit};
use rdprobe_models::{bind, decode_nodes, encode_posterior, MarginalSpec, ParamSet};

use crate::distortion::distortion_per_example;
use crate::entropy::{compression_factor, EntropyConstants};
use crate::loss::{beta_vae_loss_nodes, draw_eps, VaeSpec};
use crate::metrics::RunMetrics;
use crate::rate::{rate_closed_form_per_example, rate_monte_carlo};

#[derive(Debug, Clone)]
pub struct VaeTrainConfig {
    pub beta: f64,
    pub epochs: u32,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Draws per example for the Monte Carlo rate at evaluation time
    /// (learned-mixture marginals only; the fixed marginal is closed form).
    pub eval_rate_samples: usize,
    pub entropy: EntropyConstants,
}

impl VaeTrainConfig {
    pub fn new(beta: f64, epochs: u32, seed: u64) -> Self {
        VaeTrainConfig {
            beta,
            epochs,
            lr: 1e-3,
            batch_size: 128,
            seed,
            eval_rate_samples: 16,
            entropy: EntropyConstants::digits(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 {
            return Err(Error::InvalidArg(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArg(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArg("batch_size must be at least 1".into()));
        }
        if self.eval_rate_samples == 0 {
            return Err(Error::InvalidArg("eval_rate_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where a run died when the loss went non-finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NanAbortInfo {
    pub epoch: u32,
    pub step: u64,
}

#[derive(Debug)]
pub struct VaeOutcome<F: Real> {
    pub params: ParamSet<F>,
    pub metrics: Vec<RunMetrics>,
    pub aborted: Option<NanAbortInfo>,
}

/// Rate, distortion, and loss of fixed parameters on a split.
#[derive(Debug, Clone, Copy)]
pub struct VaeEval {
    pub rate_nats: f64,
    pub distortion_nats: f64,
    pub loss_nats: f64,
}

/// Evaluate without touching parameters: closed-form (or S-sample MC) rate
/// plus a one-sample distortion, averaged per example in f64. Deterministic
/// in `seed`.
pub fn evaluate_vae<F: Real>(
    params: &ParamSet<F>,
    spec: &VaeSpec,
    split: &DatasetSplit,
    beta: f64,
    batch_size: usize,
    rate_samples: usize,
    seed: u64,
) -> Result<VaeEval> {
    let mut rng = Rng::new(seed);
    let mut rate_acc = RunningMean::new();
    let mut dist_acc = RunningMean::new();
    let n = split.len();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let x: Tensor<F> = split.gather(&idx);
        let (mean, log_std) = encode_posterior(params, &spec.encoder, &x)?;

        match &spec.marginal {
            MarginalSpec::FixedStandard => {
                for kl in rate_closed_form_per_example(&mean, &log_std)? {
                    rate_acc.push(kl);
                }
            }
            MarginalSpec::LearnedMixture { .. } => {
                // Batched MC keeps f64 accumulation per example underneath.
                let est = rate_monte_carlo(
                    &mean,
                    &log_std,
                    &spec.marginal,
                    params,
                    rate_samples,
                    &mut rng,
                )?;
                for _ in 0..(end - start) {
                    rate_acc.push(est.mean);
                }
            }
        }

        // One reparameterized draw for the reconstruction term.
        let logits = {
            let mut g = Graph::new();
            let bound = bind(&mut g, params)?;
            let mn = g.constant(mean.clone())?;
            let ls = g.constant(log_std.clone())?;
            let eps = draw_eps(&mut g, end - start, spec.latent_dim(), &mut rng)?;
            let zn = g.reparam_sample(mn, ls, eps)?;
            let out = decode_nodes(&mut g, &bound, &spec.decoder, zn)?;
            g.value(out).clone()
        };
        for nats in distortion_per_example(&logits, &x)? {
            dist_acc.push(nats);
        }
        start = end;
    }
    let rate_nats = rate_acc.mean();
    let distortion_nats = dist_acc.mean();
    Ok(VaeEval { rate_nats, distortion_nats, loss_nats: distortion_nats + beta * rate_nats })
}

fn metrics_row(run_id: &str, cfg: &VaeTrainConfig, epoch: u32, eval: VaeEval) -> RunMetrics {
    RunMetrics {
        run_id: run_id.to_string(),
        beta: cfg.beta,
        epoch,
        rate_nats: eval.rate_nats,
        distortion_nats: eval.distortion_nats,
        loss_nats: eval.loss_nats,
        label_distortion_nats: None,
        probe_accuracy: None,
        compression_factor: if eval.rate_nats > 0.0 {
            Some(compression_factor(eval.rate_nats, cfg.entropy.h_x).expect("rate checked positive"))
        } else {
            None
        },
    }
}

fn is_abort(err: &Error) -> bool {
    matches!(err, Error::NonFinite { .. } | Error::NanAbort { .. })
}

/// Train a VAE on the training split, evaluating on `heldout` at epoch 0 and
/// after every epoch. Returns final parameters, one metrics row per
/// evaluation, and abort information if the loss went non-finite.
pub fn train_vae<F: Real>(
    spec: &VaeSpec,
    cfg: &VaeTrainConfig,
    train: &DatasetSplit,
    heldout: &DatasetSplit,
    run_id: &str,
) -> Result<VaeOutcome<F>> {
    spec.validate()?;
    cfg.validate()?;
    for (split, name) in [(train, "train"), (heldout, "heldout")] {
        if split.dim() != spec.input_dim() {
            return Err(Error::InvalidArg(format!(
                "{name} split dim {} does not match model input dim {}",
                split.dim(),
                spec.input_dim()
            )));
        }
        if !split.is_binary() {
            return Err(Error::InvalidArg(format!(
                "{name} split must be binarized for the Bernoulli decoder"
            )));
        }
    }

    let mut params: ParamSet<F> = spec.init_params(cfg.seed)?;
    let mut adam = Adam::new(AdamConfig::new(cfg.lr))?;
    let mut eps_rng = Rng::new(derive_seed(cfg.seed, "vae.eps"));
    let mut metrics = Vec::with_capacity(cfg.epochs as usize + 1);
    let mut aborted = None;
    let mut global_step: u64 = 0;

    let init_eval = evaluate_vae(
        &params,
        spec,
        heldout,
        cfg.beta,
        cfg.batch_size,
        cfg.eval_rate_samples,
        derive_seed(cfg.seed, "vae.eval.0"),
    )?;
    metrics.push(metrics_row(run_id, cfg, 0, init_eval));

    'epochs: for epoch in 1..=cfg.epochs {
        let batches = iterate_batches(
            train.len(),
            cfg.batch_size,
            derive_seed(cfg.seed, &format!("vae.shuffle.{epoch}")),
        )?;
        for idx in &batches {
            global_step += 1;
            let step = (|| -> Result<()> {
                let x: Tensor<F> = train.gather(idx);
                let mut g = Graph::new();
                let bound = bind(&mut g, &params)?;
                let xn = g.constant(x)?;
                let eps = draw_eps(&mut g, idx.len(), spec.latent_dim(), &mut eps_rng)?;
                let nodes = beta_vae_loss_nodes(&mut g, &bound, spec, xn, eps, cfg.beta)?;
                let grads = g.backward(nodes.loss)?;
                adam.step(params.entries_mut(), &grads)
            })();
            match step {
                Ok(()) => {}
                Err(e) if is_abort(&e) => {
                    aborted = Some(NanAbortInfo { epoch, step: global_step });
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let eval = evaluate_vae(
            &params,
            spec,
            heldout,
            cfg.beta,
            cfg.batch_size,
            cfg.eval_rate_samples,
            derive_seed(cfg.seed, &format!("vae.eval.{epoch}")),
        );
        match eval {
            Ok(eval) => metrics.push(metrics_row(run_id, cfg, epoch, eval)),
            Err(e) if is_abort(&e) => {
                aborted = Some(NanAbortInfo { epoch, step: global_step });
                break 'epochs;
            }
            Err(e) => return Err(e),
        }
    }

    Ok(VaeOutcome { params, metrics, aborted })
}

//! Dataset assembly and the single-run pipeline: train a VAE into a
//! content-addressed directory, probe the trained encoder, and seal the
//! directory with a manifest.

use std::path::{Path, PathBuf};

use rdprobe_core::{derive_seed, Error, Real, Result, Tensor};
use rdprobe_datasets::{
    binarize, load_amat, load_idx_images, load_idx_labels, load_labels_txt, synth_binary,
    BinarizeMode, DatasetSplit, SplitName,
};
use rdprobe_models::{
    encode_posterior, save_params, DecoderSpec, EncoderSpec, MarginalSpec, ParamSet, TrunkSpec,
};
use rdprobe_objectives::{
    probe_label_distortion, train_vae, EntropyConstants, ProbeConfig, ProbeSource, VaeSpec,
    VaeTrainConfig,
};

use crate::artifacts::{
    write_metrics_csv, write_probe_csv, ProbeRow, METRICS_FILE, PROBE_FILE, WEIGHTS_FILE,
};
use crate::config::{
    BinarizeChoice, ConfigTree, DatasetConfig, FileDataset, FileFormat, MarginalChoice,
};
use crate::manifest::{run_id_for, unix_now, RunManifest, RunStatus};

/// Rows encoded per forward pass when embedding a whole split.
const ENCODE_BATCH: usize = 2048;

/// Train and held-out evaluation splits, both binarized and labeled.
#[derive(Debug, Clone)]
pub struct DatasetPair {
    pub train: DatasetSplit,
    pub eval: DatasetSplit,
}

impl DatasetPair {
    pub fn classes(&self) -> usize {
        self.train.class_count()
    }
}

/// Execution switches carried from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub force: bool,
}

/// What one run_experiment call did.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_id: String,
    pub dir: PathBuf,
    pub status: RunStatus,
    /// True when a prior directory satisfied the request untouched.
    pub reused: bool,
}

/// Materialize the configured dataset. Synth splits derive train and eval
/// streams from one seed; file datasets load images plus label sidecars and
/// binarize per config.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<DatasetPair> {
    match cfg {
        DatasetConfig::Synth { train_n, eval_n, seed } => Ok(DatasetPair {
            train: synth_binary(SplitName::Train, *train_n, derive_seed(*seed, "synth.train"))?,
            eval: synth_binary(SplitName::Test, *eval_n, derive_seed(*seed, "synth.eval"))?,
        }),
        DatasetConfig::Files(files) => build_file_dataset(files),
    }
}

/// Class count without materializing images; file datasets read only the
/// label sidecars.
pub fn dataset_classes(cfg: &DatasetConfig) -> Result<usize> {
    match cfg {
        DatasetConfig::Synth { .. } => Ok(rdprobe_datasets::SYNTH_CLASSES),
        DatasetConfig::Files(files) => {
            let load = |path: &Path| -> Result<Vec<usize>> {
                match files.format {
                    FileFormat::Idx => load_idx_labels(path),
                    FileFormat::Amat => load_labels_txt(path),
                }
            };
            let train = load(&files.train_labels)?;
            let eval = load(&files.eval_labels)?;
            train
                .iter()
                .chain(&eval)
                .max()
                .map(|&m| m + 1)
                .ok_or_else(|| Error::InvalidArg("label files are empty".into()))
        }
    }
}

fn build_file_dataset(files: &FileDataset) -> Result<DatasetPair> {
    let load_images = |path: &Path| -> Result<Tensor<f32>> {
        match files.format {
            FileFormat::Idx => load_idx_images(path),
            FileFormat::Amat => load_amat(path),
        }
    };
    let load_labels = |path: &Path| -> Result<Vec<usize>> {
        match files.format {
            FileFormat::Idx => load_idx_labels(path),
            FileFormat::Amat => load_labels_txt(path),
        }
    };
    let train_images = load_images(&files.train_images)?;
    let train_labels = load_labels(&files.train_labels)?;
    let eval_images = load_images(&files.eval_images)?;
    let eval_labels = load_labels(&files.eval_labels)?;
    let classes = train_labels
        .iter()
        .chain(&eval_labels)
        .max()
        .map(|&m| m + 1)
        .ok_or_else(|| Error::InvalidArg("label files are empty".into()))?;
    let assemble = |name: SplitName,
                    images: Tensor<f32>,
                    labels: Vec<usize>,
                    take: Option<usize>,
                    salt: &str|
     -> Result<DatasetSplit> {
        let split = DatasetSplit::new(name, images, Some(labels), classes)?;
        let split = match take {
            Some(n) => split.take(n)?,
            None => split,
        };
        let mode = match files.binarize {
            BinarizeChoice::Threshold => BinarizeMode::Threshold,
            BinarizeChoice::Stochastic { seed } => {
                BinarizeMode::Stochastic { seed: derive_seed(seed, salt) }
            }
        };
        binarize(&split, mode)
    };
    Ok(DatasetPair {
        train: assemble(
            SplitName::Train,
            train_images,
            train_labels,
            files.train_take,
            "binarize.train",
        )?,
        eval: assemble(SplitName::Test, eval_images, eval_labels, files.eval_take, "binarize.eval")?,
    })
}

/// The architecture a config describes for a given input width.
pub fn vae_spec(cfg: &ConfigTree, input_dim: usize) -> VaeSpec {
    VaeSpec {
        encoder: EncoderSpec {
            trunk: TrunkSpec::Mlp { input_dim, hidden: cfg.model.encoder_hidden.clone() },
            latent_dim: cfg.model.latent_dim,
        },
        decoder: DecoderSpec {
            latent_dim: cfg.model.latent_dim,
            hidden: cfg.model.decoder_hidden.clone(),
            output_dim: input_dim,
        },
        marginal: match cfg.model.marginal {
            MarginalChoice::Standard => MarginalSpec::FixedStandard,
            MarginalChoice::Mixture { components } => MarginalSpec::LearnedMixture { components },
        },
    }
}

pub fn entropy_constants(cfg: &ConfigTree, classes: usize) -> Result<EntropyConstants> {
    EntropyConstants::with_class_count(cfg.baselines.h_x, classes)
}

pub fn probe_config(cfg: &ConfigTree, seed: u64) -> ProbeConfig {
    ProbeConfig {
        epochs: cfg.probe.epochs as u32,
        base_lr: cfg.probe.lr,
        decay_every: cfg.probe.decay_every as u32,
        decay_factor: cfg.probe.decay_factor,
        batch_size: cfg.probe.batch,
        eval_samples: cfg.probe.samples,
        seed,
    }
}

/// f32 images widened for the f64 analysis paths.
pub fn widen(t: &Tensor<f32>) -> Result<Tensor<f64>> {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| v as f64).collect())
}

/// Posterior mean and log-std of every example in a split, batched through
/// the encoder and widened to f64 for the probe.
pub fn encode_split<F: Real>(
    params: &ParamSet<F>,
    spec: &EncoderSpec,
    split: &DatasetSplit,
) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let n = split.len();
    let latent = spec.latent_dim;
    let mut mean = Vec::with_capacity(n * latent);
    let mut log_std = Vec::with_capacity(n * latent);
    let mut start = 0;
    while start < n {
        let end = (start + ENCODE_BATCH).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let images: Tensor<F> = split.gather(&idx);
        let (m, s) = encode_posterior(params, spec, &images)?;
        mean.extend(m.data().iter().map(|&v| v.to_f64_()));
        log_std.extend(s.data().iter().map(|&v| v.to_f64_()));
        start = end;
    }
    Ok((Tensor::new(vec![n, latent], mean)?, Tensor::new(vec![n, latent], log_std)?))
}

/// Clear leftovers from a forced or failed run so the directory is written
/// exactly once.
fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Reuse decision for an existing run directory: completed and aborted runs
/// stand unless forced; failed or manifest-less directories rerun.
fn reusable_status(dir: &Path, force: bool) -> Result<Option<RunStatus>> {
    if force {
        return Ok(None);
    }
    match RunManifest::read(dir)? {
        Some(m) if m.status != RunStatus::Failed => Ok(Some(m.status)),
        _ => Ok(None),
    }
}

/// Train the configured VAE, probe its encoder, and seal <out>/<run_id>/.
/// A NaN abort still writes metrics (finite rows only) and weights, but
/// records status aborted-nan and skips the probe.
pub fn run_experiment(cfg: &ConfigTree, data: &DatasetPair, opts: &RunOptions) -> Result<RunSummary> {
    let run_id = run_id_for("train", cfg);
    let dir = cfg.out.join(&run_id);
    if let Some(status) = reusable_status(&dir, opts.force)? {
        return Ok(RunSummary { run_id, dir, status, reused: true });
    }
    let started = unix_now();
    reset_dir(&dir)?;

    let classes = data.classes();
    let spec = vae_spec(cfg, data.train.dim());
    let train_cfg = VaeTrainConfig {
        beta: cfg.train.beta,
        epochs: cfg.train.epochs as u32,
        lr: cfg.train.lr,
        batch_size: cfg.train.batch,
        seed: cfg.train.seed,
        eval_rate_samples: cfg.train.rate_samples,
        entropy: entropy_constants(cfg, classes)?,
    };
    let outcome = train_vae::<f32>(&spec, &train_cfg, &data.train, &data.eval, &run_id)?;

    write_metrics_csv(&dir.join(METRICS_FILE), &outcome.metrics)?;
    save_params(&outcome.params, &dir.join(WEIGHTS_FILE))?;

    let status = if outcome.aborted.is_some() {
        RunStatus::AbortedNan
    } else {
        let row = probe_run(cfg, data, &outcome.params, &spec.encoder, &run_id)?;
        write_probe_csv(&dir.join(PROBE_FILE), &row)?;
        RunStatus::Completed
    };

    RunManifest::new(&run_id, "train", cfg, classes, status, started, unix_now())?.write(&dir)?;
    Ok(RunSummary { run_id, dir, status, reused: false })
}

/// Probe the trained encoder: train the classifier on training-split
/// posteriors, evaluate label distortion on the held-out posterior.
fn probe_run(
    cfg: &ConfigTree,
    data: &DatasetPair,
    params: &ParamSet<f32>,
    encoder: &EncoderSpec,
    run_id: &str,
) -> Result<ProbeRow> {
    let (train_mean, train_log_std) = encode_split(params, encoder, &data.train)?;
    let (eval_mean, eval_log_std) = encode_split(params, encoder, &data.eval)?;
    let pcfg = probe_config(cfg, derive_seed(cfg.train.seed, "probe"));
    let outcome = probe_label_distortion(
        &ProbeSource::Posterior { mean: &train_mean, log_std: &train_log_std },
        data.train.require_labels()?,
        &ProbeSource::Posterior { mean: &eval_mean, log_std: &eval_log_std },
        data.eval.require_labels()?,
        data.classes(),
        &pcfg,
    )?;
    Ok(ProbeRow {
        run_id: run_id.to_string(),
        c_nats: outcome.c_nats,
        c_bits: outcome.c_nats / std::f64::consts::LN_2,
        accuracy: outcome.accuracy,
        samples: outcome.eval_samples,
    })
}

/// Recompute probe.csv for an already trained run from its stored weights.
/// No-op when probe.csv exists unless forced; errors if the run has not been
/// trained yet.
pub fn rerun_probe(cfg: &ConfigTree, data: &DatasetPair, opts: &RunOptions) -> Result<RunSummary> {
    let run_id = run_id_for("train", cfg);
    let dir = cfg.out.join(&run_id);
    let manifest = RunManifest::read(&dir)?.ok_or_else(|| {
        Error::InvalidArg(format!("run {run_id} has no manifest under {}; train it first", cfg.out.display()))
    })?;
    if manifest.status != RunStatus::Completed {
        return Err(Error::InvalidArg(format!(
            "run {run_id} has status {}; only completed runs can be probed",
            manifest.status.as_str()
        )));
    }
    let probe_path = dir.join(PROBE_FILE);
    if probe_path.exists() && !opts.force {
        return Ok(RunSummary { run_id, dir, status: RunStatus::Completed, reused: true });
    }
    let spec = vae_spec(cfg, data.train.dim());
    let template: ParamSet<f32> = spec.init_params(cfg.train.seed)?;
    let params = rdprobe_models::load_params_matching(&dir.join(WEIGHTS_FILE), &template)?;
    let row = probe_run(cfg, data, &params, &spec.encoder, &run_id)?;
    write_probe_csv(&probe_path, &row)?;
    Ok(RunSummary { run_id, dir, status: RunStatus::Completed, reused: false })
}

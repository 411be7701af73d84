//! Reference-encoder runs: each baseline writes its own content-addressed
//! directory so the report can mix them with trained runs.

use std::path::Path;

use rdprobe_baselines::{
    discard_line, fit_pca, pca_rate, random_encoder, stochastic_pca_encode,
    train_supervised_baseline, DiscardLine, RandomEncoderKind, SupervisedKind,
};
use rdprobe_core::{derive_seed, Error, Result, Rng};
use rdprobe_models::ConvClassifierSpec;
use rdprobe_objectives::{compression_factor, probe_label_distortion, ProbeSource};

use crate::artifacts::fmt6;
use crate::config::{BaselineKind, ConfigTree, NetKind};
use crate::manifest::{run_id_for, unix_now, RunManifest, RunStatus};
use crate::runner::{entropy_constants, probe_config, widen, DatasetPair, RunOptions, RunSummary};

pub const PCA_FRONTIER_FILE: &str = "pca_frontier.csv";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const DISCARD_FILE: &str = "discard_line.csv";

pub const PCA_FRONTIER_HEADER: &str =
    "sigma,k,R_nats,C_nats,C_bits,accuracy,compression_factor";
pub const BASELINE_HEADER: &str = "source,c_nats,c_bits,accuracy";
pub const DISCARD_HEADER: &str = "R_nats,C_nats,C_bits";

/// Points sampled along the discard line, endpoints included.
pub const DISCARD_POINTS: usize = 100;

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// Shared prologue/epilogue for every baseline directory: reuse a prior
/// completed run unless forced, otherwise clear the directory, write the
/// body's files, then seal with a manifest.
fn baseline_run(
    cfg: &ConfigTree,
    command: &str,
    classes: usize,
    opts: &RunOptions,
    body: impl FnOnce(&Path) -> Result<()>,
) -> Result<RunSummary> {
    let run_id = run_id_for(command, cfg);
    let dir = cfg.out.join(&run_id);
    if !opts.force {
        if let Some(m) = RunManifest::read(&dir)? {
            if m.status == RunStatus::Completed {
                return Ok(RunSummary { run_id, dir, status: RunStatus::Completed, reused: true });
            }
        }
    }
    let started = unix_now();
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    body(&dir)?;
    RunManifest::new(&run_id, command, cfg, classes, RunStatus::Completed, started, unix_now())?
        .write(&dir)?;
    Ok(RunSummary { run_id, dir, status: RunStatus::Completed, reused: false })
}

pub fn run_baseline(
    kind: BaselineKind,
    cfg: &ConfigTree,
    data: &DatasetPair,
    opts: &RunOptions,
) -> Result<RunSummary> {
    match kind {
        BaselineKind::Pca => run_pca(cfg, data, opts),
        BaselineKind::RandomEncoder => run_random(cfg, data, opts),
        BaselineKind::Supervised => run_supervised(cfg, data, opts),
        BaselineKind::DiscardLine => run_discard(cfg, data.classes(), opts),
    }
}

/// PCA frontier: fit once on the training images, then probe the whitened
/// projection at every configured noise level.
fn run_pca(cfg: &ConfigTree, data: &DatasetPair, opts: &RunOptions) -> Result<RunSummary> {
    baseline_run(cfg, "baseline-pca", data.classes(), opts, |dir| {
        let k = cfg.baselines.pca_k;
        let seed = cfg.train.seed;
        let train_images = widen(data.train.images())?;
        let eval_images = widen(data.eval.images())?;
        let basis = fit_pca(&train_images, k)?;
        let mut text = String::from(PCA_FRONTIER_HEADER);
        text.push('\n');
        for (i, &sigma) in cfg.baselines.pca_sigmas.iter().enumerate() {
            let mut enc_rng = Rng::new(derive_seed(seed, &format!("pca.encode.{i}")));
            let train_z = stochastic_pca_encode(&basis, &train_images, sigma, &mut enc_rng)?;
            let eval_z = stochastic_pca_encode(&basis, &eval_images, sigma, &mut enc_rng)?;
            let pcfg = probe_config(cfg, derive_seed(seed, &format!("pca.probe.{i}")));
            let outcome = probe_label_distortion(
                &ProbeSource::Deterministic { features: &train_z },
                data.train.require_labels()?,
                &ProbeSource::Deterministic { features: &eval_z },
                data.eval.require_labels()?,
                data.classes(),
                &pcfg,
            )?;
            let rate = pca_rate(k, sigma)?;
            text.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt6(sigma),
                k,
                fmt6(rate),
                fmt6(outcome.c_nats),
                fmt6(bits(outcome.c_nats)),
                fmt6(outcome.accuracy),
                fmt6(compression_factor(rate, cfg.baselines.h_x)?),
            ));
        }
        write_text(&dir.join(PCA_FRONTIER_FILE), &text)
    })
}

/// Label distortion of a frozen randomly initialized network, one row.
fn run_random(cfg: &ConfigTree, data: &DatasetPair, opts: &RunOptions) -> Result<RunSummary> {
    baseline_run(cfg, "baseline-random-encoder", data.classes(), opts, |dir| {
        let kind = match cfg.baselines.random_kind {
            NetKind::Fc => RandomEncoderKind::FullyConnected,
            NetKind::Conv => RandomEncoderKind::Convolutional,
        };
        let net_seed = derive_seed(cfg.train.seed, "random.init");
        let train_feats = random_encoder(kind, net_seed, &widen(data.train.images())?)?;
        let eval_feats = random_encoder(kind, net_seed, &widen(data.eval.images())?)?;
        let pcfg = probe_config(cfg, derive_seed(cfg.train.seed, "random.probe"));
        let outcome = probe_label_distortion(
            &ProbeSource::Deterministic { features: &train_feats },
            data.train.require_labels()?,
            &ProbeSource::Deterministic { features: &eval_feats },
            data.eval.require_labels()?,
            data.classes(),
            &pcfg,
        )?;
        let source = format!("random-{}", cfg.baselines.random_kind.as_str());
        write_text(
            &dir.join(BASELINE_FILE),
            &format!(
                "{BASELINE_HEADER}\n{source},{},{},{}\n",
                fmt6(outcome.c_nats),
                fmt6(bits(outcome.c_nats)),
                fmt6(outcome.accuracy),
            ),
        )
    })
}

/// Supervised ceiling: train a classifier end to end on raw images.
fn run_supervised(cfg: &ConfigTree, data: &DatasetPair, opts: &RunOptions) -> Result<RunSummary> {
    baseline_run(cfg, "baseline-supervised", data.classes(), opts, |dir| {
        let kind = match cfg.baselines.supervised_kind {
            NetKind::Fc => SupervisedKind::SimpleFc,
            NetKind::Conv => {
                let side = conv_side(data.train.dim())?;
                SupervisedKind::Conv {
                    spec: ConvClassifierSpec::baseline(side, 1, data.classes()),
                }
            }
        };
        let pcfg = probe_config(cfg, derive_seed(cfg.train.seed, "supervised.probe"));
        let outcome = train_supervised_baseline(&kind, &data.train, &data.eval, &pcfg)?;
        let source = format!("supervised-{}", cfg.baselines.supervised_kind.as_str());
        write_text(
            &dir.join(BASELINE_FILE),
            &format!(
                "{BASELINE_HEADER}\n{source},{},{},{}\n",
                fmt6(outcome.c_nats),
                fmt6(bits(outcome.c_nats)),
                fmt6(outcome.accuracy),
            ),
        )
    })
}

fn conv_side(dim: usize) -> Result<usize> {
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim {
        return Err(Error::InvalidArg(format!(
            "conv baseline needs square images, got dimension {dim}"
        )));
    }
    Ok(side)
}

/// The random-discard reference curve, sampled densely with exact endpoints.
/// Needs only the class count, so callers can skip loading images.
pub fn run_discard(cfg: &ConfigTree, classes: usize, opts: &RunOptions) -> Result<RunSummary> {
    baseline_run(cfg, "baseline-discard-line", classes, opts, |dir| {
        let text = discard_csv(cfg, classes)?;
        write_text(&dir.join(DISCARD_FILE), &text)
    })
}

/// discard_line.csv body: rates span [0, H_X] on a 100-point grid whose ends
/// hit 0 and H_X exactly, so the endpoint values are bit-exact.
pub fn discard_csv(cfg: &ConfigTree, classes: usize) -> Result<String> {
    let entropy = entropy_constants(cfg, classes)?;
    let line = DiscardLine::new(entropy, cfg.baselines.discard_floor)?;
    let mut text = String::from(DISCARD_HEADER);
    text.push('\n');
    for i in 0..DISCARD_POINTS {
        let rate = entropy.h_x * (i as f64 / (DISCARD_POINTS - 1) as f64);
        let c = discard_line(&line, rate)?;
        text.push_str(&format!("{},{},{}\n", fmt6(rate), fmt6(c), fmt6(bits(c))));
    }
    Ok(text)
}

//! Supervised baselines: classifiers trained directly on pixels with the
//! probe schedule. Their held-out cross-entropy is a ceiling on how much
//! label information any encoder of the same input could preserve.

use rdprobe_core::{
    derive_seed, log_sum_exp, Adam, AdamConfig, Error, Graph, Result, Rng, RunningMean,
};
use rdprobe_datasets::{iterate_batches, DatasetSplit};
use rdprobe_models::{
    bind, conv_classify_nodes, init_conv_classifier, ClassifierSpec, ConvClassifierSpec,
    ParamSet, RunMode,
};
use rdprobe_objectives::{probe_label_distortion, staircase_lr, ProbeConfig, ProbeSource};

/// Which supervised architecture to train.
#[derive(Debug, Clone, PartialEq)]
pub enum SupervisedKind {
    /// The probe classifier (2x200 ELU) on raw pixels.
    SimpleFc,
    /// A convolutional classifier; dropout fires during training only.
    Conv { spec: ConvClassifierSpec },
}

/// Result of a supervised run: held-out cross-entropy in nats, held-out
/// accuracy, and the trained weights for later re-evaluation.
#[derive(Debug, Clone)]
pub struct SupervisedOutcome {
    pub c_nats: f64,
    pub accuracy: f64,
    pub params: ParamSet<f64>,
}

fn check_splits(train: &DatasetSplit, eval: &DatasetSplit) -> Result<()> {
    if train.dim() != eval.dim() {
        return Err(Error::ShapeMismatch {
            op: "supervised_baseline",
            detail: format!("train dim {} vs eval dim {}", train.dim(), eval.dim()),
        });
    }
    if train.class_count() != eval.class_count() {
        return Err(Error::InvalidArg(format!(
            "train has {} classes, eval {}",
            train.class_count(),
            eval.class_count()
        )));
    }
    train.require_labels()?;
    eval.require_labels()?;
    Ok(())
}

/// Train the supervised baseline on pixel inputs and measure held-out C and
/// accuracy. Both kinds use the probe's Adam staircase schedule from `cfg`;
/// the fully connected kind is exactly the probe run on raw pixels.
pub fn train_supervised_baseline(
    kind: &SupervisedKind,
    train: &DatasetSplit,
    eval: &DatasetSplit,
    cfg: &ProbeConfig,
) -> Result<SupervisedOutcome> {
    cfg.validate()?;
    check_splits(train, eval)?;
    let train_labels = train.require_labels()?;
    let eval_labels = eval.require_labels()?;
    match kind {
        SupervisedKind::SimpleFc => {
            let all_train: Vec<usize> = (0..train.len()).collect();
            let all_eval: Vec<usize> = (0..eval.len()).collect();
            let train_px = train.gather::<f64>(&all_train);
            let eval_px = eval.gather::<f64>(&all_eval);
            let out = probe_label_distortion(
                &ProbeSource::Deterministic { features: &train_px },
                train_labels,
                &ProbeSource::Deterministic { features: &eval_px },
                eval_labels,
                train.class_count(),
                cfg,
            )?;
            Ok(SupervisedOutcome { c_nats: out.c_nats, accuracy: out.accuracy, params: out.params })
        }
        SupervisedKind::Conv { spec } => {
            spec.validate()?;
            if spec.conv.input_dim() != train.dim() {
                return Err(Error::ShapeMismatch {
                    op: "supervised_baseline",
                    detail: format!(
                        "conv trunk expects dim {}, images have {}",
                        spec.conv.input_dim(),
                        train.dim()
                    ),
                });
            }
            if spec.class_count != train.class_count() {
                return Err(Error::InvalidArg(format!(
                    "conv head has {} classes, split {}",
                    spec.class_count,
                    train.class_count()
                )));
            }
            let mut params: ParamSet<f64> =
                init_conv_classifier(spec, derive_seed(cfg.seed, "supervised.init"))?;
            let mut adam = Adam::new(AdamConfig::new(cfg.base_lr))?;
            let mut dropout_rng = Rng::new(derive_seed(cfg.seed, "supervised.dropout"));
            for epoch in 0..cfg.epochs {
                adam.set_lr(staircase_lr(cfg, epoch))?;
                let batches = iterate_batches(
                    train.len(),
                    cfg.batch_size,
                    derive_seed(cfg.seed, &format!("supervised.shuffle.{epoch}")),
                )?;
                for idx in &batches {
                    let x = train.gather::<f64>(idx);
                    let labels = train.gather_labels(idx)?;
                    let mut g = Graph::new();
                    let bound = bind(&mut g, &params)?;
                    let xn = g.constant(x)?;
                    let logits = conv_classify_nodes(
                        &mut g,
                        &bound,
                        spec,
                        xn,
                        &mut RunMode::Train { rng: &mut dropout_rng },
                    )?;
                    let ce = g.softmax_ce(logits, &labels)?;
                    let loss = g.mean(ce)?;
                    let grads = g.backward(loss)?;
                    adam.step(params.entries_mut(), &grads)?;
                }
            }
            let (c_nats, accuracy) = eval_conv(&params, spec, eval, cfg.batch_size)?;
            Ok(SupervisedOutcome { c_nats, accuracy, params })
        }
    }
}

/// Held-out C and accuracy of trained supervised weights. Evaluation is
/// deterministic: dropout is off, every forward is a plain function of the
/// weights and images.
pub fn evaluate_supervised(
    kind: &SupervisedKind,
    params: &ParamSet<f64>,
    split: &DatasetSplit,
    batch_size: usize,
) -> Result<(f64, f64)> {
    split.require_labels()?;
    match kind {
        SupervisedKind::SimpleFc => {
            let all: Vec<usize> = (0..split.len()).collect();
            let px = split.gather::<f64>(&all);
            let spec = ClassifierSpec::probe(split.dim(), split.class_count());
            rdprobe_objectives::evaluate_probe(
                params,
                &spec,
                &ProbeSource::Deterministic { features: &px },
                split.require_labels()?,
                1,
                batch_size,
                0,
            )
        }
        SupervisedKind::Conv { spec } => eval_conv(params, spec, split, batch_size),
    }
}

fn eval_conv(
    params: &ParamSet<f64>,
    spec: &ConvClassifierSpec,
    split: &DatasetSplit,
    batch_size: usize,
) -> Result<(f64, f64)> {
    let labels = split.require_labels()?;
    let n = split.len();
    let k = spec.class_count;
    let mut ce = RunningMean::new();
    let mut correct = 0u64;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let x = split.gather::<f64>(&idx);
        let mut g = Graph::new();
        let bound = bind(&mut g, params)?;
        let xn = g.constant(x)?;
        let logits_node = conv_classify_nodes(&mut g, &bound, spec, xn, &mut RunMode::Eval)?;
        let logits = g.value(logits_node);
        for (r, &i) in idx.iter().enumerate() {
            let row = logits.row(r);
            let lse = log_sum_exp(row);
            ce.push(lse - row[labels[i]]);
            let mut best = 0;
            for c in 1..k {
                if row[c] > row[best] {
                    best = c;
                }
            }
            if best == labels[i] {
                correct += 1;
            }
        }
        start = end;
    }
    Ok((ce.mean(), correct as f64 / n as f64))
}

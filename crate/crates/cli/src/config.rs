//! Experiment configuration: one JSON tree covering data, model, training,
//! probe, and baseline knobs. Unknown keys are rejected and every validation
//! error names the full key path. Parsed trees render to a canonical JSON
//! string (sorted keys, defaults materialized) that seeds the run id.

use std::path::{Path, PathBuf};

use rdprobe_core::{Error, Result};
use serde_json::{Map, Number, Value};

/// Marginal noise grid for the PCA frontier, spanning roughly 1 to 70 nats
/// at the default 30 components.
pub const DEFAULT_PCA_SIGMAS: [f64; 10] = [0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0, 5.0];

/// Image entropy in nats for the binarized digit corpus.
pub const DEFAULT_H_X: f64 = 79.78;

/// Full configuration for one experiment. Every field has a documented
/// default except `dataset.kind` and `train.beta`, so the minimal config is
/// `{"dataset": {"kind": "synth"}, "train": {"beta": 1}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigTree {
    pub dataset: DatasetConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub probe: ProbeSection,
    pub baselines: BaselineSection,
    pub sweep: SweepSection,
    /// Run directories land under this directory; not part of the run id.
    pub out: PathBuf,
}

/// Where images and labels come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    /// Procedural glyph corpus rendered on the fly: `train_n` (default
    /// 10000), `eval_n` (default 2000), `seed` (default 0).
    Synth { train_n: usize, eval_n: usize, seed: u64 },
    /// Images plus label sidecars read from disk.
    Files(FileDataset),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    /// Big-endian IDX images with an IDX label file.
    Idx,
    /// Whitespace-separated amat rows with a plain-text label file.
    Amat,
}

impl FileFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            FileFormat::Idx => "idx",
            FileFormat::Amat => "amat",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileDataset {
    pub format: FileFormat,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub eval_images: PathBuf,
    pub eval_labels: PathBuf,
    pub binarize: BinarizeChoice,
    /// Keep only the first n training examples when set.
    pub train_take: Option<usize>,
    pub eval_take: Option<usize>,
}

/// How grayscale pixels become {0, 1}; default threshold at 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinarizeChoice {
    Threshold,
    Stochastic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    /// Encoder trunk widths, default [512, 512].
    pub encoder_hidden: Vec<usize>,
    /// Decoder widths, default [512, 512].
    pub decoder_hidden: Vec<usize>,
    /// Default 16.
    pub latent_dim: usize,
    pub marginal: MarginalChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalChoice {
    /// Fixed standard normal (default).
    Standard,
    /// Learned Gaussian mixture with `components` modes (default 10).
    Mixture { components: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    /// Rate weight in loss = D + beta * R. Required, must be >= 0.
    pub beta: f64,
    /// Default 20; 0 records only the initialization row.
    pub epochs: usize,
    /// Adam step size, default 1e-3.
    pub lr: f64,
    /// Default 128.
    pub batch: usize,
    /// Default 0; the --seed flag overrides it.
    pub seed: u64,
    /// Monte Carlo draws for the held-out rate estimate, default 16.
    pub rate_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSection {
    /// Default 100.
    pub epochs: usize,
    /// Default 1e-4.
    pub lr: f64,
    /// Epochs between learning-rate drops, default 25.
    pub decay_every: usize,
    /// Multiplier at each drop, default 0.1.
    pub decay_factor: f64,
    /// Default 128.
    pub batch: usize,
    /// Evaluation draws per example for stochastic sources, default 16.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSection {
    /// Principal components kept by the PCA encoder, default 30.
    pub pca_k: usize,
    /// Whitened-channel noise levels for the frontier.
    pub pca_sigmas: Vec<f64>,
    /// Right endpoint of the discard line, default 0.
    pub discard_floor: f64,
    /// Image entropy in nats, default 79.78.
    pub h_x: f64,
    /// Random-encoder architecture, "fc" (default) or "conv".
    pub random_kind: NetKind,
    /// Supervised-ceiling architecture, "fc" (default) or "conv".
    pub supervised_kind: NetKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Fc,
    Conv,
}

impl NetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NetKind::Fc => "fc",
            NetKind::Conv => "conv",
        }
    }
}

/// Beta and seed lists for the sweep subcommand; defaults are the single
/// configured (train.beta, train.seed) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// Reference encoders the baseline subcommand can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Pca,
    RandomEncoder,
    Supervised,
    DiscardLine,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Pca => "pca",
            BaselineKind::RandomEncoder => "random-encoder",
            BaselineKind::Supervised => "supervised",
            BaselineKind::DiscardLine => "discard-line",
        }
    }
}

/// A config section with its dotted path prefix; absent sections read as
/// empty objects so defaults apply uniformly.
struct Node<'a> {
    prefix: &'static str,
    map: Option<&'a Map<String, Value>>,
}

impl<'a> Node<'a> {
    fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        if let Some(map) = self.map {
            for key in map.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(Error::InvalidArg(format!("unknown key \"{}\"", self.path(key))));
                }
            }
        }
        Ok(())
    }

    fn value(&self, key: &str) -> Option<&'a Value> {
        self.map.and_then(|m| m.get(key))
    }

    fn has(&self, key: &str) -> bool {
        self.value(key).is_some()
    }

    fn child(&self, root_key: &'static str) -> Result<Node<'a>> {
        match self.value(root_key) {
            None => Ok(Node { prefix: root_key, map: None }),
            Some(Value::Object(m)) => Ok(Node { prefix: root_key, map: Some(m) }),
            Some(_) => Err(Error::InvalidArg(format!("{root_key} must be an object"))),
        }
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(_) => Err(Error::InvalidArg(format!("{} must be a number", self.path(key)))),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&self, key: &str) -> Result<f64> {
        self.f64_opt(key)?
            .ok_or_else(|| Error::InvalidArg(format!("{} is required", self.path(key))))
    }

    fn uint_opt(&self, key: &str) -> Result<Option<u64>> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::Number(n)) if n.as_u64().is_some() => Ok(n.as_u64()),
            Some(_) => {
                Err(Error::InvalidArg(format!("{} must be a nonnegative integer", self.path(key))))
            }
        }
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.uint_opt(key)?.map(|v| v as usize))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.uint_opt(key)?.unwrap_or(default))
    }

    fn str_opt(&self, key: &str) -> Result<Option<&'a str>> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(Error::InvalidArg(format!("{} must be a string", self.path(key)))),
        }
    }

    fn str_or(&self, key: &str, default: &'a str) -> Result<&'a str> {
        Ok(self.str_opt(key)?.unwrap_or(default))
    }

    fn path_req(&self, key: &str) -> Result<PathBuf> {
        let s = self
            .str_opt(key)?
            .ok_or_else(|| Error::InvalidArg(format!("{} is required", self.path(key))))?;
        if s.is_empty() {
            return Err(Error::InvalidArg(format!("{} must be a nonempty path", self.path(key))));
        }
        Ok(PathBuf::from(s))
    }

    fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.value(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        Value::Number(n) if n.as_f64().is_some() => out.push(n.as_f64().unwrap()),
                        _ => {
                            return Err(Error::InvalidArg(format!(
                                "{} must be an array of numbers",
                                self.path(key)
                            )))
                        }
                    }
                }
                Ok(out)
            }
            Some(_) => {
                Err(Error::InvalidArg(format!("{} must be an array of numbers", self.path(key))))
            }
        }
    }

    fn u64_list_or(&self, key: &str, default: &[u64]) -> Result<Vec<u64>> {
        match self.value(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        Value::Number(n) if n.as_u64().is_some() => out.push(n.as_u64().unwrap()),
                        _ => {
                            return Err(Error::InvalidArg(format!(
                                "{} must be an array of nonnegative integers",
                                self.path(key)
                            )))
                        }
                    }
                }
                Ok(out)
            }
            Some(_) => Err(Error::InvalidArg(format!(
                "{} must be an array of nonnegative integers",
                self.path(key)
            ))),
        }
    }

    fn usize_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        if !self.has(key) {
            return Ok(default.to_vec());
        }
        Ok(self.u64_list_or(key, &[])?.into_iter().map(|v| v as usize).collect())
    }
}

fn nonneg(v: f64, path: &str) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidArg(format!("{path} must be >= 0")))
    }
}

fn positive(v: f64, path: &str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidArg(format!("{path} must be > 0")))
    }
}

fn at_least_one(v: usize, path: &str) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(Error::InvalidArg(format!("{path} must be at least 1")))
    }
}

fn net_kind(s: &str, path: &str) -> Result<NetKind> {
    match s {
        "fc" => Ok(NetKind::Fc),
        "conv" => Ok(NetKind::Conv),
        _ => Err(Error::InvalidArg(format!("{path} must be \"fc\" or \"conv\""))),
    }
}

impl ConfigTree {
    pub fn from_text(text: &str) -> Result<ConfigTree> {
        Self::parse(text, "<config>")
    }

    pub fn from_path(path: &Path) -> Result<ConfigTree> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn parse(text: &str, origin: &str) -> Result<ConfigTree> {
        if text.trim().is_empty() {
            return Err(Error::Parse { path: origin.to_string(), detail: "empty config".into() });
        }
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::Parse { path: origin.to_string(), detail: e.to_string() })?;
        let map = match &value {
            Value::Object(m) => m,
            _ => return Err(Error::InvalidArg("config root must be a JSON object".into())),
        };
        let root = Node { prefix: "", map: Some(map) };
        root.check_keys(&["dataset", "model", "train", "probe", "baselines", "sweep", "out"])?;

        let dataset = parse_dataset(&root.child("dataset")?)?;
        let model = parse_model(&root.child("model")?)?;
        let train = parse_train(&root.child("train")?)?;
        let probe = parse_probe(&root.child("probe")?)?;
        let baselines = parse_baselines(&root.child("baselines")?)?;
        let sweep = parse_sweep(&root.child("sweep")?, &train)?;
        let out = PathBuf::from(root.str_or("out", "runs")?);

        Ok(ConfigTree { dataset, model, train, probe, baselines, sweep, out })
    }

    /// Canonical JSON of everything that defines the computation: sorted
    /// keys, defaults materialized, `out` and the sweep lists excluded so a
    /// run keeps its id across output locations and sweep groupings.
    pub fn canonical_json(&self) -> String {
        let mut root = Map::new();
        root.insert("dataset".into(), self.dataset.canonical());
        root.insert("model".into(), self.model.canonical());
        root.insert("train".into(), self.train.canonical());
        root.insert("probe".into(), self.probe.canonical());
        root.insert("baselines".into(), self.baselines.canonical());
        Value::Object(root).to_string()
    }

    /// Copy with the training beta and seed replaced; sweep cells reuse this
    /// so a swept run is indistinguishable from the same run trained alone.
    pub fn with_beta_seed(&self, beta: f64, seed: u64) -> ConfigTree {
        let mut cfg = self.clone();
        cfg.train.beta = beta;
        cfg.train.seed = seed;
        cfg
    }
}

fn parse_dataset(node: &Node) -> Result<DatasetConfig> {
    let kind = node
        .str_opt("kind")?
        .ok_or_else(|| Error::InvalidArg("dataset.kind is required".into()))?;
    match kind {
        "synth" => {
            node.check_keys(&["kind", "train_n", "eval_n", "seed"])?;
            Ok(DatasetConfig::Synth {
                train_n: at_least_one(node.usize_or("train_n", 10_000)?, "dataset.train_n")?,
                eval_n: at_least_one(node.usize_or("eval_n", 2_000)?, "dataset.eval_n")?,
                seed: node.u64_or("seed", 0)?,
            })
        }
        "idx" | "amat" => {
            node.check_keys(&[
                "kind",
                "train_images",
                "train_labels",
                "eval_images",
                "eval_labels",
                "binarize",
                "binarize_seed",
                "train_take",
                "eval_take",
            ])?;
            let binarize = match node.str_or("binarize", "threshold")? {
                "threshold" => {
                    if node.has("binarize_seed") {
                        return Err(Error::InvalidArg(
                            "dataset.binarize_seed requires binarize = \"stochastic\"".into(),
                        ));
                    }
                    BinarizeChoice::Threshold
                }
                "stochastic" => BinarizeChoice::Stochastic { seed: node.u64_or("binarize_seed", 0)? },
                _ => {
                    return Err(Error::InvalidArg(
                        "dataset.binarize must be \"threshold\" or \"stochastic\"".into(),
                    ))
                }
            };
            let take = |key: &str| -> Result<Option<usize>> {
                match node.usize_opt(key)? {
                    Some(n) => Ok(Some(at_least_one(n, &node.path(key))?)),
                    None => Ok(None),
                }
            };
            Ok(DatasetConfig::Files(FileDataset {
                format: if kind == "idx" { FileFormat::Idx } else { FileFormat::Amat },
                train_images: node.path_req("train_images")?,
                train_labels: node.path_req("train_labels")?,
                eval_images: node.path_req("eval_images")?,
                eval_labels: node.path_req("eval_labels")?,
                binarize,
                train_take: take("train_take")?,
                eval_take: take("eval_take")?,
            }))
        }
        _ => Err(Error::InvalidArg("dataset.kind must be \"synth\", \"idx\", or \"amat\"".into())),
    }
}

fn parse_model(node: &Node) -> Result<ModelSection> {
    node.check_keys(&["encoder_hidden", "decoder_hidden", "latent_dim", "marginal", "components"])?;
    let check_widths = |widths: &[usize], path: &str| -> Result<()> {
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArg(format!("{path} entries must be at least 1")));
        }
        Ok(())
    };
    let encoder_hidden = node.usize_list_or("encoder_hidden", &[512, 512])?;
    check_widths(&encoder_hidden, "model.encoder_hidden")?;
    let decoder_hidden = node.usize_list_or("decoder_hidden", &[512, 512])?;
    check_widths(&decoder_hidden, "model.decoder_hidden")?;
    let marginal = match node.str_or("marginal", "standard")? {
        "standard" => {
            if node.has("components") {
                return Err(Error::InvalidArg(
                    "model.components requires marginal = \"mixture\"".into(),
                ));
            }
            MarginalChoice::Standard
        }
        "mixture" => MarginalChoice::Mixture {
            components: at_least_one(node.usize_or("components", 10)?, "model.components")?,
        },
        _ => {
            return Err(Error::InvalidArg(
                "model.marginal must be \"standard\" or \"mixture\"".into(),
            ))
        }
    };
    Ok(ModelSection {
        encoder_hidden,
        decoder_hidden,
        latent_dim: at_least_one(node.usize_or("latent_dim", 16)?, "model.latent_dim")?,
        marginal,
    })
}

fn parse_train(node: &Node) -> Result<TrainSection> {
    node.check_keys(&["beta", "epochs", "lr", "batch", "seed", "rate_samples"])?;
    Ok(TrainSection {
        beta: nonneg(node.f64_req("beta")?, "train.beta")?,
        epochs: node.usize_or("epochs", 20)?,
        lr: positive(node.f64_or("lr", 1e-3)?, "train.lr")?,
        batch: at_least_one(node.usize_or("batch", 128)?, "train.batch")?,
        seed: node.u64_or("seed", 0)?,
        rate_samples: at_least_one(node.usize_or("rate_samples", 16)?, "train.rate_samples")?,
    })
}

fn parse_probe(node: &Node) -> Result<ProbeSection> {
    node.check_keys(&["epochs", "lr", "decay_every", "decay_factor", "batch", "samples"])?;
    let decay_factor = node.f64_or("decay_factor", 0.1)?;
    if !(decay_factor.is_finite() && decay_factor > 0.0 && decay_factor <= 1.0) {
        return Err(Error::InvalidArg("probe.decay_factor must be in (0, 1]".into()));
    }
    Ok(ProbeSection {
        epochs: node.usize_or("epochs", 100)?,
        lr: positive(node.f64_or("lr", 1e-4)?, "probe.lr")?,
        decay_every: at_least_one(node.usize_or("decay_every", 25)?, "probe.decay_every")?,
        decay_factor,
        batch: at_least_one(node.usize_or("batch", 128)?, "probe.batch")?,
        samples: at_least_one(node.usize_or("samples", 16)?, "probe.samples")?,
    })
}

fn parse_baselines(node: &Node) -> Result<BaselineSection> {
    node.check_keys(&[
        "pca_k",
        "pca_sigmas",
        "discard_floor",
        "h_x",
        "random_kind",
        "supervised_kind",
    ])?;
    let pca_sigmas = node.f64_list_or("pca_sigmas", &DEFAULT_PCA_SIGMAS)?;
    if pca_sigmas.is_empty() {
        return Err(Error::InvalidArg("baselines.pca_sigmas must be nonempty".into()));
    }
    for &s in &pca_sigmas {
        positive(s, "baselines.pca_sigmas entries")?;
    }
    Ok(BaselineSection {
        pca_k: at_least_one(node.usize_or("pca_k", 30)?, "baselines.pca_k")?,
        pca_sigmas,
        discard_floor: nonneg(node.f64_or("discard_floor", 0.0)?, "baselines.discard_floor")?,
        h_x: positive(node.f64_or("h_x", DEFAULT_H_X)?, "baselines.h_x")?,
        random_kind: net_kind(node.str_or("random_kind", "fc")?, "baselines.random_kind")?,
        supervised_kind: net_kind(
            node.str_or("supervised_kind", "fc")?,
            "baselines.supervised_kind",
        )?,
    })
}

fn parse_sweep(node: &Node, train: &TrainSection) -> Result<SweepSection> {
    node.check_keys(&["betas", "seeds"])?;
    let betas = node.f64_list_or("betas", &[train.beta])?;
    if betas.is_empty() {
        return Err(Error::InvalidArg("sweep.betas must be nonempty".into()));
    }
    for &b in &betas {
        nonneg(b, "sweep.betas entries")?;
    }
    let seeds = node.u64_list_or("seeds", &[train.seed])?;
    if seeds.is_empty() {
        return Err(Error::InvalidArg("sweep.seeds must be nonempty".into()));
    }
    Ok(SweepSection { betas, seeds })
}

fn num(v: f64) -> Value {
    Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

impl DatasetConfig {
    fn canonical(&self) -> Value {
        let mut m = Map::new();
        match self {
            DatasetConfig::Synth { train_n, eval_n, seed } => {
                m.insert("kind".into(), "synth".into());
                m.insert("train_n".into(), (*train_n).into());
                m.insert("eval_n".into(), (*eval_n).into());
                m.insert("seed".into(), (*seed).into());
            }
            DatasetConfig::Files(f) => {
                m.insert("kind".into(), f.format.as_str().into());
                m.insert("train_images".into(), f.train_images.display().to_string().into());
                m.insert("train_labels".into(), f.train_labels.display().to_string().into());
                m.insert("eval_images".into(), f.eval_images.display().to_string().into());
                m.insert("eval_labels".into(), f.eval_labels.display().to_string().into());
                match f.binarize {
                    BinarizeChoice::Threshold => {
                        m.insert("binarize".into(), "threshold".into());
                    }
                    BinarizeChoice::Stochastic { seed } => {
                        m.insert("binarize".into(), "stochastic".into());
                        m.insert("binarize_seed".into(), seed.into());
                    }
                }
                if let Some(n) = f.train_take {
                    m.insert("train_take".into(), n.into());
                }
                if let Some(n) = f.eval_take {
                    m.insert("eval_take".into(), n.into());
                }
            }
        }
        Value::Object(m)
    }
}

impl ModelSection {
    fn canonical(&self) -> Value {
        let mut m = Map::new();
        m.insert("encoder_hidden".into(), self.encoder_hidden.clone().into());
        m.insert("decoder_hidden".into(), self.decoder_hidden.clone().into());
        m.insert("latent_dim".into(), self.latent_dim.into());
        match self.marginal {
            MarginalChoice::Standard => {
                m.insert("marginal".into(), "standard".into());
            }
            MarginalChoice::Mixture { components } => {
                m.insert("marginal".into(), "mixture".into());
                m.insert("components".into(), components.into());
            }
        }
        Value::Object(m)
    }
}

impl TrainSection {
    fn canonical(&self) -> Value {
        let mut m = Map::new();
        m.insert("beta".into(), num(self.beta));
        m.insert("epochs".into(), self.epochs.into());
        m.insert("lr".into(), num(self.lr));
        m.insert("batch".into(), self.batch.into());
        m.insert("seed".into(), self.seed.into());
        m.insert("rate_samples".into(), self.rate_samples.into());
        Value::Object(m)
    }
}

impl ProbeSection {
    fn canonical(&self) -> Value {
        let mut m = Map::new();
        m.insert("epochs".into(), self.epochs.into());
        m.insert("lr".into(), num(self.lr));
        m.insert("decay_every".into(), self.decay_every.into());
        m.insert("decay_factor".into(), num(self.decay_factor));
        m.insert("batch".into(), self.batch.into());
        m.insert("samples".into(), self.samples.into());
        Value::Object(m)
    }
}

impl BaselineSection {
    fn canonical(&self) -> Value {
        let mut m = Map::new();
        m.insert("pca_k".into(), self.pca_k.into());
        m.insert(
            "pca_sigmas".into(),
            Value::Array(self.pca_sigmas.iter().map(|&s| num(s)).collect()),
        );
        m.insert("discard_floor".into(), num(self.discard_floor));
        m.insert("h_x".into(), num(self.h_x));
        m.insert("random_kind".into(), self.random_kind.as_str().into());
        m.insert("supervised_kind".into(), self.supervised_kind.as_str().into());
        Value::Object(m)
    }
}

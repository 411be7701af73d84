//! Parameter storage and initialization.
//!
//! A `ParamSet` is an ordered list of named tensors plus the provenance
//! needed to re-derive it: a hash of the canonical spec strings and the
//! init seed. Order is fixed by construction and preserved through
//! serialization, so optimizer state and gradient lookups stay aligned.

use rdprobe_core::{derive_seed, fl, Error, Real, Result, Rng, Tensor};

use crate::specs::{
    ClassifierSpec, ConvClassifierSpec, DecoderSpec, EncoderSpec, MarginalSpec, TrunkSpec,
};

#[derive(Debug, Clone)]
pub struct ParamSet<F: Real> {
    entries: Vec<(String, Tensor<F>)>,
    spec_hash: u64,
    init_seed: u64,
}

impl<F: Real> ParamSet<F> {
    pub fn new(entries: Vec<(String, Tensor<F>)>, spec_hash: u64, init_seed: u64) -> Result<Self> {
        for i in 0..entries.len() {
            for j in 0..i {
                if entries[i].0 == entries[j].0 {
                    return Err(Error::InvalidArg(format!("duplicate parameter name {}", entries[i].0)));
                }
            }
        }
        Ok(ParamSet { entries, spec_hash, init_seed })
    }

    pub fn entries(&self) -> &[(String, Tensor<F>)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut Vec<(String, Tensor<F>)> {
        &mut self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn spec_hash(&self) -> u64 {
        self.spec_hash
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<G: Real>(&self) -> ParamSet<G> {
        ParamSet {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast::<G>())).collect(),
            spec_hash: self.spec_hash,
            init_seed: self.init_seed,
        }
    }

    /// Merge parameter sets for joint optimization. Names must not collide.
    pub fn merged(mut self, other: ParamSet<F>) -> Result<Self> {
        let spec_hash = fnv_fold(self.spec_hash, &other.spec_hash.to_le_bytes());
        self.entries.extend(other.entries);
        ParamSet::new(self.entries, spec_hash, self.init_seed)
    }
}

/// FNV-1a over bytes, seeded; the same folding the RNG stream splitter uses.
fn fnv_fold(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn spec_hash_of(canonical: &str) -> u64 {
    fnv_fold(0xcbf2_9ce4_8422_2325, canonical.as_bytes())
}

/// Glorot-uniform weight on [-sqrt(6/(fan_in+fan_out)), +...].
fn glorot<F: Real>(rng: &mut Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor<F> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<F> = (0..n).map(|_| fl((rng.next_f64() * 2.0 - 1.0) * bound)).collect();
    Tensor::new(shape, data).expect("init shapes are validated before use")
}

struct Builder<F: Real> {
    rng: Rng,
    entries: Vec<(String, Tensor<F>)>,
}

impl<F: Real> Builder<F> {
    fn new(seed: u64, tag: &str) -> Self {
        Builder { rng: Rng::new(derive_seed(seed, tag)), entries: Vec::new() }
    }

    fn affine(&mut self, prefix: &str, idx: usize, n_in: usize, n_out: usize) {
        let w = glorot(&mut self.rng, vec![n_in, n_out], n_in, n_out);
        self.entries.push((format!("{prefix}.w{idx}"), w));
        self.entries.push((format!("{prefix}.b{idx}"), Tensor::zeros(vec![n_out])));
    }

    fn affine_zero(&mut self, prefix: &str, idx: usize, n_in: usize, n_out: usize) {
        self.entries.push((format!("{prefix}.w{idx}"), Tensor::zeros(vec![n_in, n_out])));
        self.entries.push((format!("{prefix}.b{idx}"), Tensor::zeros(vec![n_out])));
    }

    fn conv(&mut self, prefix: &str, idx: usize, c_in: usize, c_out: usize, k: usize) {
        let w = glorot(&mut self.rng, vec![c_out, c_in, k, k], c_in * k * k, c_out * k * k);
        self.entries.push((format!("{prefix}.w{idx}"), w));
        self.entries.push((format!("{prefix}.b{idx}"), Tensor::zeros(vec![c_out])));
    }
}

pub const CONV_KERNEL: usize = 5;

fn trunk_params<F: Real>(b: &mut Builder<F>, prefix: &str, trunk: &TrunkSpec) {
    match trunk {
        TrunkSpec::Mlp { input_dim, hidden } => {
            let mut n_in = *input_dim;
            for (i, &h) in hidden.iter().enumerate() {
                b.affine(prefix, i, n_in, h);
                n_in = h;
            }
        }
        TrunkSpec::Conv { in_channels, layers, depth, .. } => {
            let mut c_in = *in_channels;
            for i in 0..*layers {
                b.conv(prefix, i, c_in, *depth, CONV_KERNEL);
                c_in = *depth;
            }
        }
    }
}

/// Encoder parameters: trunk plus the affine head emitting 2*latent values.
pub fn init_encoder<F: Real>(spec: &EncoderSpec, seed: u64) -> Result<ParamSet<F>> {
    spec.validate()?;
    let mut b = Builder::new(seed, "init.encoder");
    trunk_params(&mut b, "enc", &spec.trunk);
    let head_in = spec.trunk.output_dim();
    b.affine("enc.head", 0, head_in, 2 * spec.latent_dim);
    ParamSet::new(b.entries, spec_hash_of(&spec.canonical()), seed)
}

pub fn init_decoder<F: Real>(spec: &DecoderSpec, seed: u64) -> Result<ParamSet<F>> {
    spec.validate()?;
    let mut b = Builder::new(seed, "init.decoder");
    let mut n_in = spec.latent_dim;
    for (i, &h) in spec.hidden.iter().enumerate() {
        b.affine("dec", i, n_in, h);
        n_in = h;
    }
    b.affine("dec.head", 0, n_in, spec.output_dim);
    ParamSet::new(b.entries, spec_hash_of(&spec.canonical()), seed)
}

/// Classifier parameters. The final layer starts all-zero, so the softmax is
/// uniform and initial cross-entropy is exactly ln(class_count).
pub fn init_classifier<F: Real>(spec: &ClassifierSpec, seed: u64) -> Result<ParamSet<F>> {
    spec.validate()?;
    let mut b = Builder::new(seed, "init.classifier");
    let mut n_in = spec.input_dim;
    for (i, &h) in spec.hidden.iter().enumerate() {
        b.affine("cls", i, n_in, h);
        n_in = h;
    }
    b.affine_zero("cls.head", 0, n_in, spec.class_count);
    ParamSet::new(b.entries, spec_hash_of(&spec.canonical()), seed)
}

/// Convolutional classifier parameters: conv trunk, fully connected stack,
/// all-zero class head.
pub fn init_conv_classifier<F: Real>(spec: &ConvClassifierSpec, seed: u64) -> Result<ParamSet<F>> {
    spec.validate()?;
    let mut b = Builder::new(seed, "init.conv_classifier");
    trunk_params(&mut b, "cls", &spec.conv);
    let mut n_in = spec.conv.output_dim();
    for (i, &h) in spec.fc_hidden.iter().enumerate() {
        b.affine("cls.fc", i, n_in, h);
        n_in = h;
    }
    b.affine_zero("cls.head", 0, n_in, spec.class_count);
    ParamSet::new(b.entries, spec_hash_of(&spec.canonical()), seed)
}

/// Mixture marginal parameters. Means start at small Gaussian values to break
/// component symmetry; log-stds and mixture logits start at zero. The fixed
/// standard-normal marginal has no parameters.
pub fn init_marginal<F: Real>(spec: &MarginalSpec, latent_dim: usize, seed: u64) -> Result<ParamSet<F>> {
    spec.validate()?;
    if latent_dim == 0 {
        return Err(Error::InvalidArg("latent_dim must be at least 1".into()));
    }
    match spec {
        MarginalSpec::FixedStandard => {
            ParamSet::new(Vec::new(), spec_hash_of(&spec.canonical()), seed)
        }
        MarginalSpec::LearnedMixture { components } => {
            let mut rng = Rng::new(derive_seed(seed, "init.marginal"));
            let m = *components;
            let means: Vec<F> = (0..m * latent_dim).map(|_| fl(0.5 * rng.next_gaussian())).collect();
            let entries = vec![
                ("marg.means".to_string(), Tensor::new(vec![m, latent_dim], means)?),
                ("marg.log_stds".to_string(), Tensor::zeros(vec![m, latent_dim])),
                ("marg.logits".to_string(), Tensor::zeros(vec![m])),
            ];
            ParamSet::new(entries, spec_hash_of(&spec.canonical()), seed)
        }
    }
}

//! Architecture descriptions. A spec is pure data: it fixes every tensor
//! shape and a canonical string form that feeds the provenance hash.

use rdprobe_core::{Error, Result};

/// Shared feature trunk: images in, feature vector out.
#[derive(Debug, Clone, PartialEq)]
pub enum TrunkSpec {
    /// Affine + ELU stacks over flat inputs.
    Mlp { input_dim: usize, hidden: Vec<usize> },
    /// Same-padding 5x5 convolution + ELU stacks over (channels, side, side)
    /// inputs. `pool_after` and `dropout_after` hold 1-based layer indices;
    /// dropout applies only when a forward pass runs in training mode.
    Conv {
        side: usize,
        in_channels: usize,
        layers: usize,
        depth: usize,
        pool_after: Vec<usize>,
        dropout_after: Vec<usize>,
        dropout_rate: f64,
    },
}

impl TrunkSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            TrunkSpec::Mlp { input_dim, hidden } => {
                if *input_dim == 0 {
                    return Err(Error::InvalidArg("mlp trunk input_dim must be positive".into()));
                }
                if hidden.iter().any(|&h| h == 0) {
                    return Err(Error::InvalidArg("mlp hidden sizes must be positive".into()));
                }
                Ok(())
            }
            TrunkSpec::Conv { side, in_channels, layers, depth, pool_after, dropout_after, dropout_rate } => {
                if *side < 2 || *in_channels == 0 || *layers == 0 || *depth == 0 {
                    return Err(Error::InvalidArg("conv trunk dimensions must be positive".into()));
                }
                for &p in pool_after.iter().chain(dropout_after) {
                    if p == 0 || p > *layers {
                        return Err(Error::InvalidArg(format!(
                            "conv layer index {p} out of range 1..={layers}"
                        )));
                    }
                }
                if !(0.0..1.0).contains(dropout_rate) {
                    return Err(Error::InvalidArg(format!("dropout rate {dropout_rate} not in [0, 1)")));
                }
                // Every pool halves the side; it must stay poolable.
                let mut s = *side;
                for _ in pool_after {
                    if s < 2 {
                        return Err(Error::InvalidArg("too many pooling layers for input side".into()));
                    }
                    s /= 2;
                }
                Ok(())
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TrunkSpec::Mlp { input_dim, .. } => *input_dim,
            TrunkSpec::Conv { side, in_channels, .. } => side * side * in_channels,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            TrunkSpec::Mlp { input_dim, hidden } => *hidden.last().unwrap_or(input_dim),
            TrunkSpec::Conv { side, layers, depth, pool_after, .. } => {
                let mut s = *side;
                for _ in 0..pool_count_total(pool_after, *layers) {
                    s /= 2;
                }
                depth * s * s
            }
        }
    }

    fn canonical(&self) -> String {
        match self {
            TrunkSpec::Mlp { input_dim, hidden } => format!("mlp|in={input_dim}|hidden={hidden:?}"),
            TrunkSpec::Conv { side, in_channels, layers, depth, pool_after, dropout_after, dropout_rate } => {
                format!("conv|side={side}|cin={in_channels}|layers={layers}|depth={depth}|pool={pool_after:?}|drop={dropout_after:?}@{dropout_rate}")
            }
        }
    }
}

fn pool_count_total(pool_after: &[usize], layers: usize) -> usize {
    pool_after.iter().filter(|&&p| p <= layers).count()
}

/// Encoder: trunk then an affine head emitting (mean, log_std) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub trunk: TrunkSpec,
    pub latent_dim: usize,
}

impl EncoderSpec {
    /// The default trained encoder: 784-512-512 trunk, 16 latents.
    pub fn default_mlp(input_dim: usize, latent_dim: usize) -> Self {
        EncoderSpec {
            trunk: TrunkSpec::Mlp { input_dim, hidden: vec![512, 512] },
            latent_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trunk.validate()?;
        if self.latent_dim == 0 {
            return Err(Error::InvalidArg("latent_dim must be at least 1".into()));
        }
        Ok(())
    }

    pub fn canonical(&self) -> String {
        format!("encoder[{}|latent={}]", self.trunk.canonical(), self.latent_dim)
    }
}

/// Factorized Bernoulli decoder: MLP from latents to per-pixel logits.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSpec {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl DecoderSpec {
    /// Mirror of the default encoder.
    pub fn default_mlp(latent_dim: usize, output_dim: usize) -> Self {
        DecoderSpec { latent_dim, hidden: vec![512, 512], output_dim }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArg("decoder dims must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArg("decoder hidden sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn canonical(&self) -> String {
        format!("decoder[latent={}|hidden={:?}|out={}]", self.latent_dim, self.hidden, self.output_dim)
    }
}

/// The label probe and supervised heads: 2x200 ELU MLP with a zero-initialized
/// final layer so cross-entropy starts at exactly ln K.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub class_count: usize,
}

impl ClassifierSpec {
    pub fn probe(input_dim: usize, class_count: usize) -> Self {
        ClassifierSpec { input_dim, hidden: vec![200, 200], class_count }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.class_count == 0 {
            return Err(Error::InvalidArg("classifier dims must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArg("classifier hidden sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn canonical(&self) -> String {
        format!("classifier[in={}|hidden={:?}|k={}]", self.input_dim, self.hidden, self.class_count)
    }
}

/// Convolutional classifier: conv trunk, fully connected hidden layers,
/// zero-initialized class head.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvClassifierSpec {
    pub conv: TrunkSpec,
    pub fc_hidden: Vec<usize>,
    pub class_count: usize,
}

impl ConvClassifierSpec {
    /// Reference architecture: five 5x5 conv layers of depth 64 with 2x2 max
    /// pooling and 30% dropout after layers 3 and 5, then a 2x200 classifier.
    pub fn baseline(side: usize, in_channels: usize, class_count: usize) -> Self {
        ConvClassifierSpec {
            conv: TrunkSpec::Conv {
                side,
                in_channels,
                layers: 5,
                depth: 64,
                pool_after: vec![3, 5],
                dropout_after: vec![3, 5],
                dropout_rate: 0.3,
            },
            fc_hidden: vec![200, 200],
            class_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.conv, TrunkSpec::Conv { .. }) {
            return Err(Error::InvalidArg("conv classifier requires a conv trunk".into()));
        }
        self.conv.validate()?;
        if self.fc_hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArg("classifier hidden sizes must be positive".into()));
        }
        if self.class_count == 0 {
            return Err(Error::InvalidArg("classifier needs at least 1 class".into()));
        }
        Ok(())
    }

    pub fn canonical(&self) -> String {
        format!(
            "conv_classifier[{}|fc={:?}|k={}]",
            self.conv.canonical(),
            self.fc_hidden,
            self.class_count
        )
    }
}

/// Marginal m(z): fixed standard Gaussian or a learned diagonal-Gaussian
/// mixture with softmax weights.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginalSpec {
    FixedStandard,
    LearnedMixture { components: usize },
}

impl MarginalSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            MarginalSpec::FixedStandard => Ok(()),
            MarginalSpec::LearnedMixture { components } => {
                if *components == 0 {
                    return Err(Error::InvalidArg("mixture needs at least 1 component".into()));
                }
                Ok(())
            }
        }
    }

    pub fn canonical(&self) -> String {
        match self {
            MarginalSpec::FixedStandard => "marginal[fixed]".to_string(),
            MarginalSpec::LearnedMixture { components } => format!("marginal[mixture|m={components}]"),
        }
    }
}

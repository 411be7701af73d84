//! The training objective: loss = D + beta * R, assembled as one graph so a
//! single backward pass reaches encoder, decoder, and (when learned)
//! marginal parameters.

use rdprobe_core::{fl, Error, Graph, NodeId, Real, Result, Rng, Tensor};
use rdprobe_models::{
    bind, decode_nodes, encode_nodes, init_decoder, init_encoder, init_marginal,
    marginal_log_density_node, Bound, DecoderSpec, EncoderSpec, MarginalSpec, ParamSet,
};

const LN_2PI: f64 = 1.8378770664093453;

/// The full generative model: encoder, decoder, and latent marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeSpec {
    pub encoder: EncoderSpec,
    pub decoder: DecoderSpec,
    pub marginal: MarginalSpec,
}

impl VaeSpec {
    /// Default architecture: 784-512-512 encoder to `latent_dim` latents,
    /// mirrored decoder, fixed standard-normal marginal.
    pub fn default_mlp(input_dim: usize, latent_dim: usize) -> Self {
        VaeSpec {
            encoder: EncoderSpec::default_mlp(input_dim, latent_dim),
            decoder: DecoderSpec::default_mlp(latent_dim, input_dim),
            marginal: MarginalSpec::FixedStandard,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.trunk.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        self.marginal.validate()?;
        if self.decoder.latent_dim != self.encoder.latent_dim {
            return Err(Error::InvalidArg(format!(
                "decoder latent_dim {} does not match encoder latent_dim {}",
                self.decoder.latent_dim, self.encoder.latent_dim
            )));
        }
        if self.decoder.output_dim != self.encoder.trunk.input_dim() {
            return Err(Error::InvalidArg(format!(
                "decoder output_dim {} does not match encoder input dim {}",
                self.decoder.output_dim,
                self.encoder.trunk.input_dim()
            )));
        }
        Ok(())
    }

    pub fn canonical(&self) -> String {
        format!(
            "vae[{}|{}|{}]",
            self.encoder.canonical(),
            self.decoder.canonical(),
            self.marginal.canonical()
        )
    }

    /// Joint parameter set: encoder, decoder, then marginal tensors.
    pub fn init_params<F: Real>(&self, seed: u64) -> Result<ParamSet<F>> {
        self.validate()?;
        let enc = init_encoder(&self.encoder, seed)?;
        let dec = init_decoder(&self.decoder, seed)?;
        let marg = init_marginal(&self.marginal, self.latent_dim(), seed)?;
        enc.merged(dec)?.merged(marg)
    }
}

/// Nodes of one objective evaluation. `rate` and `distortion` are scalar
/// batch means; `loss = distortion + beta * rate`.
pub struct LossNodes {
    pub z: NodeId,
    pub loss: NodeId,
    pub rate: NodeId,
    pub distortion: NodeId,
}

/// Build the objective over a bound parameter set. `eps` must be a
/// (batch, latent) standard-normal draw recorded as a constant; the same
/// z = mu + sigma*eps feeds the decoder and, for learned marginals, the
/// one-sample rate estimate. Fixed marginals use the closed-form rate.
pub fn beta_vae_loss_nodes<F: Real>(
    g: &mut Graph<F>,
    bound: &Bound,
    spec: &VaeSpec,
    x: NodeId,
    eps: NodeId,
    beta: f64,
) -> Result<LossNodes> {
    if beta < 0.0 {
        return Err(Error::InvalidArg(format!("beta must be >= 0, got {beta}")));
    }
    let batch = g.value(x).rows() as f64;
    let post = encode_nodes(g, bound, &spec.encoder, x)?;
    let z = g.reparam_sample(post.mean, post.log_std, eps)?;

    let rate = match &spec.marginal {
        MarginalSpec::FixedStandard => {
            // Closed-form KL to N(0, I), elementwise then batch-averaged:
            // -ls + (exp(2 ls) + mu^2 - 1) / 2.
            let two_ls = g.scale(post.log_std, 2.0)?;
            let var = g.exp(two_ls)?;
            let musq = g.mul(post.mean, post.mean)?;
            let s = g.add(var, musq)?;
            let s = g.add_scalar(s, -1.0)?;
            let s = g.scale(s, 0.5)?;
            let kl = g.sub(s, post.log_std)?;
            let total = g.sum(kl)?;
            g.scale(total, 1.0 / batch)?
        }
        MarginalSpec::LearnedMixture { .. } => {
            // One-sample estimate of E[log q(z|x) - log m(z)] at the shared z.
            // log q at z = mu + sigma*eps reduces to -ls - (ln 2pi + eps^2)/2.
            let e2 = g.mul(eps, eps)?;
            let e2h = g.scale(e2, -0.5)?;
            let lq = g.sub(e2h, post.log_std)?;
            let lq = g.add_scalar(lq, -0.5 * LN_2PI)?;
            let lq_total = g.sum(lq)?;
            let lm = marginal_log_density_node(g, Some(bound), &spec.marginal, spec.latent_dim(), z)?;
            let lm_total = g.sum(lm)?;
            let diff = g.sub(lq_total, lm_total)?;
            g.scale(diff, 1.0 / batch)?
        }
    };

    let logits = decode_nodes(g, bound, &spec.decoder, z)?;
    let ce = g.bernoulli_ce(logits, x)?;
    let ce_total = g.sum(ce)?;
    let distortion = g.scale(ce_total, 1.0 / batch)?;

    let weighted_rate = g.scale(rate, beta)?;
    let loss = g.add(distortion, weighted_rate)?;
    Ok(LossNodes { z, loss, rate, distortion })
}

/// Value-level objective: one reparameterized sample per example, returns
/// (loss, rate, distortion) in nats.
pub fn beta_vae_loss<F: Real>(
    params: &ParamSet<F>,
    spec: &VaeSpec,
    x: &Tensor<F>,
    beta: f64,
    rng: &mut Rng,
) -> Result<(f64, f64, f64)> {
    let mut g = Graph::new();
    let bound = bind(&mut g, params)?;
    let xn = g.constant(x.clone())?;
    let eps = draw_eps(&mut g, x.rows(), spec.latent_dim(), rng)?;
    let nodes = beta_vae_loss_nodes(&mut g, &bound, spec, xn, eps, beta)?;
    Ok((
        g.value(nodes.loss).item().to_f64_(),
        g.value(nodes.rate).item().to_f64_(),
        g.value(nodes.distortion).item().to_f64_(),
    ))
}

/// Record a (batch, latent) standard-normal draw as a graph constant.
pub fn draw_eps<F: Real>(
    g: &mut Graph<F>,
    batch: usize,
    latent: usize,
    rng: &mut Rng,
) -> Result<NodeId> {
    let data: Vec<F> = (0..batch * latent).map(|_| fl(rng.next_gaussian())).collect();
    let eps = Tensor::new(vec![batch, latent], data)?;
    g.constant(eps)
}

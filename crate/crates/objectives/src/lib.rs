//! The measured quantities: rate R (nats kept about the input), distortion D
//! (reconstruction nats), and label distortion C (probe cross-entropy), plus
//! the beta-weighted training objective D + beta*R that trades them off.

mod distortion;
mod entropy;
mod loss;
mod metrics;
mod probe;
mod rate;
mod train;

pub use distortion::{decoder_distortion, distortion, distortion_per_example};
pub use entropy::{compression_factor, EntropyConstants};
pub use loss::{beta_vae_loss, beta_vae_loss_nodes, draw_eps, LossNodes, VaeSpec};
pub use metrics::RunMetrics;
pub use probe::{
    evaluate_probe, probe_label_distortion, staircase_lr, ProbeConfig, ProbeOutcome, ProbeSource,
};
pub use rate::{rate_closed_form, rate_closed_form_per_example, rate_monte_carlo, McEstimate};
pub use train::{evaluate_vae, train_vae, NanAbortInfo, VaeEval, VaeOutcome, VaeTrainConfig};

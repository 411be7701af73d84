//! Model architectures: encoder and decoder for the variational autoencoder,
//! classifier heads for probes and supervised baselines, and the latent
//! marginal. Specs fix shapes, params hold named tensors, forward builders
//! assemble graphs over them, and weights go to disk as "IPW1" files.

mod forward;
mod marginal;
mod params;
mod specs;
mod weights;

pub use forward::{
    bind, classify_logits, classify_nodes, classify_trunk_nodes, conv_classify_nodes,
    conv_trunk_nodes, decode_logits, decode_nodes, encode_nodes, encode_posterior, trunk_forward,
    Bound, PosteriorNodes, RunMode, LOG_STD_MAX, LOG_STD_MIN,
};
pub use marginal::{marginal_log_density, marginal_log_density_node};
pub use params::{
    init_classifier, init_conv_classifier, init_decoder, init_encoder, init_marginal,
    spec_hash_of, ParamSet, CONV_KERNEL,
};
pub use specs::{
    ClassifierSpec, ConvClassifierSpec, DecoderSpec, EncoderSpec, MarginalSpec, TrunkSpec,
};
pub use weights::{load_params_matching, load_raw, save_params};

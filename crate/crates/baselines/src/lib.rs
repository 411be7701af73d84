//! Reference encoders the trained models are measured against: a stochastic
//! PCA channel with a closed-form rate, untrained random networks, supervised
//! classifiers as label-information ceilings, and the discard line giving the
//! label distortion of simply truncating raw input bits.

mod discard;
mod pca;
mod random_enc;
mod supervised;

pub use discard::{discard_line, DiscardLine};
pub use pca::{
    covariance_matrix, eig_symmetric_dense, fit_pca, pca_rate, stochastic_pca_encode, PcaBasis,
};
pub use random_enc::{random_encoder, RandomEncoderKind};
pub use supervised::{
    evaluate_supervised, train_supervised_baseline, SupervisedKind, SupervisedOutcome,
};

//! Dataset loading, binarization, batching, label transfer, and the built-in
//! procedural glyph corpus.

pub mod amat;
pub mod binarize;
pub mod idx;
pub mod naive_bayes;
pub mod split;
pub mod synth;

pub use amat::{load_amat, load_labels_txt, write_amat, write_labels_txt, AMAT_COLUMNS};
pub use binarize::{binarize, BinarizeMode};
pub use idx::{load_idx, load_idx_images, load_idx_labels, IdxData, IdxKind};
pub use naive_bayes::{
    naive_bayes_accuracy, naive_bayes_fit, naive_bayes_posterior, naive_bayes_transfer_labels,
    NaiveBayesModel,
};
pub use split::{iterate_batches, DatasetSplit, SplitName};
pub use synth::{synth_binary, synth_grayscale, SYNTH_CLASSES, SYNTH_DIM, SYNTH_SIDE};

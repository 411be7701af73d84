//! Turn grayscale splits into binary ones.

use rdprobe_core::{Error, Result, Rng, Tensor};

use crate::split::DatasetSplit;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinarizeMode {
    /// x >= 0.5 becomes 1 (the tie at exactly 0.5 goes to 1).
    Threshold,
    /// Each pixel is an independent Bernoulli(x) draw from a pinned generator.
    Stochastic { seed: u64 },
}

pub fn binarize(split: &DatasetSplit, mode: BinarizeMode) -> Result<DatasetSplit> {
    let src = split.images();
    if src.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidArg("binarize input must lie in [0, 1]".into()));
    }
    let data: Vec<f32> = match mode {
        BinarizeMode::Threshold => {
            src.data().iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect()
        }
        BinarizeMode::Stochastic { seed } => {
            let mut rng = Rng::new(seed);
            src.data()
                .iter()
                .map(|&v| if rng.next_f64() < v as f64 { 1.0 } else { 0.0 })
                .collect()
        }
    };
    let images = Tensor::new(src.shape().to_vec(), data)?;
    DatasetSplit::new(split.name, images, split.labels().map(<[usize]>::to_vec), split.class_count())
}

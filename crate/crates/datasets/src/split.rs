//! In-memory dataset splits and batching helpers.

use rdprobe_core::{Error, Real, Result, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }
}

/// A named set of images with optional labels.
/// Images are row-major (n, d) with values in [0, 1]; binarized splits carry
/// exactly {0, 1}. Labels, when present, are class indices below class_count.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub name: SplitName,
    images: Tensor<f32>,
    labels: Option<Vec<usize>>,
    class_count: usize,
}

impl DatasetSplit {
    pub fn new(
        name: SplitName,
        images: Tensor<f32>,
        labels: Option<Vec<usize>>,
        class_count: usize,
    ) -> Result<Self> {
        if images.shape().len() != 2 {
            return Err(Error::InvalidArg(format!(
                "split images must be 2-d (n, d), got {:?}",
                images.shape()
            )));
        }
        if images.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArg("split images must lie in [0, 1]".into()));
        }
        if class_count == 0 {
            return Err(Error::InvalidArg("class_count must be at least 1".into()));
        }
        if let Some(ls) = &labels {
            if ls.len() != images.rows() {
                return Err(Error::InvalidArg(format!(
                    "{} labels for {} images",
                    ls.len(),
                    images.rows()
                )));
            }
            if let Some(&bad) = ls.iter().find(|&&l| l >= class_count) {
                return Err(Error::InvalidArg(format!(
                    "label {bad} out of range for {class_count} classes"
                )));
            }
        }
        Ok(DatasetSplit { name, images, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn images(&self) -> &Tensor<f32> {
        &self.images
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::InvalidArg(format!("split {:?} has no labels", self.name.as_str())))
    }

    pub fn with_labels(self, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        DatasetSplit::new(self.name, self.images, Some(labels), class_count)
    }

    pub fn with_name(mut self, name: SplitName) -> Self {
        self.name = name;
        self
    }

    /// True when every pixel is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.images.data().iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// First `n` examples (labels carried along).
    pub fn take(&self, n: usize) -> Result<DatasetSplit> {
        let n = n.min(self.len());
        let d = self.dim();
        let images = Tensor::new(vec![n, d], self.images.data()[..n * d].to_vec())?;
        let labels = self.labels.as_ref().map(|ls| ls[..n].to_vec());
        DatasetSplit::new(self.name, images, labels, self.class_count)
    }

    /// Rows `idx` as a batch tensor in the requested precision.
    pub fn gather<F: Real>(&self, idx: &[usize]) -> Tensor<F> {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend(self.images.data()[i * d..(i + 1) * d].iter().map(|&v| F::from_f64(v as f64)));
        }
        Tensor::new(vec![idx.len(), d], data).expect("gather shape")
    }

    pub fn gather_labels(&self, idx: &[usize]) -> Result<Vec<usize>> {
        let ls = self.require_labels()?;
        Ok(idx.iter().map(|&i| ls[i]).collect())
    }
}

/// Shuffled index batches for one epoch: pinned Fisher-Yates order from the
/// seed, split into `batch_size` chunks, last partial batch kept.
pub fn iterate_batches(n: usize, batch_size: usize, shuffle_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidArg("batch_size must be at least 1".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(shuffle_seed);
    rng.shuffle(&mut idx);
    Ok(idx.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_sizes_keep_partial_tail() {
        let batches = iterate_batches(5, 2, 0).unwrap();
        let sizes: Vec<usize> = batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
    }

    #[test]
    fn same_seed_same_order() {
        assert_eq!(iterate_batches(100, 7, 42).unwrap(), iterate_batches(100, 7, 42).unwrap());
        assert_ne!(iterate_batches(100, 7, 42).unwrap(), iterate_batches(100, 7, 43).unwrap());
    }

    #[test]
    fn batches_cover_split_exactly() {
        let batches = iterate_batches(23, 4, 9).unwrap();
        let mut seen: Vec<usize> = batches.into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn split_validates_labels() {
        let images = Tensor::new(vec![2, 3], vec![0.0f32; 6]).unwrap();
        assert!(DatasetSplit::new(SplitName::Train, images.clone(), Some(vec![0, 10]), 10).is_err());
        assert!(DatasetSplit::new(SplitName::Train, images.clone(), Some(vec![0]), 10).is_err());
        assert!(DatasetSplit::new(SplitName::Train, images, Some(vec![0, 9]), 10).is_ok());
    }

    #[test]
    fn gather_casts_to_f64() {
        let images = Tensor::new(vec![3, 2], vec![0.0f32, 1.0, 0.5, 0.25, 1.0, 0.0]).unwrap();
        let split = DatasetSplit::new(SplitName::Test, images, None, 10).unwrap();
        let batch: Tensor<f64> = split.gather(&[2, 0]);
        assert_eq!(batch.shape(), &[2, 2]);
        assert_eq!(batch.data(), &[1.0, 0.0, 0.0, 1.0]);
    }
}

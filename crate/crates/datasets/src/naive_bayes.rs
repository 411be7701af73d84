//! Bernoulli naive Bayes for transferring labels onto unlabeled binary images.
//!
//! Fit on (binarized image, label) pairs, then label new binary images by
//! maximum posterior. All densities live in log space; posteriors normalize
//! through logsumexp.

use rdprobe_core::{log_sum_exp, Error, Result};

use crate::split::DatasetSplit;

#[derive(Debug, Clone)]
pub struct NaiveBayesModel {
    class_count: usize,
    dim: usize,
    /// ln P(class); classes with no examples carry -inf.
    log_priors: Vec<f64>,
    /// ln theta[c][d] where theta is the Laplace-smoothed P(pixel=1 | class).
    log_p1: Vec<f64>,
    /// ln (1 - theta[c][d]).
    log_p0: Vec<f64>,
}

impl NaiveBayesModel {
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }

    /// Smoothed P(pixel d = 1 | class c).
    pub fn pixel_p1(&self, c: usize, d: usize) -> f64 {
        self.log_p1[c * self.dim + d].exp()
    }
}

/// Fit with Laplace smoothing: theta = (ones + alpha) / (examples + 2 alpha).
/// alpha > 0 keeps every pixel probability strictly inside (0, 1), so empty
/// classes are representable (prior zero, uniform pixels) without error.
pub fn naive_bayes_fit(split: &DatasetSplit, alpha: f64) -> Result<NaiveBayesModel> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArg(format!("smoothing alpha must be > 0, got {alpha}")));
    }
    let labels = split.require_labels()?;
    if !split.is_binary() {
        return Err(Error::InvalidArg("naive_bayes_fit requires binary images".into()));
    }
    let (n, d, k) = (split.len(), split.dim(), split.class_count());
    if n == 0 {
        return Err(Error::InvalidArg("naive_bayes_fit requires at least one example".into()));
    }
    let mut class_n = vec![0u64; k];
    let mut ones = vec![0u64; k * d];
    let images = split.images().data();
    for (i, &c) in labels.iter().enumerate() {
        class_n[c] += 1;
        let row = &images[i * d..(i + 1) * d];
        let dst = &mut ones[c * d..(c + 1) * d];
        for (o, &v) in dst.iter_mut().zip(row) {
            *o += (v == 1.0) as u64;
        }
    }
    let mut log_priors = Vec::with_capacity(k);
    let mut log_p1 = vec![0.0; k * d];
    let mut log_p0 = vec![0.0; k * d];
    for c in 0..k {
        log_priors.push((class_n[c] as f64 / n as f64).ln());
        let denom = class_n[c] as f64 + 2.0 * alpha;
        for j in 0..d {
            let theta = (ones[c * d + j] as f64 + alpha) / denom;
            log_p1[c * d + j] = theta.ln();
            log_p0[c * d + j] = (1.0 - theta).ln();
        }
    }
    Ok(NaiveBayesModel { class_count: k, dim: d, log_priors, log_p1, log_p0 })
}

/// Posterior P(class | image) for one binary image row. Sums to 1 within 1e-12.
pub fn naive_bayes_posterior(model: &NaiveBayesModel, image: &[f64]) -> Result<Vec<f64>> {
    if image.len() != model.dim {
        return Err(Error::ShapeMismatch {
            op: "naive_bayes_posterior".into(),
            detail: format!("image dim {} vs model dim {}", image.len(), model.dim),
        });
    }
    if image.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArg("naive Bayes input must be binary".into()));
    }
    let scores = class_scores(model, image);
    let lse = log_sum_exp(&scores);
    Ok(scores.iter().map(|&s| (s - lse).exp()).collect())
}

fn class_scores(model: &NaiveBayesModel, image: &[f64]) -> Vec<f64> {
    let d = model.dim;
    (0..model.class_count)
        .map(|c| {
            let mut s = model.log_priors[c];
            let p1 = &model.log_p1[c * d..(c + 1) * d];
            let p0 = &model.log_p0[c * d..(c + 1) * d];
            for j in 0..d {
                s += if image[j] == 1.0 { p1[j] } else { p0[j] };
            }
            s
        })
        .collect()
}

/// Argmax-posterior labels for every row of a binary split; posterior ties
/// break toward the lowest class index.
pub fn naive_bayes_transfer_labels(model: &NaiveBayesModel, split: &DatasetSplit) -> Result<Vec<usize>> {
    if split.dim() != model.dim {
        return Err(Error::ShapeMismatch {
            op: "naive_bayes_transfer_labels".into(),
            detail: format!("split dim {} vs model dim {}", split.dim(), model.dim),
        });
    }
    if !split.is_binary() {
        return Err(Error::InvalidArg("label transfer requires binary images".into()));
    }
    let d = model.dim;
    let images = split.images().data();
    let mut row = vec![0.0f64; d];
    let mut out = Vec::with_capacity(split.len());
    for i in 0..split.len() {
        for (r, &v) in row.iter_mut().zip(&images[i * d..(i + 1) * d]) {
            *r = v as f64;
        }
        let scores = class_scores(model, &row);
        let mut best = 0usize;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Fraction of rows whose transferred label matches the split's own labels.
pub fn naive_bayes_accuracy(model: &NaiveBayesModel, split: &DatasetSplit) -> Result<f64> {
    let truth = split.require_labels()?;
    let predicted = naive_bayes_transfer_labels(model, split)?;
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

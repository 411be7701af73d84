//! Dataset entropy constants anchoring compression factors and the
//! random-discard line.

use rdprobe_core::{Error, Result};

/// H_X: entropy estimate of the image source in nats. H_Y: label entropy,
/// ln K for K balanced classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyConstants {
    pub h_x: f64,
    pub h_y: f64,
}

impl EntropyConstants {
    pub fn new(h_x: f64, h_y: f64) -> Result<Self> {
        if !(h_x > 0.0) || !(h_y > 0.0) {
            return Err(Error::InvalidArg(format!(
                "entropy constants must be positive, got H_X={h_x}, H_Y={h_y}"
            )));
        }
        Ok(EntropyConstants { h_x, h_y })
    }

    /// The literature estimate for handwritten-digit images: 79.78 nats,
    /// with ln 10 of label entropy.
    pub fn digits() -> Self {
        EntropyConstants { h_x: 79.78, h_y: 10.0f64.ln() }
    }

    /// Custom H_X with H_Y = ln(class_count).
    pub fn with_class_count(h_x: f64, class_count: usize) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::InvalidArg("need at least 2 classes".into()));
        }
        EntropyConstants::new(h_x, (class_count as f64).ln())
    }
}

/// How many times smaller than the source entropy the encoding is: H_X / R.
pub fn compression_factor(rate_nats: f64, h_x: f64) -> Result<f64> {
    if !(h_x > 0.0) {
        return Err(Error::InvalidArg(format!("H_X must be positive, got {h_x}")));
    }
    if !(rate_nats > 0.0) {
        return Err(Error::InvalidArg(format!(
            "compression factor needs a positive rate, got {rate_nats}"
        )));
    }
    Ok(h_x / rate_nats)
}

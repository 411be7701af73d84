//! Discard line: label distortion of an encoder that transmits the first
//! R nats of raw input verbatim and discards the rest. Any learned encoder
//! worth its parameters should sit below this line.

use rdprobe_core::{Error, Result};
use rdprobe_objectives::EntropyConstants;

/// Linear interpolation from C(0) = H_Y down to the floor at R = H_X.
/// `c_floor` is the label distortion left when the whole input is kept
/// (0 for a deterministic labeling, else the conditional entropy H(Y|X)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscardLine {
    pub entropies: EntropyConstants,
    pub c_floor: f64,
}

impl DiscardLine {
    pub fn new(entropies: EntropyConstants, c_floor: f64) -> Result<Self> {
        if !(c_floor >= 0.0) || !c_floor.is_finite() {
            return Err(Error::InvalidArg(format!(
                "discard floor must be a nonnegative finite value, got {c_floor}"
            )));
        }
        if c_floor > entropies.h_y {
            return Err(Error::InvalidArg(format!(
                "discard floor {c_floor} exceeds label entropy {}",
                entropies.h_y
            )));
        }
        Ok(DiscardLine { entropies, c_floor })
    }
}

/// C(R) = H_Y (1 - m) + m c_floor with m = min(R, H_X) / H_X. At R = 0
/// nothing is kept and C is the full label entropy; by R = H_X the input
/// is transmitted losslessly and only the floor remains.
pub fn discard_line(line: &DiscardLine, rate: f64) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(Error::InvalidArg(format!("rate must be nonnegative, got {rate}")));
    }
    let m = rate.min(line.entropies.h_x) / line.entropies.h_x;
    Ok(line.entropies.h_y * (1.0 - m) + m * line.c_floor)
}

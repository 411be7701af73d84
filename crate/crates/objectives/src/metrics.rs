//! Per-epoch measurement row shared by training, the harness, and reports.

use rdprobe_core::{Error, Result};

/// One evaluation of a run at an epoch boundary. Rate, distortion, loss are
/// always present; probe fields arrive only after a probe has run;
/// compression factor only when the rate is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub run_id: String,
    pub beta: f64,
    pub epoch: u32,
    pub rate_nats: f64,
    pub distortion_nats: f64,
    pub loss_nats: f64,
    pub label_distortion_nats: Option<f64>,
    pub probe_accuracy: Option<f64>,
    pub compression_factor: Option<f64>,
}

impl RunMetrics {
    /// Internal-consistency checks: the loss identity and field ranges.
    pub fn check(&self) -> Result<()> {
        let recomposed = self.distortion_nats + self.beta * self.rate_nats;
        if (self.loss_nats - recomposed).abs() >= 1e-5 {
            return Err(Error::InvalidArg(format!(
                "loss {} violates distortion + beta*rate = {recomposed}",
                self.loss_nats
            )));
        }
        if self.distortion_nats < 0.0 {
            return Err(Error::InvalidArg(format!(
                "distortion must be nonnegative, got {}",
                self.distortion_nats
            )));
        }
        if let Some(cf) = self.compression_factor {
            if self.rate_nats <= 0.0 || cf <= 0.0 {
                return Err(Error::InvalidArg(
                    "compression factor present without a positive rate".into(),
                ));
            }
        }
        if let Some(acc) = self.probe_accuracy {
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::InvalidArg(format!("accuracy {acc} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

//! Rate R: nats of information the encoding carries about the input,
//! measured against the marginal m(z). Closed form against the standard
//! normal, Monte Carlo against anything.

use rdprobe_core::{Error, Real, Result, Rng, RunningMean, RunningMeanVar, Tensor};
use rdprobe_models::{marginal_log_density, MarginalSpec, ParamSet};

const LN_2PI: f64 = 1.8378770664093453;

fn check_posterior<F: Real>(mean: &Tensor<F>, log_std: &Tensor<F>) -> Result<()> {
    if mean.shape() != log_std.shape() || mean.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "rate",
            detail: format!(
                "posterior mean {:?} and log_std {:?} must be equal 2-d shapes",
                mean.shape(),
                log_std.shape()
            ),
        });
    }
    if !mean.all_finite() || !log_std.all_finite() {
        return Err(Error::NonFinite { op: "rate", context: "posterior parameters".into() });
    }
    Ok(())
}

/// Per-example KL(q(z|x) || N(0, I)) in nats:
/// sum_i [ -log sigma_i + (sigma_i^2 + mu_i^2 - 1)/2 ].
pub fn rate_closed_form_per_example<F: Real>(
    mean: &Tensor<F>,
    log_std: &Tensor<F>,
) -> Result<Vec<f64>> {
    check_posterior(mean, log_std)?;
    Ok((0..mean.rows())
        .map(|b| {
            let mu = mean.row(b);
            let ls = log_std.row(b);
            let mut kl = 0.0;
            for i in 0..mu.len() {
                let m = mu[i].to_f64_();
                let l = ls[i].to_f64_();
                let var = (2.0 * l).exp();
                kl += -l + (var + m * m - 1.0) / 2.0;
            }
            kl
        })
        .collect())
}

/// Batch mean of the per-example closed-form KL.
pub fn rate_closed_form<F: Real>(mean: &Tensor<F>, log_std: &Tensor<F>) -> Result<f64> {
    let per = rate_closed_form_per_example(mean, log_std)?;
    let mut batch = RunningMean::new();
    for kl in per {
        batch.push(kl);
    }
    Ok(batch.mean())
}

/// Monte Carlo rate estimate with its standard error across draws.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Estimate E[log q(z|x) - log m(z)] with S reparameterized draws per
/// example. log q is evaluated at the drawn z through its own epsilon, so
/// the estimate is exact in expectation for any marginal.
pub fn rate_monte_carlo<F: Real>(
    mean: &Tensor<F>,
    log_std: &Tensor<F>,
    marginal: &MarginalSpec,
    marginal_params: &ParamSet<F>,
    samples: usize,
    rng: &mut Rng,
) -> Result<McEstimate> {
    check_posterior(mean, log_std)?;
    if samples == 0 {
        return Err(Error::InvalidArg("rate_monte_carlo needs at least 1 sample".into()));
    }
    let (b, l) = (mean.rows(), mean.cols());
    let mut across_draws = RunningMeanVar::new();
    let mut z = Tensor::<F>::zeros(vec![b, l]);
    for _ in 0..samples {
        // One epsilon per example and dimension; log q in terms of epsilon.
        let mut log_q_minus_log_m = RunningMean::new();
        let mut log_q = vec![0.0f64; b];
        for row in 0..b {
            let mu = mean.row(row);
            let ls = log_std.row(row);
            for i in 0..l {
                let eps = rng.next_gaussian();
                let lsv = ls[i].to_f64_();
                log_q[row] += -0.5 * LN_2PI - lsv - 0.5 * eps * eps;
                let zv = mu[i].to_f64_() + lsv.exp() * eps;
                z.data_mut()[row * l + i] = rdprobe_core::fl(zv);
            }
        }
        let log_m = marginal_log_density(marginal, marginal_params, l, &z)?;
        for row in 0..b {
            log_q_minus_log_m.push(log_q[row] - log_m[row]);
        }
        across_draws.push(log_q_minus_log_m.mean());
    }
    Ok(McEstimate {
        mean: across_draws.mean(),
        std_error: across_draws.std_error(),
        samples,
    })
}

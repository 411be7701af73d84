//! Bias-corrected Adam.

use crate::error::{Error, Result};
use crate::graph::Gradients;
use crate::tensor::{fl, Real, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Standard defaults with the given learning rate.
    pub fn new(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

struct Slot {
    name: String,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state. Moment buffers are allocated on the first step and stay
/// aligned with the parameter list by name and shape from then on. Moments
/// are kept in f64 no matter the parameter precision: squaring an f32
/// gradient overflows its range long before the gradient itself does, and an
/// infinite second moment silently zeroes the update.
pub struct Adam<F: Real> {
    cfg: AdamConfig,
    step: u64,
    slots: Vec<Slot>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Real> Adam<F> {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        if !(cfg.lr > 0.0) {
            return Err(Error::InvalidArg(format!("learning rate must be positive, got {}", cfg.lr)));
        }
        Ok(Adam { cfg, step: 0, slots: Vec::new(), _marker: std::marker::PhantomData })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.cfg.lr
    }

    /// Learning-rate schedules swap the rate between steps; moments persist.
    pub fn set_lr(&mut self, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::InvalidArg(format!("learning rate must be positive, got {lr}")));
        }
        self.cfg.lr = lr;
        Ok(())
    }

    /// One update over named parameters. Gradients must carry the same names
    /// in the same order as `params` (both come from the parameter registry,
    /// so the order is the registration order).
    pub fn step(&mut self, params: &mut [(String, Tensor<F>)], grads: &Gradients<F>) -> Result<()> {
        let gentries = grads.entries();
        if gentries.len() != params.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step".into(),
                detail: format!("{} parameters vs {} gradients", params.len(), gentries.len()),
            });
        }
        if self.slots.is_empty() {
            for (name, t) in params.iter() {
                self.slots.push(Slot {
                    name: name.clone(),
                    m: vec![0.0; t.len()],
                    v: vec![0.0; t.len()],
                });
            }
        }
        if self.slots.len() != params.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step".into(),
                detail: format!("{} moment slots vs {} parameters", self.slots.len(), params.len()),
            });
        }

        self.step += 1;
        let t = self.step as i32;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let eps = self.cfg.eps;
        // Bias corrections folded into a single step size.
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        let step_size = self.cfg.lr / bc1;
        let bc2_sqrt_inv = 1.0 / bc2.sqrt();

        for (slot, ((pname, p), (gname, g))) in
            self.slots.iter_mut().zip(params.iter_mut().zip(gentries))
        {
            if pname != gname || &slot.name != pname {
                return Err(Error::InvalidArg(format!(
                    "adam_step parameter order mismatch: slot {:?}, param {:?}, grad {:?}",
                    slot.name, pname, gname
                )));
            }
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step".into(),
                    detail: format!("{pname:?}: param {:?} vs grad {:?}", p.shape(), g.shape()),
                });
            }
            let pd = p.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i].to_f64_();
                slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * gi;
                slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * gi * gi;
                let denom = (slot.v[i] * bc2_sqrt_inv * bc2_sqrt_inv).sqrt() + eps;
                pd[i] = fl(pd[i].to_f64_() - step_size * slot.m[i] / denom);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn grads_of(entries: Vec<(&str, Tensor<f64>)>) -> Gradients<f64> {
        // Build through a graph so Gradients stays construction-opaque.
        let mut g: Graph<f64> = Graph::new();
        let mut ids = Vec::new();
        for (name, t) in &entries {
            ids.push(g.param(name, t.clone()).unwrap());
        }
        // loss = sum_i sum(grad_i * p_i) has gradient grad_i for each p_i.
        let mut total = None;
        for (id, (_, t)) in ids.iter().zip(&entries) {
            let c = g.constant(t.clone()).unwrap();
            let m = g.mul(*id, c).unwrap();
            let s = g.sum(m).unwrap();
            total = Some(match total {
                None => s,
                Some(prev) => g.add(prev, s).unwrap(),
            });
        }
        // The trick above yields grad = constant value only when params are
        // multiplied once; here constants equal the desired gradients.
        g.backward(total.unwrap()).unwrap()
    }

    #[test]
    fn first_step_bias_correction_cancels() {
        // w=0, grad=1, lr=1e-3: mhat=1, vhat=1, w -> -lr/(1+eps) ~ -0.000999999
        let mut params = vec![("w".to_string(), Tensor::scalar(0.0f64))];
        let grads = grads_of(vec![("w", Tensor::scalar(1.0))]);
        let mut opt = Adam::new(AdamConfig::new(1e-3)).unwrap();
        opt.step(&mut params, &grads).unwrap();
        let w = params[0].1.item();
        assert!((w + 0.000999999).abs() < 1e-8, "w = {w}");
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut params = vec![("w".to_string(), Tensor::new(vec![2], vec![0.7, -0.3]).unwrap())];
        let grads = grads_of(vec![("w", Tensor::zeros(vec![2]))]);
        let mut opt = Adam::new(AdamConfig::new(1e-3)).unwrap();
        for _ in 0..5 {
            opt.step(&mut params, &grads).unwrap();
        }
        assert_eq!(params[0].1.data(), &[0.7, -0.3]);
    }

    #[test]
    fn quadratic_converges_toward_zero() {
        // Independent oracle (reference scalar Adam loop, 64-bit):
        // w0=1, lr=0.1, f(w)=w^2 -> after 100 steps w = 0.002936675681102549.
        let mut w = 1.0f64;
        let mut opt = Adam::new(AdamConfig::new(0.1)).unwrap();
        for _ in 0..100 {
            let mut g: Graph<f64> = Graph::new();
            let p = g.param("w", Tensor::scalar(w)).unwrap();
            let loss = g.mul(p, p).unwrap();
            let grads = g.backward(loss).unwrap();
            let mut params = vec![("w".to_string(), Tensor::scalar(w))];
            opt.step(&mut params, &grads).unwrap();
            w = params[0].1.item();
        }
        assert!((w - 0.002936675681102549).abs() < 1e-6, "w = {w}");
        assert!(w.abs() < 0.1);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut params = vec![("w".to_string(), Tensor::zeros(vec![3]))];
        let grads = grads_of(vec![("w", Tensor::zeros(vec![2]))]);
        let mut opt = Adam::new(AdamConfig::new(1e-3)).unwrap();
        assert!(opt.step(&mut params, &grads).is_err());
    }
}

//! Adam with an L2 weight-decay term folded into the gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
            config,
        }
    }

    /// One update of `params` in place. Nothing is modified when an update
    /// would be non-finite.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state holds {} entries, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("gradient {i} is {}", grads[i])));
        }
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps, wd) = (T::lit(c.lr), T::lit(c.eps), T::lit(c.weight_decay));
        let t = (self.step + 1) as i32;
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);

        let mut new_m = Vec::with_capacity(params.len());
        let mut new_v = Vec::with_capacity(params.len());
        let mut new_p = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let g = grads[i] + wd * params[i];
            let m = b1 * self.m[i] + (T::one() - b1) * g;
            let v = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let p = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
            if !p.is_finite() {
                return Err(Error::Numeric(format!("adam update for parameter {i} is {p}")));
            }
            new_m.push(m);
            new_v.push(v);
            new_p.push(p);
        }
        self.m = new_m;
        self.v = new_v;
        params.copy_from_slice(&new_p);
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(wd: f64) -> AdamConfig {
        AdamConfig {
            weight_decay: wd,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::<f64>::new(1, cfg(0.0));
        let mut p = [0.0];
        s.step(&mut p, &[1.0]).unwrap();
        // m̂ = v̂ = 1 → Δ = −lr·1/(1+ε)
        assert!((p[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = AdamState::<f64>::new(3, cfg(0.0));
        let mut p = [1.0, -2.0, 0.5];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn rejects_non_finite() {
        let mut s = AdamState::<f64>::new(1, cfg(0.0));
        let mut p = [0.0];
        assert!(matches!(s.step(&mut p, &[f64::NAN]), Err(Error::Numeric(_))));
        assert_eq!(s.step, 0);
        assert!(s.step(&mut p, &[1.0, 2.0]).is_err());
    }
}

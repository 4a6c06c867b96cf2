use super::{Param, Real};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for a fixed, ordered parameter list.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &[&mut Param<T>]) -> Self {
        Self {
            config,
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update from the accumulated gradients, which are
    /// then cleared.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        if params.len() != self.m.len()
            || params.iter().zip(&self.m).any(|(p, m)| p.len() != m.len())
        {
            return Err(Error::Config(
                "optimizer state does not match the parameter list".into(),
            ));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let step_size = T::lit(c.lr / bc1);
        let inv_bc2 = T::lit(1.0 / bc2);
        let eps = T::lit(c.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let p = &mut **p;
            let n = p.value.len();
            let (w, g, m, v) = (
                &mut p.value[..n],
                &mut p.grad[..n],
                &mut m[..n],
                &mut v[..n],
            );
            for i in 0..n {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                w[i] -= step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
                g[i] = T::zero();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(w: f64) -> Param<f64> {
        Param::new("w", vec![1], vec![w])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar(0.3);
        let mut opt = Adam::new(AdamConfig::default(), &[&mut p]);
        for _ in 0..100 {
            opt.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value[0], 0.3);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.01] {
            let mut p = scalar(1.0);
            let mut opt = Adam::new(AdamConfig::default(), &[&mut p]);
            p.grad[0] = g;
            opt.step(&mut [&mut p]).unwrap();
            let moved = p.value[0] - 1.0;
            assert!((moved + 1e-5 * f64::signum(g)).abs() < 1e-9, "{moved}");
        }
    }

    #[test]
    fn quadratic_bowl() {
        let mut p = scalar(1.0);
        let cfg = AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new(cfg, &[&mut p]);
        for _ in 0..1000 {
            p.grad[0] = 2.0 * p.value[0];
            opt.step(&mut [&mut p]).unwrap();
        }
        assert!(p.value[0].abs() < 0.1, "{}", p.value[0]);
    }

    #[test]
    fn mismatched_parameters_are_rejected() {
        let mut p = scalar(1.0);
        let mut opt = Adam::new(AdamConfig::default(), &[&mut p]);
        let mut q = Param::<f64>::zeros("q", vec![2]);
        assert!(matches!(opt.step(&mut [&mut q]), Err(Error::Config(_))));
    }
}

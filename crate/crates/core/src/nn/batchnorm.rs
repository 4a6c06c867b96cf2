use super::layer::missing_cache;
use super::tensor::expect_channels;
use super::{Layer, Mode, Param, Parameterized, Real, Tensor};
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over all `(batch, position)` rows.
pub struct BatchNorm<T> {
    gamma: Param<T>,
    beta: Param<T>,
    running_mean: Param<T>,
    running_var: Param<T>,
    channels: usize,
    cache: Option<BnCache<T>>,
}

struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), vec![channels], T::one()),
            beta: Param::zeros(format!("{name}.beta"), vec![channels]),
            running_mean: Param::zeros(format!("{name}.running_mean"), vec![channels]),
            running_var: Param::filled(format!("{name}.running_var"), vec![channels], T::one()),
            channels,
            cache: None,
        }
    }

    pub fn running_mean(&self) -> &[T] {
        &self.running_mean.value
    }

    pub fn running_var(&self) -> &[T] {
        &self.running_var.value
    }

    fn batch_stats(&self, x: &Tensor<T>) -> (Vec<T>, Vec<T>) {
        let c = self.channels;
        let n = T::lit(x.shape().rows() as f64);
        let mut mean = vec![T::zero(); c];
        for row in x.data().chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); c];
        for row in x.data().chunks_exact(c) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n);
        (mean, var)
    }

    fn normalize(&self, x: &Tensor<T>, mean: &[T], var: &[T]) -> (Tensor<T>, Tensor<T>, Vec<T>) {
        let eps = T::lit(BN_EPS);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let c = self.channels;
        let mut xhat = x.clone();
        let mut y = x.clone();
        for (hr, yr) in xhat
            .data_mut()
            .chunks_exact_mut(c)
            .zip(y.data_mut().chunks_exact_mut(c))
        {
            for ch in 0..c {
                let h = (hr[ch] - mean[ch]) * inv_std[ch];
                hr[ch] = h;
                yr[ch] = self.gamma.value[ch] * h + self.beta.value[ch];
            }
        }
        (y, xhat, inv_std)
    }
}

impl<T: Real> Parameterized<T> for BatchNorm<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn state(&self) -> Vec<&Param<T>> {
        vec![
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
        ]
    }

    fn state_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }
}

impl<T: Real> Layer<T> for BatchNorm<T> {
    /// Train mode normalizes with batch statistics and updates the running
    /// estimates; eval mode uses the running estimates.
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        expect_channels(x.shape(), self.channels)?;
        let (mean, var) = match mode {
            Mode::Train => {
                let (mean, var) = self.batch_stats(x);
                let n = x.shape().rows() as f64;
                let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                let m = T::lit(BN_MOMENTUM);
                for ch in 0..self.channels {
                    let rm = &mut self.running_mean.value[ch];
                    *rm = (T::one() - m) * *rm + m * mean[ch];
                    let rv = &mut self.running_var.value[ch];
                    *rv = (T::one() - m) * *rv + m * var[ch] * T::lit(unbias);
                }
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.value.clone(),
                self.running_var.value.clone(),
            ),
        };
        let (y, xhat, inv_std) = self.normalize(x, &mean, &var);
        self.cache = Some(BnCache {
            xhat,
            inv_std,
            mode,
        });
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        expect_channels(x.shape(), self.channels)?;
        Ok(self
            .normalize(x, &self.running_mean.value, &self.running_var.value)
            .0)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| missing_cache("batchnorm"))?;
        if dy.shape() != cache.xhat.shape() {
            return Err(Error::Config(
                "batchnorm: gradient shape does not match output".into(),
            ));
        }
        let c = self.channels;
        let n = T::lit(dy.shape().rows() as f64);
        let mut sum_dh = vec![T::zero(); c];
        let mut sum_dh_h = vec![T::zero(); c];
        for (gr, hr) in dy
            .data()
            .chunks_exact(c)
            .zip(cache.xhat.data().chunks_exact(c))
        {
            for ch in 0..c {
                self.gamma.grad[ch] += gr[ch] * hr[ch];
                self.beta.grad[ch] += gr[ch];
                let dh = gr[ch] * self.gamma.value[ch];
                sum_dh[ch] += dh;
                sum_dh_h[ch] += dh * hr[ch];
            }
        }
        let mut dx = dy.clone();
        for (dr, hr) in dx
            .data_mut()
            .chunks_exact_mut(c)
            .zip(cache.xhat.data().chunks_exact(c))
        {
            for ch in 0..c {
                let dh = dr[ch] * self.gamma.value[ch];
                dr[ch] = match cache.mode {
                    Mode::Train => {
                        cache.inv_std[ch] / n * (n * dh - sum_dh[ch] - hr[ch] * sum_dh_h[ch])
                    }
                    Mode::Eval => dh * cache.inv_std[ch],
                };
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(
            shape,
            (0..shape.numel())
                .map(|_| rng.random_range(-3.0..5.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn train_output_is_standardized() {
        let mut bn = BatchNorm::new("bn", 3);
        let y = bn
            .forward(&random(Shape::new(4, 25, 3), 1), Mode::Train)
            .unwrap();
        for ch in 0..3 {
            let v: Vec<f64> = y.data().iter().skip(ch).step_by(3).copied().collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-5, "{var}");
        }
    }

    #[test]
    fn eval_with_batch_stats_matches_train() {
        let x = random(Shape::new(2, 30, 2), 2);
        let mut bn = BatchNorm::new("bn", 2);
        let train = bn.forward(&x, Mode::Train).unwrap();
        let (mean, var) = bn.batch_stats(&x);
        bn.running_mean.value = mean;
        bn.running_var.value = var;
        let eval = bn.infer(&x).unwrap();
        for (a, b) in train.data().iter().zip(eval.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_channel_is_finite() {
        let mut bn = BatchNorm::<f32>::new("bn", 1);
        let y = bn
            .forward(
                &Tensor::from_vec(Shape::new(1, 4, 1), vec![2.0; 4]).unwrap(),
                Mode::Train,
            )
            .unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }
}

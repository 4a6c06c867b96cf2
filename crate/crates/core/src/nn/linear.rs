use rand::Rng;

use super::layer::missing_cache;
use super::real::{gemm, MatMut, MatRef};
use super::tensor::expect_channels;
use super::{he_limit, Layer, Mode, Param, Parameterized, Real, Shape, Tensor};
use crate::{Error, Result};

/// Fully connected layer applied to every `(batch, position)` row.
pub struct Linear<T> {
    weight: Param<T>,
    bias: Param<T>,
    inputs: usize,
    outputs: usize,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_limit(name, inputs, outputs, he_limit(inputs), rng)
    }

    pub fn with_limit<R: Rng + ?Sized>(
        name: &str,
        inputs: usize,
        outputs: usize,
        limit: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Config(format!(
                "linear {name}: sizes must be positive"
            )));
        }
        Ok(Self {
            weight: Param::uniform(format!("{name}.w"), vec![inputs, outputs], limit, rng),
            bias: Param::zeros(format!("{name}.b"), vec![outputs]),
            inputs,
            outputs,
            cache: None,
        })
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        expect_channels(x.shape(), self.inputs)?;
        let s = x.shape();
        let mut y = Tensor::zeros(Shape::new(s.batch, s.len, self.outputs));
        for row in y.data_mut().chunks_exact_mut(self.outputs) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(
            T::one(),
            MatRef::dense(x.data(), 0, s.rows(), self.inputs),
            MatRef::dense(&self.weight.value, 0, self.inputs, self.outputs),
            T::one(),
            MatMut::dense(y.data_mut(), 0, s.rows(), self.outputs),
        );
        Ok(y)
    }
}

impl<T: Real> Parameterized<T> for Linear<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn state(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn state_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl<T: Real> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = self.apply(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.apply(x)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("linear"))?;
        let s = x.shape();
        if dy.shape() != Shape::new(s.batch, s.len, self.outputs) {
            return Err(Error::Config(format!(
                "linear: gradient shape {} does not match output",
                dy.shape()
            )));
        }
        let rows = s.rows();
        let xm = MatRef::dense(x.data(), 0, rows, self.inputs);
        let dym = MatRef::dense(dy.data(), 0, rows, self.outputs);
        gemm(
            T::one(),
            xm.t(),
            dym,
            T::one(),
            MatMut::dense(&mut self.weight.grad, 0, self.inputs, self.outputs),
        );
        for row in dy.data().chunks_exact(self.outputs) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = Tensor::zeros(s);
        gemm(
            T::one(),
            dym,
            MatRef::dense(&self.weight.value, 0, self.inputs, self.outputs).t(),
            T::zero(),
            MatMut::dense(dx.data_mut(), 0, rows, self.inputs),
        );
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_hand_computation() {
        let mut l = Linear::<f64>::new("fc", 2, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        l.weight.value = vec![2.0, -1.0];
        l.bias.value = vec![0.5];
        let x = Tensor::from_vec(Shape::new(2, 1, 2), vec![1.0, 1.0, 3.0, 0.0]).unwrap();
        assert_eq!(l.forward(&x, Mode::Train).unwrap().data(), &[1.5, 6.5]);
        let dx = l
            .backward(&Tensor::from_vec(Shape::new(2, 1, 1), vec![1.0, 2.0]).unwrap())
            .unwrap();
        assert_eq!(dx.data(), &[2.0, -1.0, 4.0, -2.0]);
        assert_eq!(l.weight.grad, vec![7.0, 1.0]);
        assert_eq!(l.bias.grad, vec![3.0]);
    }
}

use super::{Param, Parameterized, Real, Tensor};
use crate::{Error, Result};

/// Whether batch normalization uses batch or running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A differentiable map between tensors.
///
/// `forward` caches what `backward` needs; `backward` accumulates parameter
/// gradients and returns the input gradient. `infer` is the cache-free
/// evaluation-mode forward pass.
pub trait Layer<T: Real>: Parameterized<T> + Send + Sync {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>>;
}

pub(crate) fn missing_cache(layer: &str) -> Error {
    Error::State(format!(
        "{layer}: backward called without a cached forward pass"
    ))
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Real> Parameterized<T> for Relu {}

impl<T: Real> Layer<T> for Relu {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.mask = Some(x.data().iter().map(|&v| v > T::zero()).collect());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.map(|v| if v > T::zero() { v } else { T::zero() }))
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.as_ref().ok_or_else(|| missing_cache("relu"))?;
        if mask.len() != dy.data().len() {
            return Err(Error::Config(
                "relu: gradient shape differs from forward input".into(),
            ));
        }
        let mut dx = dy.clone();
        for (g, &m) in dx.data_mut().iter_mut().zip(mask) {
            if !m {
                *g = T::zero();
            }
        }
        Ok(dx)
    }
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential<T> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Real> Sequential<T> {
    pub fn new() -> Self {
        Self { layers: Vec::new() }
    }

    pub fn push(&mut self, layer: impl Layer<T> + 'static) {
        self.layers.push(Box::new(layer));
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl<T: Real> Parameterized<T> for Sequential<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    fn state(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.state()).collect()
    }

    fn state_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.state_mut()).collect()
    }
}

impl<T: Real> Layer<T> for Sequential<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, mode)?;
        }
        Ok(h)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h)?;
        }
        Ok(h)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = dy.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }
}

/// `y = sigmoid(x)` elementwise.
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Row-wise softmax of a `rows x cols` matrix.
pub fn softmax_rows<T: Real>(logits: &[T], cols: usize) -> Vec<T> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(cols) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape;

    #[test]
    fn relu_masks_gradient() {
        let mut r = Relu::new();
        let x = Tensor::from_vec(Shape::new(1, 3, 1), vec![-1.0f64, 0.5, 2.0]).unwrap();
        assert_eq!(r.forward(&x, Mode::Train).unwrap().data(), &[0.0, 0.5, 2.0]);
        let dy = Tensor::from_vec(Shape::new(1, 3, 1), vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.backward(&dy).unwrap().data(), &[0.0, 1.0, 1.0]);
        assert!(matches!(
            Layer::<f64>::backward(&mut Relu::new(), &dy),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn sigmoid_and_softmax() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(800.0f64) <= 1.0);
        let p = softmax_rows(&[1.0f64, 1.0, 1.0, 1.0, 1000.0, 0.0], 3);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[4] - 1.0).abs() < 1e-15);
    }
}

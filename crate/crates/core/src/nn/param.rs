use rand::Rng;

use super::Real;

/// A named parameter (or persistent buffer) with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            value.len(),
            "parameter shape mismatch"
        );
        let grad = vec![T::zero(); value.len()];
        Self {
            name: name.into(),
            shape,
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![T::zero(); n])
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, v: T) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![v; n])
    }

    /// Uniform in `±limit`.
    pub fn uniform<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: Vec<usize>,
        limit: f64,
        rng: &mut R,
    ) -> Self {
        let n: usize = shape.iter().product();
        let value = (0..n)
            .map(|_| {
                T::lit(if limit > 0.0 {
                    rng.random_range(-limit..limit)
                } else {
                    0.0
                })
            })
            .collect();
        Self::new(name, shape, value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// He-uniform limit `sqrt(6 / fan_in)`.
pub fn he_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in.max(1) as f64).sqrt()
}

/// Anything owning parameters.
pub trait Parameterized<T: Real> {
    /// Trainable parameters in a fixed order.
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    /// Trainable parameters followed by persistent buffers.
    fn state(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    /// Mutable counterpart of [`Parameterized::state`].
    fn state_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }
}

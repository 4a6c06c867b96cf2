use super::layer::missing_cache;
use super::{Layer, Mode, Parameterized, Real, Shape, Tensor};
use crate::{Error, Result};

/// Width-2, stride-2 max pooling along the length axis.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    /// Input shape and, per output element, whether the second of the pair won.
    cache: Option<(Shape, Vec<bool>)>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        Self::default()
    }

    fn pool<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<bool>)> {
        let s = x.shape();
        if !s.len.is_multiple_of(2) {
            return Err(Error::Input(format!(
                "max pooling needs an even length, got {s}"
            )));
        }
        let c = s.channels;
        let out_shape = Shape::new(s.batch, s.len / 2, c);
        let mut y = Vec::with_capacity(out_shape.numel());
        let mut second = Vec::with_capacity(out_shape.numel());
        for pair in x.data().chunks_exact(2 * c) {
            let (a, b) = pair.split_at(c);
            for (&u, &v) in a.iter().zip(b) {
                let take_b = v > u;
                second.push(take_b);
                y.push(if take_b { v } else { u });
            }
        }
        Ok((Tensor::from_vec(out_shape, y)?, second))
    }
}

impl<T: Real> Parameterized<T> for MaxPool2 {}

impl<T: Real> Layer<T> for MaxPool2 {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (y, second) = Self::pool(x)?;
        self.cache = Some((x.shape(), second));
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Self::pool(x)?.0)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (s, second) = self
            .cache
            .as_ref()
            .ok_or_else(|| missing_cache("maxpool"))?;
        if dy.data().len() != second.len() {
            return Err(Error::Config(
                "maxpool: gradient shape does not match output".into(),
            ));
        }
        let c = s.channels;
        let mut dx = Tensor::zeros(*s);
        for (i, (&g, &b)) in dy.data().iter().zip(second).enumerate() {
            let (row, ch) = (i / c, i % c);
            dx.data_mut()[(2 * row + usize::from(b)) * c + ch] = g;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(1, v.len(), 1), v).unwrap()
    }

    #[test]
    fn halves_length() {
        let mut p = MaxPool2::new();
        assert_eq!(
            p.forward(&t(vec![1.0, 3.0, 2.0, 0.0]), Mode::Train)
                .unwrap()
                .data(),
            &[3.0, 2.0]
        );
        let dx = p.backward(&t(vec![10.0, 20.0])).unwrap();
        assert_eq!(dx.data(), &[0.0, 10.0, 20.0, 0.0]);
        assert_eq!(p.infer(&t(vec![4.0; 6])).unwrap().data(), &[4.0; 3]);
    }

    #[test]
    fn odd_length_is_rejected() {
        assert!(matches!(
            MaxPool2::new().infer(&t(vec![1.0; 3])),
            Err(Error::Input(_))
        ));
    }
}

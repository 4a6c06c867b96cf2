use super::{BatchNorm, Layer, MaxPool2, Mode, Param, Parameterized, Real, Sequential, Tensor};
use crate::Result;

/// `pool(bn(concat(x, body(x))))`: a block with an identity branch joined
/// along the channel axis.
pub struct SkipConcat<T> {
    body: Sequential<T>,
    bn: BatchNorm<T>,
    pool: Option<MaxPool2>,
    in_channels: Option<usize>,
}

impl<T: Real> SkipConcat<T> {
    /// `out_channels` is the channel count after concatenation.
    pub fn new(name: &str, body: Sequential<T>, out_channels: usize, pool: bool) -> Self {
        Self {
            body,
            bn: BatchNorm::new(&format!("{name}.bn"), out_channels),
            pool: pool.then(MaxPool2::new),
            in_channels: None,
        }
    }
}

impl<T: Real> Parameterized<T> for SkipConcat<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.body.params_mut();
        v.extend(self.bn.params_mut());
        v
    }

    fn state(&self) -> Vec<&Param<T>> {
        let mut v = self.body.state();
        v.extend(self.bn.state());
        v
    }

    fn state_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.body.state_mut();
        v.extend(self.bn.state_mut());
        v
    }
}

impl<T: Real> Layer<T> for SkipConcat<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let y = self.body.forward(x, mode)?;
        let z = self.bn.forward(&Tensor::concat_channels(x, &y)?, mode)?;
        self.in_channels = Some(x.shape().channels);
        match &mut self.pool {
            Some(p) => Layer::<T>::forward(p, &z, mode),
            None => Ok(z),
        }
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.body.infer(x)?;
        let z = self.bn.infer(&Tensor::concat_channels(x, &y)?)?;
        match &self.pool {
            Some(p) => Layer::<T>::infer(p, &z),
            None => Ok(z),
        }
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self
            .in_channels
            .ok_or_else(|| super::layer::missing_cache("skip"))?;
        let dz = match &mut self.pool {
            Some(p) => Layer::<T>::backward(p, dy)?,
            None => dy.clone(),
        };
        let dcat = self.bn.backward(&dz)?;
        let (mut dx, dbody) = dcat.split_channels(c)?;
        dx.add_assign(&self.body.backward(&dbody)?)?;
        Ok(dx)
    }
}

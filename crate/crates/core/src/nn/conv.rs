use rand::Rng;

use super::layer::missing_cache;
use super::real::{gemm, MatMut, MatRef};
use super::tensor::expect_channels;
use super::{he_limit, Layer, Mode, Param, Parameterized, Real, Shape, Tensor};
use crate::{Error, Result};

/// 1D cross-correlation with "same" zero padding (odd kernels only).
///
/// Weights are stored as a `(kernel * in_channels) x out_channels` matrix,
/// tap-major, so that one output row is a dot product with a contiguous
/// window of the padded input.
pub struct Conv1d<T> {
    weight: Param<T>,
    bias: Param<T>,
    kernel: usize,
    in_channels: usize,
    out_channels: usize,
    /// Padded input of the last forward pass.
    cache: Option<Tensor<T>>,
}

impl<T: Real> Conv1d<T> {
    /// He-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_limit(
            name,
            in_channels,
            out_channels,
            kernel,
            he_limit(kernel * in_channels),
            rng,
        )
    }

    /// Weights uniform in `±limit`, zero bias.
    pub fn with_limit<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        limit: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) || in_channels == 0 || out_channels == 0 {
            return Err(Error::Config(format!(
                "conv {name}: kernel must be odd and channels positive (k={kernel}, {in_channels}->{out_channels})"
            )));
        }
        Ok(Self {
            weight: Param::uniform(
                format!("{name}.w"),
                vec![kernel, in_channels, out_channels],
                limit,
                rng,
            ),
            bias: Param::zeros(format!("{name}.b"), vec![out_channels]),
            kernel,
            in_channels,
            out_channels,
            cache: None,
        })
    }

    /// Builds a layer from explicit weights laid out as `[tap][in][out]`.
    pub fn from_weights(
        name: &str,
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        w: Vec<T>,
        b: Vec<T>,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2)
            || w.len() != kernel * in_channels * out_channels
            || b.len() != out_channels
        {
            return Err(Error::Config(format!(
                "conv {name}: weight shapes do not match"
            )));
        }
        Ok(Self {
            weight: Param::new(
                format!("{name}.w"),
                vec![kernel, in_channels, out_channels],
                w,
            ),
            bias: Param::new(format!("{name}.b"), vec![out_channels], b),
            kernel,
            in_channels,
            out_channels,
            cache: None,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weight(&self) -> &Param<T> {
        &self.weight
    }

    pub fn bias(&self) -> &Param<T> {
        &self.bias
    }

    fn pad(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        expect_channels(x.shape(), self.in_channels)?;
        let s = x.shape();
        let p = self.kernel / 2;
        let c = self.in_channels;
        let mut xp = Tensor::zeros(Shape::new(s.batch, s.len + 2 * p, c));
        for b in 0..s.batch {
            let src = &x.data()[b * s.len * c..(b + 1) * s.len * c];
            let dst_off = (b * (s.len + 2 * p) + p) * c;
            xp.data_mut()[dst_off..dst_off + s.len * c].copy_from_slice(src);
        }
        Ok(xp)
    }

    fn correlate(&self, xp: &Tensor<T>) -> Tensor<T> {
        let sp = xp.shape();
        let len = sp.len - 2 * (self.kernel / 2);
        let (c, o) = (self.in_channels, self.out_channels);
        let mut y = Tensor::zeros(Shape::new(sp.batch, len, o));
        for row in y.data_mut().chunks_exact_mut(o) {
            row.copy_from_slice(&self.bias.value);
        }
        for b in 0..sp.batch {
            // Overlapping-row view: row l is the window xp[b, l..l+k, :].
            let window = MatRef {
                data: xp.data(),
                offset: b * sp.len * c,
                rows: len,
                cols: self.kernel * c,
                rs: c,
                cs: 1,
            };
            gemm(
                T::one(),
                window,
                MatRef::dense(&self.weight.value, 0, self.kernel * c, o),
                T::one(),
                MatMut::dense(y.data_mut(), b * len * o, len, o),
            );
        }
        y
    }
}

impl<T: Real> Parameterized<T> for Conv1d<T> {
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

impl<T: Real> Layer<T> for Conv1d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let xp = self.pad(x)?;
        let y = self.correlate(&xp);
        self.cache = Some(xp);
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.correlate(&self.pad(x)?))
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let xp = self.cache.as_ref().ok_or_else(|| missing_cache("conv1d"))?;
        let sp = xp.shape();
        let p = self.kernel / 2;
        let len = sp.len - 2 * p;
        let (c, o, k) = (self.in_channels, self.out_channels, self.kernel);
        if dy.shape() != Shape::new(sp.batch, len, o) {
            return Err(Error::Config(format!(
                "conv1d: gradient shape {} does not match output",
                dy.shape()
            )));
        }
        for row in dy.data().chunks_exact(o) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dxp = Tensor::zeros(sp);
        for b in 0..sp.batch {
            let window = MatRef {
                data: xp.data(),
                offset: b * sp.len * c,
                rows: len,
                cols: k * c,
                rs: c,
                cs: 1,
            };
            let dyb = MatRef::dense(dy.data(), b * len * o, len, o);
            gemm(
                T::one(),
                window.t(),
                dyb,
                T::one(),
                MatMut::dense(&mut self.weight.grad, 0, k * c, o),
            );
            for j in 0..k {
                // dxp[b, l + j, :] += dy[b, l, :] * W_j^T
                let wj_t = MatRef {
                    data: &self.weight.value,
                    offset: j * c * o,
                    rows: o,
                    cols: c,
                    rs: 1,
                    cs: o,
                };
                let dst = MatMut {
                    data: dxp.data_mut(),
                    offset: (b * sp.len + j) * c,
                    rows: len,
                    cols: c,
                    rs: c,
                    cs: 1,
                };
                gemm(T::one(), dyb, wj_t, T::one(), dst);
            }
        }
        let mut dx = Tensor::zeros(Shape::new(sp.batch, len, c));
        for b in 0..sp.batch {
            let src = (b * sp.len + p) * c;
            dx.data_mut()[b * len * c..(b + 1) * len * c]
                .copy_from_slice(&dxp.data()[src..src + len * c]);
        }
        Ok(dx)
    }
}

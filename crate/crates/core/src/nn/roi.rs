use super::layer::missing_cache;
use super::{Real, Shape, Tensor};
use crate::geom::Interval;
use crate::{Error, Result};

/// Output length of region pooling.
pub const ROI_OUT_LEN: usize = 7;

/// Feature-cell span `[lo, hi)` covered by a region given in input bins.
/// Boundaries round outward.
pub fn roi_cells(region: &Interval, stride: usize, feature_len: usize) -> Result<(usize, usize)> {
    let s = stride as f64;
    let lo = (region.start() / s).floor().max(0.0) as usize;
    let hi = ((region.end() / s).ceil().max(0.0) as usize).min(feature_len);
    if hi <= lo {
        return Err(Error::Degenerate(format!(
            "region [{}, {}) is empty on a {feature_len}-cell feature map at stride {stride}",
            region.start(),
            region.end()
        )));
    }
    Ok((lo, hi))
}

/// Sub-bin `i` of `out_len` over `w` cells starting at `lo`, rounded outward.
fn sub_bin(lo: usize, w: usize, i: usize, out_len: usize) -> (usize, usize) {
    (lo + i * w / out_len, lo + ((i + 1) * w).div_ceil(out_len))
}

/// Max-pools the feature cells under each region into `out_len` sub-bins.
#[derive(Debug, Clone)]
pub struct RoiPool {
    stride: usize,
    out_len: usize,
    /// Feature shape and, per output element, the winning feature row.
    cache: Option<(Shape, Vec<usize>)>,
}

impl RoiPool {
    pub fn new(stride: usize, out_len: usize) -> Self {
        Self {
            stride,
            out_len,
            cache: None,
        }
    }

    /// `features` is `(1, n, C)`; output is `(regions, out_len, C)`.
    pub fn forward<T: Real>(
        &mut self,
        features: &Tensor<T>,
        regions: &[Interval],
    ) -> Result<Tensor<T>> {
        let (y, arg) = self.pool(features, regions)?;
        self.cache = Some((features.shape(), arg));
        Ok(y)
    }

    pub fn infer<T: Real>(&self, features: &Tensor<T>, regions: &[Interval]) -> Result<Tensor<T>> {
        Ok(self.pool(features, regions)?.0)
    }

    fn pool<T: Real>(
        &self,
        features: &Tensor<T>,
        regions: &[Interval],
    ) -> Result<(Tensor<T>, Vec<usize>)> {
        let s = features.shape();
        if s.batch != 1 {
            return Err(Error::Config(format!(
                "region pooling takes one frame, got {s}"
            )));
        }
        let c = s.channels;
        let shape = Shape::new(regions.len(), self.out_len, c);
        let mut out = Vec::with_capacity(shape.numel());
        let mut arg = Vec::with_capacity(shape.numel());
        let f = features.data();
        for r in regions {
            let (lo, hi) = roi_cells(r, self.stride, s.len)?;
            for i in 0..self.out_len {
                let (a, b) = sub_bin(lo, hi - lo, i, self.out_len);
                for ch in 0..c {
                    let mut best = a;
                    for row in a + 1..b {
                        if f[row * c + ch] > f[best * c + ch] {
                            best = row;
                        }
                    }
                    out.push(f[best * c + ch]);
                    arg.push(best);
                }
            }
        }
        Ok((Tensor::from_vec(shape, out)?, arg))
    }

    /// Scatters `dy` back onto the feature map.
    pub fn backward<T: Real>(&self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (s, arg) = self
            .cache
            .as_ref()
            .ok_or_else(|| missing_cache("roi pool"))?;
        if dy.data().len() != arg.len() {
            return Err(Error::Config(
                "roi pool: gradient shape does not match output".into(),
            ));
        }
        let c = s.channels;
        let mut df = Tensor::zeros(*s);
        for (i, (&g, &row)) in dy.data().iter().zip(arg).enumerate() {
            df.data_mut()[row * c + i % c] += g;
        }
        Ok(df)
    }
}

/// Pools one region.
pub fn roi_pool_1d<T: Real>(
    features: &Tensor<T>,
    region: &Interval,
    stride: usize,
    out_len: usize,
) -> Result<Tensor<T>> {
    RoiPool::new(stride, out_len).infer(features, std::slice::from_ref(region))
}

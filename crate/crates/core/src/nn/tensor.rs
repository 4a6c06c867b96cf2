use super::Real;
use crate::{Error, Result};

/// Tensor dimensions: `batch` frames of `len` positions with `channels`
/// values each, stored position-major (channels fastest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub batch: usize,
    pub len: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(batch: usize, len: usize, channels: usize) -> Self {
        Self {
            batch,
            len,
            channels,
        }
    }

    pub fn numel(&self) -> usize {
        self.batch * self.len * self.channels
    }

    /// `batch * len`: the row count when viewed as a matrix.
    pub fn rows(&self) -> usize {
        self.batch * self.len
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.batch, self.len, self.channels)
    }
}

/// Dense 1D feature map batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.numel()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::Config(format!(
                "tensor of shape {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, b: usize, l: usize, c: usize) -> T {
        self.data[(b * self.shape.len + l) * self.shape.channels + c]
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        expect_shape(other.shape, self.shape)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Joins two tensors along the channel axis.
    pub fn concat_channels(a: &Tensor<T>, b: &Tensor<T>) -> Result<Self> {
        let (sa, sb) = (a.shape, b.shape);
        if (sa.batch, sa.len) != (sb.batch, sb.len) {
            return Err(Error::Config(format!("cannot concatenate {sa} and {sb}")));
        }
        let shape = Shape::new(sa.batch, sa.len, sa.channels + sb.channels);
        let mut data = Vec::with_capacity(shape.numel());
        for (ra, rb) in a
            .data
            .chunks_exact(sa.channels.max(1))
            .zip(b.data.chunks_exact(sb.channels.max(1)))
        {
            data.extend_from_slice(&ra[..sa.channels]);
            data.extend_from_slice(&rb[..sb.channels]);
        }
        Self::from_vec(shape, data)
    }

    /// Inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self, first: usize) -> Result<(Self, Self)> {
        let s = self.shape;
        if first > s.channels {
            return Err(Error::Config(format!(
                "cannot split {first} channels off {s}"
            )));
        }
        let mut a = Vec::with_capacity(s.rows() * first);
        let mut b = Vec::with_capacity(s.rows() * (s.channels - first));
        for row in self.data.chunks_exact(s.channels.max(1)) {
            a.extend_from_slice(&row[..first]);
            b.extend_from_slice(&row[first..]);
        }
        Ok((
            Self::from_vec(Shape::new(s.batch, s.len, first), a)?,
            Self::from_vec(Shape::new(s.batch, s.len, s.channels - first), b)?,
        ))
    }
}

pub(crate) fn expect_shape(got: Shape, want: Shape) -> Result<()> {
    if got != want {
        return Err(Error::Config(format!(
            "expected tensor shape {want}, got {got}"
        )));
    }
    Ok(())
}

pub(crate) fn expect_channels(got: Shape, channels: usize) -> Result<()> {
    if got.channels != channels {
        return Err(Error::Config(format!(
            "expected {channels} channels, got shape {got}"
        )));
    }
    Ok(())
}

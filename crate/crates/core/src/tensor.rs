//! Dense rank-4 arrays laid out as (batch, channel, height, width).

use rand::Rng;

use crate::error::{Error, Result};

/// Shape of a [`GridTensor`]: `[batch, channels, height, width]`.
pub type Shape = [usize; 4];

pub fn numel(shape: Shape) -> usize {
    shape.iter().product()
}

/// Rank-4 tensor of `f64` values in row-major (NCHW) order.
///
/// Gradient bookkeeping lives in the [`Tape`](crate::autograd::Tape) node
/// that owns a tensor, not in the tensor itself.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl GridTensor {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        GridTensor {
            shape,
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full([1, 1, 1, 1], value)
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::Shape {
                op: "from_vec",
                dim: "buffer length",
                expected: numel(shape),
                got: data.len(),
            });
        }
        Ok(GridTensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let [b, c, h, w] = shape;
        let mut data = Vec::with_capacity(numel(shape));
        for ib in 0..b {
            for ic in 0..c {
                for iy in 0..h {
                    for ix in 0..w {
                        data.push(f([ib, ic, iy, ix]));
                    }
                }
            }
        }
        GridTensor { shape, data }
    }

    /// Uniform samples in `[-bound, bound)`.
    pub fn uniform(shape: Shape, bound: f64, rng: &mut impl Rng) -> Self {
        let data = (0..numel(shape))
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        GridTensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, [b, c, y, x]: [usize; 4]) -> usize {
        ((b * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, idx: [usize; 4]) -> f64 {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    pub fn reshaped(mut self, shape: Shape) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(Error::Shape {
                op: "reshape",
                dim: "element count",
                expected: self.data.len(),
                got: numel(shape),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Contiguous `[h, w]` plane for one (batch, channel) pair.
    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (b * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (b * self.shape[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &GridTensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridTensor {
        GridTensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// `self += other`, shapes must agree.
    pub fn add_assign(&mut self, other: &GridTensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &GridTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stack single-batch tensors along the batch axis.
    pub fn stack(parts: &[&GridTensor]) -> Result<GridTensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("stack of zero tensors".into()))?;
        let [_, c, h, w] = first.shape;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        let mut batch = 0;
        for p in parts {
            if p.shape[1..] != first.shape[1..] {
                return Err(Error::Shape {
                    op: "stack",
                    dim: "channel/spatial dims",
                    expected: c * h * w,
                    got: p.shape[1] * p.shape[2] * p.shape[3],
                });
            }
            batch += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(GridTensor {
            shape: [batch, c, h, w],
            data,
        })
    }

    /// Single batch item `b` as a `[1, C, H, W]` tensor.
    pub fn batch_item(&self, b: usize) -> GridTensor {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        GridTensor {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[b * per..(b + 1) * per].to_vec(),
        }
    }

    /// Channels `start..start + len` of every batch item.
    pub fn channel_slice(&self, start: usize, len: usize) -> GridTensor {
        let [b, c, h, w] = self.shape;
        let hw = h * w;
        let mut data = Vec::with_capacity(b * len * hw);
        for ib in 0..b {
            let base = ib * c * hw;
            data.extend_from_slice(&self.data[base + start * hw..base + (start + len) * hw]);
        }
        GridTensor {
            shape: [b, len, h, w],
            data,
        }
    }
}

//! Dense NCHW tensors and the operator set used by the SR networks.
//!
//! Tensors are immutable values: every operation returns a new tensor. The
//! forward kernels live in [`ops`], their adjoints next to them, and
//! [`autograd`] records them on a [`Tape`] for reverse-mode differentiation.

pub mod autograd;
pub mod fft;
pub mod ops;
mod scalar;

pub use autograd::{Gradients, Tape, Var};
pub use ops::{
    adaptive_max_pool, concat_channels, conv2d, conv_transpose2d, gelu, leaky_relu,
    pixel_shuffle, pixel_unshuffle, relu, upsample_nearest, ConvGeometry, ConvParams,
};
pub use scalar::Scalar;

use crate::error::{Error, Result};

/// Tensor dimensions `[n, c, h, w]`.
pub type Dims = [usize; 4];

#[derive(Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.dims)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

fn check_dims(dims: Dims) -> Result<usize> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::shape(format!("all dims must be >= 1, got {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::shape(format!("dims {dims:?} overflow")))
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self> {
        let len = check_dims(dims)?;
        if data.len() != len {
            return Err(Error::shape(format!(
                "data length {} does not match dims {dims:?} ({len})",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn full(dims: Dims, value: T) -> Result<Self> {
        let len = check_dims(dims)?;
        Ok(Tensor {
            dims,
            data: vec![value; len],
        })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn ones(dims: Dims) -> Result<Self> {
        Self::full(dims, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            dims: [1, 1, 1, 1],
            data: vec![value],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut([usize; 4]) -> T) -> Result<Self> {
        let len = check_dims(dims)?;
        let mut data = Vec::with_capacity(len);
        for n in 0..dims[0] {
            for c in 0..dims[1] {
                for y in 0..dims[2] {
                    for x in 0..dims[3] {
                        data.push(f([n, c, y, x]));
                    }
                }
            }
        }
        Ok(Tensor { dims, data })
    }

    // Dims were validated at construction, so internal callers skip the checks.
    pub(crate) fn from_parts(dims: Dims, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.dims[0]
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.dims[1]
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.dims[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Flat offset of element `(n, c, y, x)`.
    #[inline]
    pub fn offset(&self, [n, c, y, x]: [usize; 4]) -> usize {
        let [_, cc, hh, ww] = self.dims;
        ((n * cc + c) * hh + y) * ww + x
    }

    /// Inverse of [`offset`](Self::offset).
    pub fn unravel(&self, mut idx: usize) -> [usize; 4] {
        let [_, cc, hh, ww] = self.dims;
        let x = idx % ww;
        idx /= ww;
        let y = idx % hh;
        idx /= hh;
        let c = idx % cc;
        [idx / cc, c, y, x]
    }

    #[inline]
    pub fn at(&self, idx: [usize; 4]) -> T {
        self.data[self.offset(idx)]
    }

    /// Contiguous `h * w` plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let hw = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn reshape(&self, dims: Dims) -> Result<Self> {
        Tensor::from_vec(dims, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "elementwise op on {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Tensor {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::lit(self.data.len() as f64)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channel range `[start, start + len)`.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Self> {
        let [n, c, h, w] = self.dims;
        if len == 0 || start + len > c {
            return Err(Error::shape(format!(
                "channel slice {start}..{} out of {c}",
                start + len
            )));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * len * hw);
        for b in 0..n {
            let from = (b * c + start) * hw;
            data.extend_from_slice(&self.data[from..from + len * hw]);
        }
        Ok(Tensor::from_parts([n, len, h, w], data))
    }

    /// Sample range `[start, start + len)` along the batch axis.
    pub fn slice_batch(&self, start: usize, len: usize) -> Result<Self> {
        let [n, c, h, w] = self.dims;
        if len == 0 || start + len > n {
            return Err(Error::shape(format!(
                "batch slice {start}..{} out of {n}",
                start + len
            )));
        }
        let chw = c * h * w;
        Ok(Tensor::from_parts(
            [len, c, h, w],
            self.data[start * chw..(start + len) * chw].to_vec(),
        ))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|v| U::lit(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }
}

/// Stack tensors of identical `[1, c, h, w]`-compatible shape along the batch axis.
pub fn stack_batch<T: Scalar>(xs: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::invalid("stack_batch of an empty list"))?;
    let [_, c, h, w] = first.dims;
    let mut n = 0;
    let mut data = Vec::new();
    for x in xs {
        if x.dims[1..] != [c, h, w] {
            return Err(Error::shape(format!(
                "stack_batch: {:?} vs {:?}",
                x.dims, first.dims
            )));
        }
        n += x.dims[0];
        data.extend_from_slice(&x.data);
    }
    Ok(Tensor::from_parts([n, c, h, w], data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_zero_dims_and_bad_length() {
        assert!(Tensor::<f32>::zeros([1, 0, 2, 2]).is_err());
        assert!(Tensor::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn element_layout_is_row_major_nchw() {
        let t = Tensor::<f32>::from_fn([2, 3, 4, 5], |[n, c, y, x]| {
            (n * 1000 + c * 100 + y * 10 + x) as f32
        })
        .unwrap();
        assert_eq!(t.offset([1, 2, 3, 4]), ((3 + 2) * 4 + 3) * 5 + 4);
        assert_eq!(t.at([1, 2, 3, 4]), 1234.0);
        assert_eq!(t.plane(1, 2)[0], 1200.0);
    }

    proptest! {
        #[test]
        fn offset_unravel_round_trip(
            n in 1usize..4, c in 1usize..5, h in 1usize..7, w in 1usize..7, seed in 0usize..10_000
        ) {
            let t = Tensor::<f32>::zeros([n, c, h, w]).unwrap();
            let idx = seed % t.len();
            let coords = t.unravel(idx);
            prop_assert_eq!(t.offset(coords), idx);
            prop_assert!(coords[0] < n && coords[1] < c && coords[2] < h && coords[3] < w);
        }
    }
}

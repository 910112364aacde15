//! Dense 64-bit tensors and the raw kernels behind every layer.
//!
//! A [`Tensor`] is an immutable, row-major, reference-counted buffer with
//! shape metadata. All training math runs in f64 so the finite-difference
//! gradient suite can resolve errors at the 1e-5 level.

mod kernels;
pub mod rng;
pub mod tape;

pub use kernels::{conv1d, conv1d_backward, gemm, matmul};
pub use rng::StreamRng;
pub use tape::{Gradients, Tape, Var};

use std::sync::Arc;

use crate::error::{Error, Result};

/// Immutable dense n-dimensional array of f64 in row-major order.
///
/// Cloning is cheap (the buffer is shared); the shape of a constructed
/// tensor never changes. [`Tensor::reshape`] returns a new descriptor over
/// the same buffer, while [`Tensor::permute`] copies.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::InvalidShape {
                op: "from_vec",
                detail: format!("shape {shape:?} wants {expect} values, got {}", data.len()),
            });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![0.0; n]),
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; n]),
        }
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: Arc::new(vec![value]),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Single-element read for scalars and rank-0/1 probes.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::InvalidShape {
                op: "item",
                detail: format!("expected one element, shape is {:?}", self.shape),
            });
        }
        Ok(self.data[0])
    }

    /// Row-major element read; `idx` must have one entry per axis.
    pub fn at(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0usize;
        for (i, (&ix, &dim)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < dim, "index {ix} out of bounds for axis {i} ({dim})");
            off = off * dim + ix;
        }
        self.data[off]
    }

    /// New descriptor over the same buffer; element count must match.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(Error::InvalidShape {
                op: "reshape",
                detail: format!(
                    "cannot view {:?} ({} elems) as {shape:?} ({expect} elems)",
                    self.shape,
                    self.data.len()
                ),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    /// Axis permutation as a contiguous copy.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let rank = self.shape.len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::InvalidShape {
                op: "permute",
                detail: format!("axes {axes:?} is not a permutation of 0..{rank}"),
            });
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let in_strides = row_major_strides(&self.shape);
        let out_strides = row_major_strides(&out_shape);
        let mut out = vec![0.0; self.data.len()];
        let mut idx = vec![0usize; rank];
        for (dst, slot) in out.iter_mut().enumerate() {
            // decode dst into out-coordinates, map back through the permutation
            let mut rem = dst;
            for (k, &st) in out_strides.iter().enumerate() {
                idx[k] = rem / st;
                rem %= st;
            }
            let mut src = 0usize;
            for (k, &a) in axes.iter().enumerate() {
                src += idx[k] * in_strides[a];
            }
            *slot = self.data[src];
        }
        Tensor::from_vec(out_shape, out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        Self {
            shape: self.shape.clone(),
            data: Arc::new(data),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data: Arc::new(data),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    /// Euclidean norm over all elements.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// 2-D transpose copy.
    pub fn transpose(&self) -> Result<Self> {
        let [r, c] = dims2(self, "transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::from_vec(vec![c, r], out)
    }

    /// Builds a tensor by drawing each element from `f`.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut() -> f64) -> Self {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| f()).collect();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
        }
    }
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

pub(crate) fn dims2(t: &Tensor, op: &'static str) -> Result<[usize; 2]> {
    match t.shape() {
        [r, c] => Ok([*r, *c]),
        other => Err(Error::InvalidShape {
            op,
            detail: format!("expected a 2-D tensor, got {other:?}"),
        }),
    }
}

pub(crate) fn dims3(t: &Tensor, op: &'static str) -> Result<[usize; 3]> {
    match t.shape() {
        [a, b, c] => Ok([*a, *b, *c]),
        other => Err(Error::InvalidShape {
            op,
            detail: format!("expected a 3-D tensor, got {other:?}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor::from_vec(vec![2, 3], vec![1.0; 5]).is_err());
    }

    #[test]
    fn shape_product_matches_len() {
        let t = Tensor::zeros(&[3, 4, 2]);
        assert_eq!(t.len(), 24);
        assert_eq!(t.shape(), &[3, 4, 2]);
    }

    #[test]
    fn reshape_is_a_view() {
        let t = Tensor::from_vec(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        let v = t.reshape(&[3, 2]).unwrap();
        assert_eq!(v.data(), t.data());
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn permute_roundtrip() {
        let t = Tensor::from_vec(vec![2, 3, 4], (0..24).map(|v| v as f64).collect()).unwrap();
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.at(&[3, 1, 2]), t.at(&[1, 2, 3]));
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn transpose_2d() {
        let t = Tensor::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let tt = t.transpose().unwrap();
        assert_eq!(tt.shape(), &[3, 2]);
        assert_eq!(tt.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn elementwise_shape_mismatch() {
        let a = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[4]);
        assert!(matches!(a.add(&b), Err(Error::ShapeMismatch { .. })));
    }
}

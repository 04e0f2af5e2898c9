//! Dense row-major `f64` tensors.
//!
//! Tensors are plain values: every operation returns a new tensor. Scalars
//! are stored with shape `[1]`. Gradients use the same shape as the variable
//! they belong to, so a gradient of a scalar with respect to a column vector
//! is stored as a vector even though it is mathematically a row.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math;

#[derive(Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::DataLength { shape, expected, got: data.len() });
        }
        Ok(Self { shape, data })
    }

    /// Like [`Tensor::new`], but also rejects NaN and infinities.
    pub fn new_checked(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let t = Self::new(shape, data)?;
        t.ensure_finite("tensor")?;
        Ok(t)
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self::zeros(&other.shape)
    }

    /// One-hot vector of length `n` with a 1 at `index`.
    pub fn one_hot(index: usize, n: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::invalid("one-hot index out of range"));
        }
        let mut data = vec![0.0; n];
        data[index] = 1.0;
        Ok(Self::vector(data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single entry of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Shape { op: "item", shapes: vec![self.shape.clone()] }),
        }
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    /// Flattened view as a vector of shape `[len]`.
    pub fn flatten(&self) -> Self {
        Self::vector(self.data.clone())
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { what })
        }
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    fn check_same(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape { op, shapes: vec![self.shape.clone(), other.shape.clone()] })
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same(other, op)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| k * v)
    }

    pub fn neg(&self) -> Self {
        self.map(|v| -v)
    }

    /// `self + k * other`.
    pub fn axpy(&self, k: f64, other: &Tensor) -> Result<Self> {
        self.zip_map(other, "axpy", |a, b| a + k * b)
    }

    /// In-place `self += k * other`.
    pub fn axpy_assign(&mut self, k: f64, other: &Tensor) -> Result<()> {
        self.check_same(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    /// Index of the largest entry (first on ties).
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.data.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Concatenation of 1-d tensors.
    pub fn concat(parts: &[&Tensor]) -> Result<Self> {
        if parts.iter().any(|p| p.rank() != 1) {
            return Err(Error::Shape { op: "concat", shapes: parts.iter().map(|p| p.shape.clone()).collect() });
        }
        let data: Vec<f64> = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Ok(Self::vector(data))
    }

    /// Contiguous range `[start, start + len)` of the flattened data.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::Shape { op: "slice", shapes: vec![self.shape.clone(), vec![start, len]] });
        }
        Ok(Self::vector(self.data[start..start + len].to_vec()))
    }

    /// Numpy-style matrix product on rank-1/rank-2 operands.
    ///
    /// `[m,k]·[k,n] -> [m,n]`, `[m,k]·[k] -> [m]`, `[k]·[k,n] -> [n]`, and
    /// `[k]·[k] -> [1]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        let err = || Error::Shape { op: "matmul", shapes: vec![self.shape.clone(), other.shape.clone()] };
        let (m, k, lhs_vec) = match self.shape.as_slice() {
            [k] => (1, *k, true),
            [m, k] => (*m, *k, false),
            _ => return Err(err()),
        };
        let (k2, n, rhs_vec) = match other.shape.as_slice() {
            [k2] => (*k2, 1, true),
            [k2, n] => (*k2, *n, false),
            _ => return Err(err()),
        };
        if k != k2 {
            return Err(err());
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let mut acc = 0.0;
                for (p, &a) in row.iter().enumerate() {
                    acc += a * other.data[p * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        let shape = match (lhs_vec, rhs_vec) {
            (true, true) => vec![1],
            (true, false) => vec![n],
            (false, true) => vec![m],
            (false, false) => vec![m, n],
        };
        Ok(Self { shape, data: out })
    }

    /// Transpose of a rank-2 tensor; rank-1 tensors are returned unchanged.
    pub fn transpose(&self) -> Result<Self> {
        match self.shape.as_slice() {
            [_] => Ok(self.clone()),
            [m, n] => {
                let (m, n) = (*m, *n);
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        out[j * m + i] = self.data[i * n + j];
                    }
                }
                Ok(Self { shape: vec![n, m], data: out })
            }
            _ => Err(Error::Shape { op: "transpose", shapes: vec![self.shape.clone()] }),
        }
    }

    /// Numerically stable softmax over all entries.
    pub fn softmax(&self) -> Self {
        let max = self.data.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let exps: Vec<f64> = self.data.iter().map(|&v| math::exp(v - max)).collect();
        let total: f64 = exps.iter().sum();
        Self { shape: self.shape.clone(), data: exps.into_iter().map(|e| e / total).collect() }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.shape, self.data)
    }
}

impl From<Vec<f64>> for Tensor {
    fn from(data: Vec<f64>) -> Self {
        Self::vector(data)
    }
}

//! Dense row-major `f64` matrices and the handful of kernels the compressor
//! and the toy decoder need.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::TokenPos;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("attention over zero keys")]
    EmptyKeys,
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("gradient for `{tensor}` expected shape {expected:?}, got {got:?}")]
    GradShape {
        tensor: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MathError> {
        if data.len() != rows * cols {
            return Err(MathError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MathError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(MathError::DataLength {
                    rows: rows.len(),
                    cols,
                    len: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Entries drawn i.i.d. from `N(0, std²)`.
    pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, MathError> {
        if self.cols != other.rows {
            return Err(MathError::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        let m = other.cols;
        for i in 0..self.rows {
            let dst = &mut out.data[i * m..(i + 1) * m];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let src = other.row(p);
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix, MathError> {
        if self.cols != other.cols {
            return Err(MathError::Shape {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix, MathError> {
        if self.rows != other.rows {
            return Err(MathError::Shape {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        let m = other.cols;
        for p in 0..self.rows {
            let src = other.row(p);
            for (i, &a) in self.row(p).iter().enumerate() {
                let dst = &mut out.data[i * m..(i + 1) * m];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, MathError> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<(), MathError> {
        if self.shape() != other.shape() {
            return Err(MathError::Shape {
                op: "add",
                left: self.shape(),
                right: other.shape(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, MathError> {
        if self.shape() != other.shape() {
            return Err(MathError::Shape {
                op: "sub",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks `parts` vertically; all parts must share a column count.
    pub fn concat_rows(parts: &[&Matrix]) -> Result<Matrix, MathError> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(MathError::Shape {
                    op: "concat_rows",
                    left: (rows, cols),
                    right: p.shape(),
                });
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Sum of elementwise products.
    pub fn frobenius_dot(&self, other: &Matrix) -> f64 {
        dot(&self.data, &other.data)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    dot(a, b) / (na * nb)
}

/// In-place numerically stable softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows {
        softmax_in_place(out.row_mut(i));
    }
    out
}

/// Forward record of single-head attention where the same matrix serves as
/// keys and values.
#[derive(Debug, Clone)]
pub struct AttentionTape {
    pub weights: Matrix,
    pub output: Matrix,
}

/// `softmax(q·kvᵀ/√d)·kv`, with `d = kv.cols()`.
pub fn attention(q: &Matrix, kv: &Matrix) -> Result<Matrix, MathError> {
    attention_with_weights(q, kv).map(|t| t.output)
}

pub fn attention_with_weights(q: &Matrix, kv: &Matrix) -> Result<AttentionTape, MathError> {
    if kv.rows() == 0 {
        return Err(MathError::EmptyKeys);
    }
    if q.cols() != kv.cols() {
        return Err(MathError::Shape {
            op: "attention",
            left: q.shape(),
            right: kv.shape(),
        });
    }
    let scale = 1.0 / (kv.cols() as f64).sqrt();
    let logits = q.matmul_t(kv)?.scale(scale);
    let weights = softmax_rows(&logits);
    let output = weights.matmul(kv)?;
    Ok(AttentionTape { weights, output })
}

/// Gradients of `attention(q, kv)` given `d_out`; returns `(d_q, d_kv)`.
///
/// `kv` enters as both keys and values, so `d_kv` sums both paths.
pub fn attention_backward(
    q: &Matrix,
    kv: &Matrix,
    weights: &Matrix,
    d_out: &Matrix,
) -> Result<(Matrix, Matrix), MathError> {
    let expected = (q.rows(), kv.cols());
    if d_out.shape() != expected {
        return Err(MathError::GradShape {
            tensor: "attention output",
            expected,
            got: d_out.shape(),
        });
    }
    let scale = 1.0 / (kv.cols() as f64).sqrt();
    // value path
    let mut d_kv = weights.t_matmul(d_out)?;
    // through softmax
    let d_w = d_out.matmul_t(kv)?;
    let mut d_logits = Matrix::zeros(weights.rows(), weights.cols());
    for i in 0..weights.rows() {
        let w = weights.row(i);
        let g = d_w.row(i);
        let inner = dot(w, g);
        for (j, out) in d_logits.row_mut(i).iter_mut().enumerate() {
            *out = w[j] * (g[j] - inner) * scale;
        }
    }
    let d_q = d_logits.matmul(kv)?;
    d_kv.add_assign(&d_logits.t_matmul(q)?)?;
    Ok((d_q, d_kv))
}

/// Fixed sinusoidal positional encodings.
///
/// Slot encodings (for query banks and compressed tokens) are 1-D over the
/// slot index. Token encodings are 2-D: the first `dim - dim/2` channels
/// encode the token row, the remaining `dim/2` the token column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosEncoder {
    dim: usize,
}

pub const POS_BASE: f64 = 10000.0;

/// 1-D sinusoid of width `width` at position `pos`, written into `out`.
fn sinusoid(pos: f64, out: &mut [f64]) {
    let width = out.len();
    for (i, v) in out.iter_mut().enumerate() {
        let pair = (i / 2) as f64;
        let freq = POS_BASE.powf(-2.0 * pair / width as f64);
        *v = if i % 2 == 0 {
            (pos * freq).sin()
        } else {
            (pos * freq).cos()
        };
    }
}

impl PosEncoder {
    pub fn new(dim: usize) -> Self {
        PosEncoder { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slot(&self, index: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        sinusoid(index as f64, &mut v);
        v
    }

    pub fn token(&self, row: usize, col: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let split = self.dim - self.dim / 2;
        let (a, b) = v.split_at_mut(split);
        sinusoid(row as f64, a);
        sinusoid(col as f64, b);
        v
    }

    pub fn slot_table(&self, count: usize) -> Matrix {
        let mut m = Matrix::zeros(count, self.dim);
        for i in 0..count {
            m.row_mut(i).copy_from_slice(&self.slot(i));
        }
        m
    }

    pub fn token_table(&self, positions: &[TokenPos]) -> Matrix {
        let mut m = Matrix::zeros(positions.len(), self.dim);
        for (i, p) in positions.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&self.token(p.row, p.col));
        }
        m
    }

    /// `x + P(slot)` row-wise.
    pub fn add_slots(&self, x: &Matrix) -> Matrix {
        x.add(&self.slot_table(x.rows())).expect("slot table matches rows")
    }

    /// `x + P(token position)` row-wise.
    pub fn add_tokens(&self, x: &Matrix, positions: &[TokenPos]) -> Matrix {
        x.add(&self.token_table(positions))
            .expect("token table matches rows")
    }
}

//! Convolution written out as an explicit sparse matrix.
//!
//! Row `r` of the matrix corresponds to one output element `(o, oy, ox)`
//! and holds the kernel taps `k[o, c, i, j]` at the columns of the input
//! elements they multiply. Multiplying a flattened input by this matrix is
//! the convolution; multiplying by its transpose is the transposed
//! convolution.

use super::conv::ConvGeometry;
use super::{NnError, Tensor};

/// Compressed sparse row matrix of a convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseConvMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl SparseConvMatrix {
    /// Build the matrix for `kernel` (`(out_c, in_c, p, q)`) applied to
    /// inputs of shape `(in_c, height, width)`.
    pub fn build(
        kernel: &Tensor,
        input_dims: (usize, usize, usize),
        stride: usize,
        padding: usize,
    ) -> Result<Self, NnError> {
        let (oc, ic, p, q) = kernel.dims4()?;
        let (c, h, w) = input_dims;
        if ic != c {
            return Err(NnError::shape(format!(
                "kernel expects {ic} input channels, input has {c}"
            )));
        }
        let g = ConvGeometry::new(c, h, w, p, q, stride, padding)?;
        let rows = oc * g.out_h * g.out_w;
        let cols = c * h * w;
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for o in 0..oc {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for ci in 0..c {
                        for i in 0..p {
                            for j in 0..q {
                                let y = (oy * stride + i) as isize - padding as isize;
                                let x = (ox * stride + j) as isize - padding as isize;
                                if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                                    continue;
                                }
                                col_idx.push((ci * h + y as usize) * w + x as usize);
                                values.push(kernel.data()[((o * c + ci) * p + i) * q + j]);
                            }
                        }
                    }
                    row_ptr.push(col_idx.len());
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            kernel_h: p,
            kernel_w: q,
            stride,
            padding,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    /// `C * x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.cols {
            return Err(NnError::shape(format!(
                "matrix has {} columns, vector has {} entries",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect())
    }

    /// `C^T * y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>, NnError> {
        if y.len() != self.rows {
            return Err(NnError::shape(format!(
                "matrix has {} rows, vector has {} entries",
                self.rows,
                y.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[k]] += self.values[k] * yr;
            }
        }
        Ok(out)
    }

    /// Dense row-major copy, for inspection of small cases.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[r * self.cols + self.col_idx[k]] += self.values[k];
            }
        }
        d
    }
}

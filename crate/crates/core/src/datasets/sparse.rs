use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compressed sparse row matrix: 32-bit column positions, 64-bit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    n_cols: usize,
}

/// Borrowed view of one row.
#[derive(Debug, Clone, Copy)]
pub struct SparseRow<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
    pub len: usize,
}

impl SparseMatrix {
    pub fn from_dense_rows(rows: &[&[f64]], n_cols: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            debug_assert_eq!(row.len(), n_cols);
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j as u32);
                    values.push(v);
                }
            }
            row_ptr.push(values.len());
        }
        Self {
            row_ptr,
            col_idx,
            values,
            n_cols,
        }
    }

    pub fn from_dense(data: &[f64], n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Dimension {
                expected: n_rows * n_cols,
                actual: data.len(),
            });
        }
        let rows: Vec<&[f64]> = if n_cols == 0 {
            vec![&[][..]; n_rows]
        } else {
            data.chunks(n_cols).collect()
        };
        Ok(Self::from_dense_rows(&rows, n_cols))
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        SparseRow {
            indices: &self.col_idx[a..b],
            values: &self.values[a..b],
            len: self.n_cols,
        }
    }

    /// Row-major dense reconstruction.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows() * self.n_cols];
        for i in 0..self.n_rows() {
            let row = self.row(i);
            for (&j, &v) in row.indices.iter().zip(row.values) {
                out[i * self.n_cols + j as usize] = v;
            }
        }
        out
    }
}

impl SparseRow<'_> {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for (&j, &v) in self.indices.iter().zip(self.values) {
            out[j as usize] = v;
        }
        out
    }
}

/// Dot product of a sparse row with a dense vector. Returns the value and
/// the number of multiply-adds performed (one per stored nonzero).
pub fn sparse_dot(row: SparseRow<'_>, v: &[f64]) -> Result<(f64, usize)> {
    if v.len() != row.len {
        return Err(Error::Dimension {
            expected: row.len,
            actual: v.len(),
        });
    }
    let mut acc = 0.0;
    for (&j, &x) in row.indices.iter().zip(row.values) {
        acc += x * v[j as usize];
    }
    Ok((acc, row.nnz()))
}

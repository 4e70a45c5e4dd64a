use ndarray::{Array2, ArrayView2};

use crate::error::{ensure, Result};
use crate::scalar::Scalar;

/// Compressed sparse row matrix used for adjacency operators and
/// sparse feature blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from per-row `(col, value)` lists. Entries are kept in the
    /// order given; duplicate columns are summed by the multiply routines.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for (c, v) in row {
                ensure!(c < cols, Shape, "column {c} >= {cols}");
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            rows: n,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Keeps the nonzero entries of a dense matrix.
    pub fn from_dense(m: ArrayView2<'_, T>) -> Self {
        let (r, c) = m.dim();
        let mut indptr = Vec::with_capacity(r + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in m.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: r,
            cols: c,
            indptr,
            indices,
            values,
        }
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

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                out[[i, j]] += v;
            }
        }
        out
    }

    /// Same sparsity pattern with every value mapped through `f`.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, T) -> T) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.values[k] = f(i, self.indices[k], self.values[k]);
            }
        }
        out
    }

    /// `self · rhs`
    pub fn matmul(&self, rhs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        ensure!(
            rhs.nrows() == self.cols,
            Shape,
            "sparse {}x{} times dense {}x{}",
            self.rows,
            self.cols,
            rhs.nrows(),
            rhs.ncols()
        );
        let mut out = Array2::zeros((self.rows, rhs.ncols()));
        for i in 0..self.rows {
            let mut orow = out.row_mut(i);
            for (j, v) in self.row(i) {
                orow.scaled_add(v, &rhs.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs`
    pub fn t_matmul(&self, rhs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        ensure!(
            rhs.nrows() == self.rows,
            Shape,
            "sparse^T {}x{} times dense {}x{}",
            self.cols,
            self.rows,
            rhs.nrows(),
            rhs.ncols()
        );
        let mut out = Array2::zeros((self.cols, rhs.ncols()));
        for i in 0..self.rows {
            let rrow = rhs.row(i);
            for (j, v) in self.row(i) {
                out.row_mut(j).scaled_add(v, &rrow);
            }
        }
        Ok(out)
    }
}

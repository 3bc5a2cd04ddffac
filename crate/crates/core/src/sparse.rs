//! Compressed sparse row snapshot of a dense matrix.
//!
//! Whole-system Jacobians are dominated by machine-local blocks, so most
//! entries are structurally zero. The hot simulation loops take a sparse
//! snapshot once per (re)linearization and evaluate matrix-vector products
//! through it instead of the dense operator.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Float;

/// Row-compressed copy of the nonzero entries of a dense matrix.
#[derive(Debug, Clone)]
pub(crate) struct SparseRows<T> {
    /// Offsets into `cols`/`vals`; one entry per row plus a final sentinel.
    starts: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    ncols: usize,
}

impl<T: Float> SparseRows<T> {
    /// Captures the exactly nonzero entries of `a`.
    pub fn from_dense(a: &DMatrix<T>) -> Self {
        let (nrows, ncols) = a.shape();
        let mut starts = Vec::with_capacity(nrows + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        starts.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = a[(i, j)];
                if v != T::zero() {
                    cols.push(j);
                    vals.push(v);
                }
            }
            starts.push(cols.len());
        }
        Self { starts, cols, vals, ncols }
    }

    /// Writes `self * x` into `out`.
    pub fn mul_into(&self, x: &DVector<T>, out: &mut DVector<T>) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.starts.len() - 1);
        let xs = x.as_slice();
        for (i, w) in self.starts.windows(2).enumerate() {
            let mut acc = T::zero();
            for (v, &j) in self.vals[w[0]..w[1]].iter().zip(&self.cols[w[0]..w[1]]) {
                acc = acc + *v * xs[j];
            }
            out[i] = acc;
        }
    }

    /// Returns `self * x`.
    pub fn mul(&self, x: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.starts.len() - 1);
        self.mul_into(x, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_product() {
        let a = DMatrix::from_fn(7, 5, |i, j| {
            if (i + 2 * j) % 3 == 0 { (i as f64 + 1.0) * 0.5 - j as f64 } else { 0.0 }
        });
        let x = DVector::from_fn(5, |i, _| 1.0 + i as f64 * 0.25);
        let sp = SparseRows::from_dense(&a);
        let dense = &a * &x;
        assert_eq!(sp.mul(&x), dense);
    }

    #[test]
    fn empty_rows_stay_zero() {
        let a = DMatrix::from_element(3, 3, 0.0);
        let sp = SparseRows::from_dense(&a);
        let x = DVector::from_element(3, 4.0);
        assert_eq!(sp.mul(&x), DVector::from_element(3, 0.0));
    }
}

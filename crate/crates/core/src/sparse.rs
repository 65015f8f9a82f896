//! Compressed sparse row storage for the incidence, adjacency and Laplacian
//! matrices.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets. Duplicate entries are summed
    /// and explicit zeros produced by the summation are kept.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let k = next[r];
            cols[k] = c;
            vals[k] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                match col_idx.last() {
                    Some(&last) if last == c && col_idx.len() > row_ptr[r] => {
                        *values.last_mut().unwrap() += v;
                    }
                    _ => {
                        col_idx.push(c);
                        values.push(v);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates the stored entries of row `r` as (column, value).
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        DVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum::<f64>()),
        )
    }

    /// Computes `self' x`.
    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut out = DVector::zeros(self.ncols);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr != 0.0 {
                for (c, v) in self.row(r) {
                    out[c] += v * xr;
                }
            }
        }
        out
    }

    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, x.ncols());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                for k in 0..x.ncols() {
                    out[(r, k)] += v * x[(c, k)];
                }
            }
        }
        out
    }

    /// Computes `self' x` for a dense right-hand side.
    pub fn tr_mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.nrows);
        let mut out = DMatrix::zeros(self.ncols, x.ncols());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                for k in 0..x.ncols() {
                    out[(c, k)] += v * x[(r, k)];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            out[(r, c)] += v;
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Diagonal entries (zero where not stored).
    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.nrows.min(self.ncols),
            (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 1, 1.0), (1, 0, 2.0), (0, 1, 3.0), (0, 0, 1.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 4.0);
        assert_eq!(m.get(1, 2), 0.0);
        let dense = m.to_dense();
        assert_eq!(dense, DMatrix::from_row_slice(2, 3, &[1.0, 4.0, 0.0, 2.0, 0.0, 0.0]));
    }

    #[test]
    fn products_match_dense() {
        let m = CsrMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (1, 1, -2.0), (2, 0, 0.5), (2, 1, 4.0)]);
        let d = m.to_dense();
        let x = DVector::from_vec(vec![1.5, -1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(m.mul_vec(&x), &d * &x);
        assert_eq!(m.tr_mul_vec(&y), d.transpose() * &y);
        assert_eq!(m.transpose().to_dense(), d.transpose());
    }
}

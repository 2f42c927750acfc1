//! Sparse helpers over `nalgebra-sparse`.

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// Assembles an `n x n` matrix from triplets, summing duplicates.
pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(n, n);
    for &(i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

pub fn matvec(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    for (i, row) in a.row_iter().enumerate() {
        y[i] = row
            .col_indices()
            .iter()
            .zip(row.values())
            .map(|(&j, &v)| v * x[j])
            .sum();
    }
    y
}

/// Principal submatrix on `keep` (rows and columns in that order).
pub fn principal_submatrix(a: &CsrMatrix<f64>, keep: &[usize]) -> CsrMatrix<f64> {
    let mut local = vec![usize::MAX; a.nrows()];
    for (i, &k) in keep.iter().enumerate() {
        local[k] = i;
    }
    let mut trips = Vec::new();
    for (i, &k) in keep.iter().enumerate() {
        let row = a.row(k);
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            if local[j] != usize::MAX {
                trips.push((i, local[j], v));
            }
        }
    }
    from_triplets(keep.len(), &trips)
}

/// `A + s·diag(d)`.
pub fn add_diagonal(a: &CsrMatrix<f64>, s: f64, d: &[f64]) -> CsrMatrix<f64> {
    let mut trips: Vec<(usize, usize, f64)> = a.triplet_iter().map(|(i, j, &v)| (i, j, v)).collect();
    trips.extend(d.iter().enumerate().map(|(i, &v)| (i, i, s * v)));
    from_triplets(a.nrows(), &trips)
}

/// Sparse Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    factor: CscCholesky<f64>,
    n: usize,
}

impl Cholesky {
    pub fn new(a: &CsrMatrix<f64>) -> Result<Self> {
        let csc = CscMatrix::from(a);
        let factor = CscCholesky::factor(&csc)
            .map_err(|e| Error::SingularSystem(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(Self { factor, n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = DMatrix::from_column_slice(self.n, 1, b);
        self.factor.solve(&rhs).as_slice().to_vec()
    }

    /// Solves for every column of `b`.
    pub fn solve_block(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_tridiagonal() {
        let n = 6;
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i, i, 4.0));
            if i + 1 < n {
                trips.push((i, i + 1, -1.0));
                trips.push((i + 1, i, -1.0));
            }
        }
        let a = from_triplets(n, &trips);
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let b = matvec(&a, &x);
        let sol = Cholesky::new(&a).unwrap().solve(&b);
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).abs() < 1e-13);
        }
        let sub = principal_submatrix(&a, &[1, 2]);
        assert_eq!(matvec(&sub, &[1.0, 1.0]), vec![3.0, 3.0]);
    }
}

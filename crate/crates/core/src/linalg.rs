//! Small sparse and dense helpers on top of faer.

use std::collections::HashMap;

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

pub type Sparse = SparseColMat<usize, f64>;

/// Sums element matrices scattered to global indices, in the given order.
pub fn assemble_sparse(n: usize, parts: &[(Vec<usize>, Mat<f64>)]) -> Result<Sparse> {
    let mut trip = Vec::with_capacity(parts.iter().map(|(d, _)| d.len() * d.len()).sum());
    for (dofs, m) in parts {
        for (j, &gj) in dofs.iter().enumerate() {
            for (i, &gi) in dofs.iter().enumerate() {
                trip.push(Triplet::new(gi, gj, m[(i, j)]));
            }
        }
    }
    from_triplets(n, n, &trip)
}

pub fn from_triplets(nrows: usize, ncols: usize, trip: &[Triplet<usize, usize, f64>]) -> Result<Sparse> {
    Sparse::try_new_from_triplets(nrows, ncols, trip)
        .map_err(|e| Error::Consistency(format!("sparse assembly failed: {e:?}")))
}

/// `y = A x`.
pub fn spmv(a: &Sparse, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let v = a.val();
    for j in 0..a.ncols() {
        let xj = x[j];
        for p in cp[j]..cp[j + 1] {
            y[ri[p]] += v[p] * xj;
        }
    }
    y
}

/// `Y = A X` for a dense block `X`.
pub fn spmm(a: &Sparse, x: &Mat<f64>) -> Mat<f64> {
    a * x
}

pub fn to_dense(a: &Sparse) -> Mat<f64> {
    a.to_dense()
}

/// `max |A_ij - A_ji| / max |A_ij|`.
pub fn relative_asymmetry(a: &Sparse) -> f64 {
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let v = a.val();
    let mut map = HashMap::with_capacity(v.len());
    let mut amax = 0.0f64;
    for j in 0..a.ncols() {
        for p in cp[j]..cp[j + 1] {
            map.insert((ri[p], j), v[p]);
            amax = amax.max(v[p].abs());
        }
    }
    let mut dmax = 0.0f64;
    for (&(i, j), &x) in &map {
        let y = map.get(&(j, i)).copied().unwrap_or(0.0);
        dmax = dmax.max((x - y).abs());
    }
    if amax == 0.0 {
        0.0
    } else {
        dmax / amax
    }
}

pub fn max_abs_sparse(a: &Sparse) -> f64 {
    a.val().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn max_abs(m: &Mat<f64>) -> f64 {
    let mut r = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            r = r.max(m[(i, j)].abs());
        }
    }
    r
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs_slice(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn col_to_vec(m: &Mat<f64>, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn vec_to_col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assemble_sums_overlaps() {
        let m = Mat::from_fn(2, 2, |i, j| (1 + i + 2 * j) as f64);
        let a = assemble_sparse(3, &[(vec![0, 1], m.clone()), (vec![1, 2], m)]).unwrap();
        let d = to_dense(&a);
        assert_eq!(d[(1, 1)], 1.0 + 4.0);
        assert_eq!(d[(0, 1)], 3.0);
        assert_eq!(d[(2, 1)], 2.0);
        let y = spmv(&a, &[1.0, 1.0, 1.0]);
        assert_eq!(y, vec![4.0, 2.0 + 5.0 + 3.0, 6.0]);
        assert!(relative_asymmetry(&a) > 0.0);
    }
}

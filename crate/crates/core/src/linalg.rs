use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Condition number above which an information matrix is treated as singular.
pub(crate) const MAX_CONDITION: f64 = 1e12;

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Ratio of largest to smallest eigenvalue magnitude of a symmetric matrix.
pub(crate) fn sym_condition(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    let max = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if ev.is_empty() {
        1.0
    } else if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Solves `a * x = b` for a symmetric, well-conditioned `a`.
pub(crate) fn solve_information(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cond = sym_condition(a);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularInformation(cond));
    }
    solve(a, b)
}

pub(crate) fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    a.clone().lu().solve(b).ok_or_else(|| Error::Singular(format!("{}x{} system", a.nrows(), a.ncols())))
}

/// Rows and columns of `m` picked by `idx`, in order.
pub(crate) fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub(crate) fn columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

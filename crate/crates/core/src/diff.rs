//! Central finite differences over parameter vectors.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Per-coordinate step `eps^(1/3) * max(1, |x|)`.
pub fn fd_step(x: f64) -> f64 {
    libm::cbrt(f64::EPSILON) * x.abs().max(1.0)
}

/// Central-difference Jacobian of `f` at `x`: one row per output, one column
/// per coordinate of `x`.
pub fn jacobian_fd<F>(mut f: F, x: &[f64]) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let k = f(x)?.len();
    let mut jac = DMatrix::zeros(k, x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        probe[j] = x[j] + h;
        let up = eval_finite(&mut f, &probe, j)?;
        probe[j] = x[j] - h;
        let down = eval_finite(&mut f, &probe, j)?;
        probe[j] = x[j];
        for i in 0..k {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Forward-difference Jacobian with the same step rule; used as a second
/// scheme when cross-checking central differences.
pub fn jacobian_forward<F>(mut f: F, x: &[f64]) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let base = eval_finite(&mut f, x, 0)?;
    let mut jac = DMatrix::zeros(base.len(), x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        probe[j] = x[j] + h;
        let up = eval_finite(&mut f, &probe, j)?;
        probe[j] = x[j];
        for i in 0..base.len() {
            jac[(i, j)] = (up[i] - base[i]) / h;
        }
    }
    Ok(jac)
}

pub fn gradient_fd<F>(mut f: F, x: &[f64]) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let jac = jacobian_fd(|p| Ok(vec![f(p)?]), x)?;
    Ok(jac.row(0).iter().copied().collect())
}

/// Central-difference Hessian of a scalar function, symmetrized.
pub fn hessian_fd<F>(mut f: F, x: &[f64]) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let m = x.len();
    let h: Vec<f64> = x.iter().map(|v| fd_step(*v)).collect();
    let mut probe = x.to_vec();
    let mut eval = |p: &[f64], j: usize| -> Result<f64> {
        let v = f(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Stencil(j))
        }
    };
    let f0 = eval(x, 0)?;
    let mut hess = DMatrix::zeros(m, m);
    for i in 0..m {
        probe[i] = x[i] + h[i];
        let fp = eval(&probe, i)?;
        probe[i] = x[i] - h[i];
        let fm = eval(&probe, i)?;
        probe[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                probe[i] = x[i] + si * h[i];
                probe[j] = x[j] + sj * h[j];
                let v = eval(&probe, i);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let pp = corner(1.0, 1.0)?;
            let pm = corner(1.0, -1.0)?;
            let mp = corner(-1.0, 1.0)?;
            let mm = corner(-1.0, -1.0)?;
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

fn eval_finite<F>(f: &mut F, x: &[f64], coord: usize) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let v = f(x)?;
    if v.iter().all(|t| t.is_finite()) {
        Ok(v)
    } else {
        Err(Error::Stencil(coord))
    }
}

//! Moran's I for spatial autocorrelation and AIC for fitted submodels.

use nalgebra::DVector;

use crate::slm::FitResult;
use crate::weights::SpatialWeights;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoranResult {
    pub i: f64,
    pub expected: f64,
    pub variance: f64,
    pub z: f64,
    /// Two-sided, normal approximation.
    pub p_value: f64,
}

/// Moran's I of `x` under weights `w`, with normality-based inference.
pub fn morans_i(x: &DVector<f64>, w: &SpatialWeights) -> Result<MoranResult> {
    let n = w.n();
    if x.len() != n {
        return Err(Error::DimensionMismatch(alloc::format!("vector of length {} for {n} units", x.len())));
    }
    let xc = x.add_scalar(-x.mean());
    let ss = xc.norm_squared();
    if !(ss > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let m = w.matrix();
    let s0 = m.sum();
    let nf = n as f64;
    let i = nf / s0 * xc.dot(&(m * &xc)) / ss;

    let sym = m + m.transpose();
    let s1 = 0.5 * sym.norm_squared();
    let s2: f64 = (0..n)
        .map(|k| {
            let t = m.row(k).sum() + m.column(k).sum();
            t * t
        })
        .sum();
    let expected = -1.0 / (nf - 1.0);
    let variance = (nf * nf * s1 - nf * s2 + 3.0 * s0 * s0) / ((nf * nf - 1.0) * s0 * s0) - expected * expected;
    let z = (i - expected) / libm::sqrt(variance);
    let p_value = libm::erfc(libm::fabs(z) / core::f64::consts::SQRT_2);
    Ok(MoranResult { i, expected, variance, z, p_value })
}

/// `-2 loglik + 2 (|S| + 2)`.
pub fn aic(fit: &FitResult) -> f64 {
    -2.0 * fit.loglik + 2.0 * fit.n_params() as f64
}

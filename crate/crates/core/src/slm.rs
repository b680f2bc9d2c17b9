//! Maximum-likelihood estimation of the spatial lag model
//! `Y = rho W Y + X beta + eps`, `eps ~ N(0, sigma2 I)`.
//!
//! `rho` is found by a bracketed one-dimensional search over the concentrated
//! likelihood; `beta` and `sigma2` then follow in closed form from the two
//! auxiliary regressions of `Y` and `WY` on the selected columns of `X`.
//! Parameter vectors and information matrices are ordered `(rho, sigma2, beta_S)`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::diff::{gradient_fd, hessian_fd};
use crate::linalg::{self, MAX_CONDITION};
use crate::optimize::brent_minimize;
use crate::weights::SpatialWeights;
use crate::{Error, Result, SubmodelId};

/// Smallest admissible profile variance.
pub const SIGMA2_FLOOR: f64 = 1e-12;
/// Tolerance on `rho` for the scalar search.
pub const RHO_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 500;
/// Fraction of the admissible interval trimmed from each end.
pub const INTERVAL_SHRINK: f64 = 1e-6;

/// Response, covariates and spatial weights for one sample.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    weights: Arc<SpatialWeights>,
    names: Vec<String>,
    wy: DVector<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, weights: Arc<SpatialWeights>, names: Vec<String>) -> Result<Self> {
        let n = weights.n();
        if y.len() != n || x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "len(Y) = {}, rows(X) = {}, n(W) = {}",
                y.len(),
                x.nrows(),
                n
            )));
        }
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!("{} names for {} covariates", names.len(), x.ncols())));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("data contain non-finite values".into()));
        }
        if x.ncols() > 0 {
            if x.ncols() >= n {
                return Err(Error::RankDeficient(format!("{} covariates for {} units", x.ncols(), n)));
            }
            let sv = x.clone().singular_values();
            let max = sv.max();
            let min = sv.min();
            if !(min > 1e-10 * max) {
                return Err(Error::RankDeficient(format!("smallest singular value {min:e} vs largest {max:e}")));
            }
        }
        let wy = weights.lag(&y);
        Ok(Self { y, x, weights, names, wy })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn weights(&self) -> &SpatialWeights {
        &self.weights
    }

    pub fn shared_weights(&self) -> Arc<SpatialWeights> {
        Arc::clone(&self.weights)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Spatially lagged response `W Y`.
    pub fn wy(&self) -> &DVector<f64> {
        &self.wy
    }

    pub fn x_columns(&self, s: &SubmodelId) -> DMatrix<f64> {
        linalg::columns(&self.x, &s.indices())
    }

    pub fn variable_names(&self, s: &SubmodelId) -> Vec<String> {
        s.indices().into_iter().map(|j| self.names[j].clone()).collect()
    }
}

/// Parameter vector; `beta` holds only the coefficients of the fitted submodel.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub rho: f64,
    pub sigma2: f64,
    pub beta: Vec<f64>,
}

impl Theta {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.beta.len() + 2);
        v.push(self.rho);
        v.push(self.sigma2);
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { rho: v[0], sigma2: v[1], beta: v[2..].to_vec() }
    }
}

/// Per-observation information matrix ordered `(rho, sigma2, beta_S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    matrix: DMatrix<f64>,
    n_obs: usize,
}

impl FisherInfo {
    pub fn new(matrix: DMatrix<f64>, n_obs: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "information matrix must be square with at least 2 rows, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        if (&matrix - matrix.transpose()).amax() > 1e-8 * scale {
            return Err(Error::Domain("information matrix is not symmetric".into()));
        }
        Ok(Self { matrix, n_obs })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigenvalues(&self.matrix)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eigenvalues().first().is_some_and(|&v| v > 0.0)
    }

    pub fn condition_number(&self) -> f64 {
        linalg::sym_condition(&self.matrix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitWarning {
    /// The estimated information has a non-positive eigenvalue.
    InformationNotPositiveDefinite,
    /// The optimum sits on the trimmed edge of the admissible interval.
    RhoAtBoundary,
    /// The finite-difference score exceeds its tolerance.
    LargeScore,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub loglik: f64,
    pub info: FisherInfo,
    pub submodel: SubmodelId,
    /// The search met its tolerance away from the edges of the rho interval.
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the finite-difference score of the full likelihood at `theta_hat`.
    pub score_norm: f64,
    pub warnings: Vec<FitWarning>,
}

impl FitResult {
    /// Number of free parameters, `|S| + 2`.
    pub fn n_params(&self) -> usize {
        self.submodel.len() + 2
    }
}

/// The two auxiliary least-squares fits on `X_S`: `Y` on `X_S` and `WY` on `X_S`.
#[derive(Debug, Clone)]
pub struct ProfileRegression {
    beta_r: DVector<f64>,
    beta_l: DVector<f64>,
    e_r: DVector<f64>,
    e_l: DVector<f64>,
}

impl ProfileRegression {
    pub fn new(data: &Dataset, s: &SubmodelId) -> Result<Self> {
        check_submodel(data, s)?;
        if s.is_empty() {
            return Ok(Self {
                beta_r: DVector::zeros(0),
                beta_l: DVector::zeros(0),
                e_r: data.y.clone(),
                e_l: data.wy.clone(),
            });
        }
        let xs = data.x_columns(s);
        let qr = xs.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().amax();
        let diag_min = r.diagonal().iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if !(diag_min > 1e-10 * diag_max) {
            return Err(Error::RankDeficient(format!("columns {:?}", s.indices())));
        }
        let q = qr.q();
        let solve = |v: &DVector<f64>| {
            r.solve_upper_triangular(&(q.transpose() * v))
                .ok_or_else(|| Error::RankDeficient(format!("columns {:?}", s.indices())))
        };
        let beta_r = solve(&data.y)?;
        let beta_l = solve(&data.wy)?;
        let e_r = &data.y - &xs * &beta_r;
        let e_l = &data.wy - &xs * &beta_l;
        Ok(Self { beta_r, beta_l, e_r, e_l })
    }

    /// `beta_R - rho beta_L`.
    pub fn beta(&self, rho: f64) -> Vec<f64> {
        (&self.beta_r - &self.beta_l * rho).iter().copied().collect()
    }

    /// `|e_R - rho e_L|^2 / n`.
    pub fn sigma2(&self, rho: f64) -> Result<f64> {
        let n = self.e_r.len() as f64;
        let s2 = (&self.e_r - &self.e_l * rho).norm_squared() / n;
        if s2 < SIGMA2_FLOOR {
            return Err(Error::DegenerateVariance(s2));
        }
        Ok(s2)
    }

    pub fn concentrated_loglik(&self, rho: f64, weights: &SpatialWeights) -> Result<f64> {
        let log_det = weights.log_det_factor(rho)?;
        let n = self.e_r.len() as f64;
        let s2 = self.sigma2(rho)?;
        Ok(-0.5 * n - 0.5 * n * libm::log(2.0 * PI) - 0.5 * n * libm::log(s2) + log_det)
    }
}

fn check_submodel(data: &Dataset, s: &SubmodelId) -> Result<()> {
    if s.p() != data.p() {
        return Err(Error::DimensionMismatch(format!("submodel over {} covariates, dataset has {}", s.p(), data.p())));
    }
    Ok(())
}

fn check_rho(data: &Dataset, rho: f64) -> Result<()> {
    if data.weights.contains_rho(rho) {
        Ok(())
    } else {
        let (lo, hi) = data.weights.rho_interval();
        Err(Error::RhoOutOfRange { rho, lo, hi })
    }
}

/// Profile estimate `beta_hat(rho)` on the columns of `S`.
pub fn profile_beta(rho: f64, data: &Dataset, s: &SubmodelId) -> Result<Vec<f64>> {
    check_rho(data, rho)?;
    Ok(ProfileRegression::new(data, s)?.beta(rho))
}

/// Profile variance `sigma2_hat(rho)` (divisor `n`).
pub fn profile_sigma2(rho: f64, data: &Dataset, s: &SubmodelId) -> Result<f64> {
    check_rho(data, rho)?;
    ProfileRegression::new(data, s)?.sigma2(rho)
}

pub fn concentrated_loglik(rho: f64, data: &Dataset, s: &SubmodelId) -> Result<f64> {
    ProfileRegression::new(data, s)?.concentrated_loglik(rho, &data.weights)
}

fn residuals(theta: &Theta, data: &Dataset, s: &SubmodelId) -> Result<DVector<f64>> {
    check_submodel(data, s)?;
    if theta.beta.len() != s.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for a submodel with {} covariates",
            theta.beta.len(),
            s.len()
        )));
    }
    let mut e = &data.y - &data.wy * theta.rho;
    for (k, j) in s.indices().into_iter().enumerate() {
        e.axpy(-theta.beta[k], &data.x.column(j), 1.0);
    }
    Ok(e)
}

/// Gaussian log-likelihood of the submodel `S` at `theta`.
pub fn full_loglik(theta: &Theta, data: &Dataset, s: &SubmodelId) -> Result<f64> {
    if !(theta.sigma2 > 0.0) {
        return Err(Error::Domain(format!("sigma2 = {} must be positive", theta.sigma2)));
    }
    let log_det = data.weights.log_det_factor(theta.rho)?;
    let e = residuals(theta, data, s)?;
    let n = data.n() as f64;
    Ok(-0.5 * n * libm::log(2.0 * PI * theta.sigma2) + log_det - e.norm_squared() / (2.0 * theta.sigma2))
}

/// Maximizes the concentrated likelihood of submodel `S`.
pub fn fit_mle(data: &Dataset, s: &SubmodelId) -> Result<FitResult> {
    let (lo, hi) = data.weights.rho_interval();
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!(
            "admissible rho interval ({lo}, {hi}) is unbounded; the weights carry no spatial signal"
        )));
    }
    let profile = ProfileRegression::new(data, s)?;
    let margin = INTERVAL_SHRINK * (hi - lo);
    let (a, b) = (lo + margin, hi - margin);
    let min = brent_minimize(
        |rho| profile.concentrated_loglik(rho, &data.weights).map(|v| -v),
        a,
        b,
        RHO_TOL,
        MAX_ITERATIONS,
    )?;
    let rho = min.x;
    let theta_hat = Theta { rho, sigma2: profile.sigma2(rho)?, beta: profile.beta(rho) };
    let loglik = profile.concentrated_loglik(rho, &data.weights)?;
    let info = observed_info(&theta_hat, data, s)?;

    let mut warnings = Vec::new();
    if !info.is_positive_definite() {
        warnings.push(FitWarning::InformationNotPositiveDefinite);
    }
    let at_edge = rho - a <= 10.0 * RHO_TOL || b - rho <= 10.0 * RHO_TOL;
    if at_edge {
        warnings.push(FitWarning::RhoAtBoundary);
    }
    let score_norm = score_max_norm(&theta_hat, data, s).unwrap_or(f64::INFINITY);
    let score_ok = score_norm < 1e-4 * (1.0 + loglik.abs());
    if !score_ok {
        warnings.push(FitWarning::LargeScore);
    }

    Ok(FitResult {
        theta_hat,
        loglik,
        info,
        submodel: *s,
        converged: !at_edge,
        iterations: min.iterations,
        score_norm,
        warnings,
    })
}

/// Max-norm of the central-difference gradient of [`full_loglik`].
pub fn score_max_norm(theta: &Theta, data: &Dataset, s: &SubmodelId) -> Result<f64> {
    let g = gradient_fd(|t| full_loglik(&Theta::from_slice(t), data, s), &theta.to_vec())?;
    Ok(g.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
}

/// Central-difference Hessian of [`full_loglik`] at `theta`, symmetrized.
pub fn loglik_hessian(theta: &Theta, data: &Dataset, s: &SubmodelId) -> Result<DMatrix<f64>> {
    let h = hessian_fd(|t| full_loglik(&Theta::from_slice(t), data, s), &theta.to_vec())?;
    Ok(linalg::symmetrize(&h))
}

/// Information estimate `-H / n` from the numerical Hessian of the likelihood.
pub fn observed_info(theta: &Theta, data: &Dataset, s: &SubmodelId) -> Result<FisherInfo> {
    let h = loglik_hessian(theta, data, s)?;
    let info = FisherInfo::new(h * (-1.0 / data.n() as f64), data.n())?;
    let cond = info.condition_number();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularInformation(cond));
    }
    Ok(info)
}

/// Observed information `-H / n` from the closed-form second derivatives of
/// the likelihood. Smooth in `theta`, so it can itself be differentiated.
pub fn closed_form_info(theta: &Theta, data: &Dataset, s: &SubmodelId) -> Result<FisherInfo> {
    if !(theta.sigma2 > 0.0) {
        return Err(Error::Domain(format!("sigma2 = {} must be positive", theta.sigma2)));
    }
    let e = residuals(theta, data, s)?;
    let xs = data.x_columns(s);
    let m = s.len();
    let n = data.n() as f64;
    let s2 = theta.sigma2;
    let s4 = s2 * s2;
    let wy = &data.wy;

    let mut h = DMatrix::zeros(m + 2, m + 2);
    h[(0, 0)] = data.weights.log_det_second_derivative(theta.rho)? - wy.norm_squared() / s2;
    h[(0, 1)] = -wy.dot(&e) / s4;
    h[(1, 1)] = n / (2.0 * s4) - e.norm_squared() / (s4 * s2);
    let xt_wy = xs.transpose() * wy;
    let xt_e = xs.transpose() * &e;
    let xtx = xs.transpose() * &xs;
    for k in 0..m {
        h[(0, k + 2)] = -xt_wy[k] / s2;
        h[(1, k + 2)] = -xt_e[k] / s4;
        for l in 0..m {
            h[(k + 2, l + 2)] = -xtx[(k, l)] / s2;
        }
    }
    for i in 0..m + 2 {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
    FisherInfo::new(h * (-1.0 / n), data.n())
}

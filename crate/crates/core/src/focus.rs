//! Focus functions and their Jacobians with respect to `(rho, sigma2, beta_S)`.
//!
//! Coefficients that a submodel leaves out are held at zero, so the output
//! dimension of a focus does not depend on the submodel.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::diff::jacobian_fd;
use crate::linalg;
use crate::slm::{closed_form_info, Dataset, FisherInfo, Theta};
use crate::{Error, Result, SubmodelId};

/// Top eigenvalues closer than this (relative) make `MaxEigen` nonsmooth.
const EIGEN_GAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FocusKind {
    /// `rho (WY)_i + x_i' beta` at a fixed unit.
    ConditionalMean,
    /// Largest eigenvalue of the inverse information.
    MaxEigen,
    /// The regression coefficients (optionally a subset).
    BetaCoeffs,
    /// `(log|I - rho W|, sigma2, beta)`.
    Spillover,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FocusSpec {
    pub kind: FocusKind,
    pub location: Option<usize>,
    /// Full-model covariate indices for `BetaCoeffs`; `None` means all.
    pub coeff_subset: Option<Vec<usize>>,
}

impl FocusSpec {
    pub fn conditional_mean(location: usize) -> Self {
        Self { kind: FocusKind::ConditionalMean, location: Some(location), coeff_subset: None }
    }

    pub fn max_eigen() -> Self {
        Self::of(FocusKind::MaxEigen)
    }

    pub fn beta_coeffs(coeff_subset: Option<Vec<usize>>) -> Self {
        Self { kind: FocusKind::BetaCoeffs, location: None, coeff_subset }
    }

    pub fn spillover() -> Self {
        Self::of(FocusKind::Spillover)
    }

    fn of(kind: FocusKind) -> Self {
        Self { kind, location: None, coeff_subset: None }
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if let Some(i) = self.location {
            if i >= data.n() {
                return Err(Error::FocusSpec(format!("location {i} outside [0, {})", data.n())));
            }
        }
        if self.kind == FocusKind::ConditionalMean && self.location.is_none() {
            return Err(Error::FocusSpec("conditional mean needs a location".into()));
        }
        if let Some(c) = &self.coeff_subset {
            if c.is_empty() {
                return Err(Error::FocusSpec("empty coefficient subset".into()));
            }
            if let Some(&j) = c.iter().find(|&&j| j >= data.p()) {
                return Err(Error::FocusSpec(format!("coefficient {j} outside [0, {})", data.p())));
            }
        }
        Ok(())
    }

    fn coefficients(&self, p: usize) -> Vec<usize> {
        self.coeff_subset.clone().unwrap_or_else(|| (0..p).collect())
    }

    /// Output dimension `k`.
    pub fn dim(&self, p: usize) -> usize {
        match self.kind {
            FocusKind::ConditionalMean | FocusKind::MaxEigen => 1,
            FocusKind::BetaCoeffs => self.coefficients(p).len(),
            FocusKind::Spillover => p + 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FocusWarning {
    /// The largest eigenvalue is repeated; its Jacobian is unreliable.
    NonsmoothMaxEigen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocusEval {
    pub value: Vec<f64>,
    /// `k x (|S| + 2)`, columns ordered `(rho, sigma2, beta_S)`.
    pub jacobian: DMatrix<f64>,
    pub warning: Option<FocusWarning>,
}

/// Value and Jacobian of a focus at `theta` under submodel `S`.
///
/// `info` is the information matrix at `theta` for the same submodel and is
/// only read by [`FocusKind::MaxEigen`].
pub fn eval_focus(
    spec: &FocusSpec,
    theta: &Theta,
    data: &Dataset,
    s: &SubmodelId,
    info: Option<&FisherInfo>,
) -> Result<FocusEval> {
    spec.validate(data)?;
    if theta.beta.len() != s.len() || s.p() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} coefficients, submodel {} of {}",
            theta.beta.len(),
            s.len(),
            s.p()
        )));
    }
    let cols = s.len() + 2;
    match spec.kind {
        FocusKind::ConditionalMean => {
            let i = spec.location.unwrap_or_default();
            let wy_i = data.wy()[i];
            let mut jac = DMatrix::zeros(1, cols);
            jac[(0, 0)] = wy_i;
            let mut value = theta.rho * wy_i;
            for (k, j) in s.indices().into_iter().enumerate() {
                let x = data.x()[(i, j)];
                jac[(0, k + 2)] = x;
                value += x * theta.beta[k];
            }
            Ok(FocusEval { value: vec![value], jacobian: jac, warning: None })
        }
        FocusKind::BetaCoeffs => {
            let coeffs = spec.coefficients(data.p());
            let mut jac = DMatrix::zeros(coeffs.len(), cols);
            let mut value = vec![0.0; coeffs.len()];
            for (r, &j) in coeffs.iter().enumerate() {
                if let Some(k) = s.position(j) {
                    jac[(r, k + 2)] = 1.0;
                    value[r] = theta.beta[k];
                }
            }
            Ok(FocusEval { value, jacobian: jac, warning: None })
        }
        FocusKind::Spillover => {
            let p = data.p();
            let mut jac = DMatrix::zeros(p + 2, cols);
            let mut value = vec![0.0; p + 2];
            value[0] = data.weights().log_det_factor(theta.rho)?;
            jac[(0, 0)] = data.weights().log_det_derivative(theta.rho)?;
            value[1] = theta.sigma2;
            jac[(1, 1)] = 1.0;
            for j in 0..p {
                if let Some(k) = s.position(j) {
                    value[j + 2] = theta.beta[k];
                    jac[(j + 2, k + 2)] = 1.0;
                }
            }
            Ok(FocusEval { value, jacobian: jac, warning: None })
        }
        FocusKind::MaxEigen => {
            let info = info.ok_or_else(|| Error::FocusSpec("max-eigen focus needs an information matrix".into()))?;
            if info.dim() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "information is {0}x{0}, submodel needs {cols}",
                    info.dim()
                )));
            }
            let (value, nonsmooth) = max_inverse_eigen(info.matrix())?;
            let jac = max_eigen_jacobian(
                |t| Ok(closed_form_info(&Theta::from_slice(t), data, s)?.matrix().clone()),
                &theta.to_vec(),
            )?;
            Ok(FocusEval {
                value: vec![value],
                jacobian: jac,
                warning: nonsmooth.then_some(FocusWarning::NonsmoothMaxEigen),
            })
        }
    }
}

/// The focus as a plain function of `theta`, for differentiation.
///
/// `MaxEigen` is evaluated on the closed-form information at `theta`.
pub fn focus_value(spec: &FocusSpec, theta: &Theta, data: &Dataset, s: &SubmodelId) -> Result<Vec<f64>> {
    match spec.kind {
        FocusKind::MaxEigen => {
            let info = closed_form_info(theta, data, s)?;
            Ok(vec![max_inverse_eigen(info.matrix())?.0])
        }
        _ => Ok(eval_focus(spec, theta, data, s, None)?.value),
    }
}

/// `lambda_max(M^{-1})` for symmetric positive definite `M`, and whether the
/// top eigenvalue is (numerically) repeated.
pub fn max_inverse_eigen(m: &DMatrix<f64>) -> Result<(f64, bool)> {
    let ev = linalg::sym_eigenvalues(m);
    let (lo, next) = match ev.as_slice() {
        [] => return Err(Error::DimensionMismatch("empty information matrix".into())),
        [a] => (*a, f64::INFINITY),
        [a, b, ..] => (*a, *b),
    };
    if !(lo > 0.0) {
        return Err(Error::SingularInformation(f64::INFINITY));
    }
    let top = 1.0 / lo;
    let second = 1.0 / next;
    Ok((top, top - second <= EIGEN_GAP_TOL * top))
}

/// Central-difference Jacobian of `theta -> lambda_max(info(theta)^{-1})`.
pub fn max_eigen_jacobian<F>(info_map: F, theta: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    jacobian_fd(|t| Ok(vec![max_inverse_eigen(&info_map(t)?)?.0]), theta)
}

/// Generic central-difference Jacobian of any focus map over `theta`.
pub fn jacobian_fd_focus(spec: &FocusSpec, theta: &Theta, data: &Dataset, s: &SubmodelId) -> Result<DMatrix<f64>> {
    jacobian_fd(|t| focus_value(spec, &Theta::from_slice(t), data, s), &theta.to_vec())
}

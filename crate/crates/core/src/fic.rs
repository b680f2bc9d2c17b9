//! Focused information criterion for submodels of the spatial lag model.
//!
//! All information blocks come from the wide-model information matrix, ordered
//! `(rho, sigma2, beta)` and scaled per observation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::focus::{eval_focus, FocusSpec};
use crate::linalg;
use crate::slm::{Dataset, FisherInfo, FitResult};
use crate::{Error, Result, SubmodelId};

pub use crate::submodel::{enumerate_submodels, projection_matrix};

/// One row of a ranked criterion table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub submodel: SubmodelId,
    pub variables: Vec<String>,
    pub bias2: f64,
    /// Variance for FIC, the overfitting penalty for sAFIC.
    pub variance: f64,
    pub score: f64,
    /// 1-based; 0 until the table is ranked.
    pub rank: usize,
}

impl ScoreRow {
    pub fn new(submodel: SubmodelId, variables: Vec<String>, bias2: f64, variance: f64) -> Self {
        Self { submodel, variables, bias2, variance, score: bias2 + variance, rank: 0 }
    }
}

/// Scored submodels, kept in input order with ranks attached.
#[derive(Debug, Clone, PartialEq)]
pub struct FicReport {
    pub rows: Vec<ScoreRow>,
}

impl FicReport {
    /// The rank-1 row.
    pub fn best(&self) -> &ScoreRow {
        self.rows.iter().find(|r| r.rank == 1).unwrap_or(&self.rows[0])
    }

    /// Rows sorted by rank.
    pub fn ranked(&self) -> Vec<&ScoreRow> {
        let mut v: Vec<&ScoreRow> = self.rows.iter().collect();
        v.sort_by_key(|r| r.rank);
        v
    }
}

/// Assigns ranks by ascending score; ties go to fewer variables, then the
/// smaller mask.
pub fn rank_models(mut rows: Vec<ScoreRow>) -> FicReport {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&rows[a], &rows[b]);
        ra.score
            .total_cmp(&rb.score)
            .then(ra.submodel.len().cmp(&rb.submodel.len()))
            .then(ra.submodel.mask().cmp(&rb.submodel.mask()))
    });
    for (r, &i) in order.iter().enumerate() {
        rows[i].rank = r + 1;
    }
    FicReport { rows }
}

fn submodel_index(s: &SubmodelId) -> Vec<usize> {
    let mut idx = alloc::vec![0, 1];
    idx.extend(s.indices().into_iter().map(|j| j + 2));
    idx
}

fn check_full(info_full: &DMatrix<f64>, s: &SubmodelId) -> Result<()> {
    if info_full.nrows() != s.p() + 2 {
        return Err(Error::DimensionMismatch(format!(
            "information is {0}x{0}, expected {1}",
            info_full.nrows(),
            s.p() + 2
        )));
    }
    Ok(())
}

/// The `(rho, sigma2, beta_S)` principal block of the wide information.
pub fn submodel_info(info_full: &FisherInfo, s: &SubmodelId) -> Result<FisherInfo> {
    check_full(info_full.matrix(), s)?;
    let m = linalg::principal_submatrix(info_full.matrix(), &submodel_index(s));
    FisherInfo::new(m, info_full.n_obs())
}

/// Mean matrix `m_S = I_S^{-1} B_S`, `(|S|+2) x p`.
///
/// `B_S` stacks the `rho`-row of the `(rho, beta)` block, a zero row for
/// `sigma2`, and the `S` rows of the `beta` block.
pub fn m_matrix(info_full: &FisherInfo, s: &SubmodelId) -> Result<DMatrix<f64>> {
    let full = info_full.matrix();
    check_full(full, s)?;
    let p = s.p();
    let idx = s.indices();
    let mut b = DMatrix::zeros(idx.len() + 2, p);
    for c in 0..p {
        b[(0, c)] = full[(0, c + 2)];
        for (r, &j) in idx.iter().enumerate() {
            b[(r + 2, c)] = full[(j + 2, c + 2)];
        }
    }
    let i_s = linalg::principal_submatrix(full, &submodel_index(s));
    linalg::solve_information(&i_s, &b)
}

/// Plug-in misspecification direction `sqrt(n) * beta_wide`.
pub fn delta_hat(fit_wide: &FitResult) -> DVector<f64> {
    delta_from(&fit_wide.theta_hat.beta, fit_wide.info.n_obs())
}

pub fn delta_from(beta_wide: &[f64], n: usize) -> DVector<f64> {
    DVector::from_iterator(beta_wide.len(), beta_wide.iter().map(|b| libm::sqrt(n as f64) * b))
}

/// Squared bias and variance of a focus with Jacobian `j_s` under `S`.
///
/// `j_beta_wide` is the `k x p` Jacobian of the focus with respect to the full
/// coefficient vector at the wide fit; it centres the bias so that the wide
/// model is unbiased.
pub fn fic_terms(
    j_s: &DMatrix<f64>,
    j_beta_wide: &DMatrix<f64>,
    info_full: &FisherInfo,
    s: &SubmodelId,
    delta: &DVector<f64>,
) -> Result<(f64, f64)> {
    let k = j_s.nrows();
    if j_s.ncols() != s.len() + 2 || j_beta_wide.shape() != (k, s.p()) || delta.len() != s.p() {
        return Err(Error::DimensionMismatch(format!(
            "focus Jacobians {:?} and {:?} with delta of length {} for submodel {s} of {}",
            j_s.shape(),
            j_beta_wide.shape(),
            delta.len(),
            s.p()
        )));
    }
    let m = m_matrix(info_full, s)?;
    let b = j_s * m - j_beta_wide;
    let bias2 = (b * delta).norm_squared();
    let i_s = linalg::principal_submatrix(info_full.matrix(), &submodel_index(s));
    let sol = linalg::solve_information(&i_s, &j_s.transpose())?;
    let variance = (j_s * sol).trace();
    Ok((bias2, variance))
}

/// Focus Jacobian with respect to the full `beta` at the wide fit.
pub fn beta_jacobian_wide(spec: &FocusSpec, fit_wide: &FitResult, data: &Dataset) -> Result<DMatrix<f64>> {
    let eval = eval_focus(spec, &fit_wide.theta_hat, data, &fit_wide.submodel, Some(&fit_wide.info))?;
    let p = data.p();
    Ok(eval.jacobian.columns(2, p).into_owned())
}

/// FIC row for submodel `S`.
pub fn fic_score(
    spec: &FocusSpec,
    s: &SubmodelId,
    fit_s: &FitResult,
    fit_wide: &FitResult,
    info_full: &FisherInfo,
    data: &Dataset,
) -> Result<ScoreRow> {
    if !fit_wide.submodel.is_wide() || fit_s.submodel != *s {
        return Err(Error::DimensionMismatch(format!(
            "fits are for {} and {}, expected {s} and the wide model",
            fit_s.submodel, fit_wide.submodel
        )));
    }
    let eval = eval_focus(spec, &fit_s.theta_hat, data, s, Some(&fit_s.info))?;
    let j_beta = beta_jacobian_wide(spec, fit_wide, data)?;
    let (bias2, variance) = fic_terms(&eval.jacobian, &j_beta, info_full, s, &delta_hat(fit_wide))?;
    Ok(ScoreRow::new(*s, data.variable_names(s), bias2, variance))
}

/// Scores and ranks every fitted submodel; `fits` must include the wide model.
pub fn fic_sweep(spec: &FocusSpec, fits: &[FitResult], data: &Dataset) -> Result<FicReport> {
    let wide = fits
        .iter()
        .find(|f| f.submodel.is_wide())
        .ok_or_else(|| Error::DimensionMismatch("sweep has no wide-model fit".into()))?;
    let j_beta = beta_jacobian_wide(spec, wide, data)?;
    let delta = delta_hat(wide);
    let rows = fits
        .iter()
        .map(|f| {
            let eval = eval_focus(spec, &f.theta_hat, data, &f.submodel, Some(&f.info))?;
            let (bias2, variance) = fic_terms(&eval.jacobian, &j_beta, &wide.info, &f.submodel, &delta)?;
            Ok(ScoreRow::new(f.submodel, data.variable_names(&f.submodel), bias2, variance))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_models(rows))
}

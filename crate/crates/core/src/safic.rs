//! Spatially averaged FIC for the linear predictor `rho (WY)_i + x_i' beta`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::fic::{delta_hat, rank_models, FicReport, ScoreRow};
use crate::linalg;
use crate::slm::{Dataset, FisherInfo, FitResult};
use crate::{Error, Result, SubmodelId};

/// Kernel weights below this are treated as underflowed.
const KERNEL_FLOOR: f64 = 1e-300;

/// Nonnegative unit weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiWeights {
    psi: Vec<f64>,
}

impl PsiWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.psi
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }
}

pub fn psi_uniform(n: usize) -> Result<PsiWeights> {
    if n == 0 {
        return Err(Error::InvalidSize("uniform weights need n >= 1".into()));
    }
    Ok(PsiWeights { psi: vec![1.0 / n as f64; n] })
}

/// Gaussian kernel weights centred at `z0`, renormalized to sum to one.
pub fn psi_kernel(x: &DMatrix<f64>, z0: &[f64], h: f64) -> Result<PsiWeights> {
    let p = x.ncols();
    if z0.len() != p {
        return Err(Error::DimensionMismatch(format!("kernel centre has {} entries, X has {p} columns", z0.len())));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {h}")));
    }
    let norm = libm::pow(2.0 * core::f64::consts::PI, -(p as f64) / 2.0);
    let raw: Vec<f64> = x
        .row_iter()
        .map(|row| {
            let d2: f64 = row.iter().zip(z0).map(|(a, b)| (a - b) * (a - b)).sum();
            norm * libm::exp(-d2 / (2.0 * h * h))
        })
        .collect();
    if raw.iter().all(|&r| r < KERNEL_FLOOR) {
        return Err(Error::BandwidthTooSmall(h));
    }
    let total: f64 = raw.iter().sum();
    Ok(PsiWeights { psi: raw.into_iter().map(|r| r / total).collect() })
}

/// Median Euclidean distance over all row pairs of `x`.
pub fn median_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push((x.row(i) - x.row(j)).norm());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len() / 2;
    if d.len() % 2 == 1 {
        d[m]
    } else {
        0.5 * (d[m - 1] + d[m])
    }
}

/// How the spatial average is weighted.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightScheme {
    Uniform,
    Kernel { z0: Vec<f64>, bandwidth: f64 },
}

impl WeightScheme {
    pub fn weights(&self, data: &Dataset) -> Result<PsiWeights> {
        match self {
            WeightScheme::Uniform => psi_uniform(data.n()),
            WeightScheme::Kernel { z0, bandwidth } => psi_kernel(data.x(), z0, *bandwidth),
        }
    }
}

/// The `(rho, beta)` partition of the information, with `sigma2` deleted.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoBetaBlocks {
    pub i_rr: f64,
    /// `I_{rho,beta}` as a column; `I_{beta,rho}` is its transpose.
    pub i_rb: DVector<f64>,
    pub i_bb: DMatrix<f64>,
    /// `(I_bb - I_br I_rr^{-1} I_rb)^{-1}`.
    pub q: DMatrix<f64>,
    /// The Schur complement `Q^{-1}`.
    pub schur: DMatrix<f64>,
}

impl RhoBetaBlocks {
    pub fn p(&self) -> usize {
        self.i_rb.len()
    }

    /// `A = I_br / I_rr`.
    pub fn a(&self) -> DVector<f64> {
        &self.i_rb / self.i_rr
    }
}

pub fn rho_beta_blocks(info_full: &FisherInfo) -> Result<RhoBetaBlocks> {
    let m = info_full.matrix();
    let d = m.nrows();
    if d < 2 {
        return Err(Error::DimensionMismatch(format!("information is {d}x{d}")));
    }
    let p = d - 2;
    let i_rr = m[(0, 0)];
    if !(i_rr > 0.0) {
        return Err(Error::SingularInformation(f64::INFINITY));
    }
    let i_rb = DVector::from_fn(p, |j, _| 0.5 * (m[(0, j + 2)] + m[(j + 2, 0)]));
    let i_bb = linalg::symmetrize(&m.view((2, 2), (p, p)).into_owned());
    let schur = linalg::symmetrize(&(&i_bb - &i_rb * i_rb.transpose() / i_rr));
    let q = linalg::symmetrize(&linalg::solve_information(&schur, &DMatrix::identity(p, p))?);
    Ok(RhoBetaBlocks { i_rr, i_rb, i_bb, q, schur })
}

/// `G_S = Pi_S' (Pi_S Q^{-1} Pi_S')^{-1} Pi_S Q^{-1}`.
pub fn g_matrix(blocks: &RhoBetaBlocks, s: &SubmodelId) -> Result<DMatrix<f64>> {
    let p = blocks.p();
    if s.p() != p {
        return Err(Error::DimensionMismatch(format!("submodel over {} covariates, blocks over {p}", s.p())));
    }
    if s.is_wide() {
        return Ok(DMatrix::identity(p, p));
    }
    if s.is_empty() {
        return Ok(DMatrix::zeros(p, p));
    }
    let idx = s.indices();
    let inner = linalg::principal_submatrix(&blocks.schur, &idx);
    let rows = blocks.schur.select_rows(&idx);
    let sol = linalg::solve_information(&inner, &rows)?;
    let mut g = DMatrix::zeros(p, p);
    for (r, &j) in idx.iter().enumerate() {
        g.row_mut(j).copy_from(&sol.row(r));
    }
    Ok(g)
}

/// `Z' Psi Z` with `Z = [WY, X]`.
pub fn h_empirical(data: &Dataset, psi: &PsiWeights) -> Result<DMatrix<f64>> {
    let n = data.n();
    if psi.len() != n {
        return Err(Error::DimensionMismatch(format!("{} weights for {n} units", psi.len())));
    }
    let p = data.p();
    let mut z = DMatrix::zeros(n, p + 1);
    z.set_column(0, data.wy());
    z.columns_mut(1, p).copy_from(data.x());
    let mut zw = z.clone();
    for (i, &w) in psi.as_slice().iter().enumerate() {
        zw.row_mut(i).scale_mut(w);
    }
    Ok(linalg::symmetrize(&(z.transpose() * zw)))
}

/// `K = A H_rr A' - (A H_rb + H_br A') + H_bb`.
pub fn k_empirical(blocks: &RhoBetaBlocks, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = blocks.p();
    if h.shape() != (p + 1, p + 1) {
        return Err(Error::DimensionMismatch(format!("H is {:?}, expected {1}x{1}", h.shape(), p + 1)));
    }
    let a = blocks.a();
    let h_rr = h[(0, 0)];
    let h_br = h.view((1, 0), (p, 1)).into_owned();
    let h_bb = h.view((1, 1), (p, p)).into_owned();
    let cross = &a * h_br.transpose();
    let k = &a * a.transpose() * h_rr - (&cross + cross.transpose()) + h_bb;
    Ok(linalg::symmetrize(&k))
}

/// `A (WY)_i - x_i`.
pub fn omega_i(i: usize, data: &Dataset, blocks: &RhoBetaBlocks) -> Result<DVector<f64>> {
    check_unit(i, data)?;
    Ok(blocks.a() * data.wy()[i] - data.x().row(i).transpose())
}

fn check_unit(i: usize, data: &Dataset) -> Result<()> {
    if i >= data.n() {
        return Err(Error::DimensionMismatch(format!("unit {i} outside [0, {})", data.n())));
    }
    Ok(())
}

/// Pointwise AMSE of the estimated linear predictor at unit `i`.
pub fn pointwise_risk(
    i: usize,
    s: &SubmodelId,
    delta: &DVector<f64>,
    blocks: &RhoBetaBlocks,
    data: &Dataset,
) -> Result<f64> {
    let omega = omega_i(i, data, blocks)?;
    let (bias_m, var_m) = risk_matrices(s, delta, blocks)?;
    let wy = data.wy()[i];
    Ok(omega.dot(&(&bias_m * &omega)) + wy * wy / blocks.i_rr + omega.dot(&(&var_m * &omega)))
}

/// `(I-G) delta delta' (I-G)'` and `G Q G'`.
fn risk_matrices(s: &SubmodelId, delta: &DVector<f64>, blocks: &RhoBetaBlocks) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = blocks.p();
    if delta.len() != p {
        return Err(Error::DimensionMismatch(format!("delta has {} entries, expected {p}", delta.len())));
    }
    let g = g_matrix(blocks, s)?;
    let u = (DMatrix::identity(p, p) - &g) * delta;
    Ok((&u * u.transpose(), &g * &blocks.q * g.transpose()))
}

/// sAFIC row without the `rho` term shared by all submodels.
pub fn safic_score(s: &SubmodelId, delta: &DVector<f64>, blocks: &RhoBetaBlocks, k: &DMatrix<f64>) -> Result<ScoreRow> {
    let (bias_m, var_m) = risk_matrices(s, delta, blocks)?;
    if k.shape() != bias_m.shape() {
        return Err(Error::DimensionMismatch(format!("K is {:?}, expected {:?}", k.shape(), bias_m.shape())));
    }
    let bias2 = (bias_m * k).trace();
    let penalty = (var_m * k).trace();
    Ok(ScoreRow::new(*s, Vec::new(), bias2, penalty))
}

/// Ranked sAFIC table together with the weighting that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SaficReport {
    pub scheme: WeightScheme,
    pub table: FicReport,
}

/// Scores every submodel in `submodels` using blocks from the wide fit.
pub fn safic_sweep(
    data: &Dataset,
    fit_wide: &FitResult,
    scheme: &WeightScheme,
    submodels: &[SubmodelId],
) -> Result<SaficReport> {
    let psi = scheme.weights(data)?;
    let blocks = rho_beta_blocks(&fit_wide.info)?;
    let k = k_empirical(&blocks, &h_empirical(data, &psi)?)?;
    let delta = delta_hat(fit_wide);
    let rows = submodels
        .iter()
        .map(|s| {
            let mut row = safic_score(s, &delta, &blocks, &k)?;
            row.variables = data.variable_names(s);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SaficReport { scheme: scheme.clone(), table: rank_models(rows) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::submodel::enumerate_submodels;
    use crate::weights::{build_chain_lag1, row_normalize, AdjacencyMatrix, SpatialWeights};
    use alloc::string::String;
    use alloc::sync::Arc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    fn random_info(p: usize, rng: &mut ChaCha8Rng) -> FisherInfo {
        let d = p + 2;
        let a = DMatrix::from_fn(d, d, |_, _| normal(rng));
        FisherInfo::new(linalg::symmetrize(&(&a * a.transpose() + DMatrix::identity(d, d))), 40).unwrap()
    }

    fn dataset(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Dataset {
        let w = Arc::new(row_normalize(build_chain_lag1(n).unwrap()).unwrap());
        let x = DMatrix::from_fn(n, p, |_, _| normal(rng));
        let y = DVector::from_fn(n, |_, _| normal(rng));
        Dataset::new(y, x, w, (0..p).map(|j| format!("x{j}")).collect::<Vec<String>>()).unwrap()
    }

    #[test]
    fn uniform_and_kernel_weights() {
        assert_eq!(psi_uniform(4).unwrap().as_slice(), [0.25; 4]);
        assert_eq!(psi_uniform(1).unwrap().as_slice(), [1.0]);
        assert!((psi_uniform(75).unwrap().as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(psi_uniform(0).is_err());

        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let w = psi_kernel(&x, &[0.0], 1.0).unwrap();
        assert!((w.as_slice()[0] - 0.6225).abs() < 1e-4 && (w.as_slice()[1] - 0.3775).abs() < 1e-4);
        let peak = psi_kernel(&x, &[1.0], 0.05).unwrap();
        assert!(peak.as_slice()[1] > 1.0 - 1e-12);
        let flat = psi_kernel(&x, &[0.0], 1e6).unwrap();
        assert!((flat.as_slice()[0] - 0.5).abs() < 1e-10);
        assert!(matches!(psi_kernel(&x, &[50.0], 0.01), Err(Error::BandwidthTooSmall(_))));
    }

    #[test]
    fn median_distance() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 3.0]);
        assert_eq!(median_pairwise_distance(&x), 2.0);
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 3.0, 7.0]);
        // distances 1,3,7,2,6,4
        assert_eq!(median_pairwise_distance(&x), 3.5);
    }

    #[test]
    fn scalar_schur_complement() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 5.0, 0.0, 1.0, 0.0, 1.0]);
        let b = rho_beta_blocks(&FisherInfo::new(m, 10).unwrap()).unwrap();
        assert!((b.q[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn block_diagonal_blocks() {
        let mut m = DMatrix::identity(4, 4) * 2.0;
        m[(2, 3)] = 0.5;
        m[(3, 2)] = 0.5;
        let b = rho_beta_blocks(&FisherInfo::new(m.clone(), 10).unwrap()).unwrap();
        let inv = m.view((2, 2), (2, 2)).into_owned().try_inverse().unwrap();
        assert!((b.q - inv).amax() < 1e-14);
    }

    #[test]
    fn g_matrix_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in 1..6 {
            let b = rho_beta_blocks(&random_info(p, &mut rng)).unwrap();
            assert!((b.q.clone() - b.q.transpose()).amax() < 1e-10);
            assert_eq!(g_matrix(&b, &SubmodelId::wide(p)).unwrap(), DMatrix::identity(p, p));
            assert_eq!(g_matrix(&b, &SubmodelId::narrow(p)).unwrap(), DMatrix::zeros(p, p));
            for s in enumerate_submodels(p).unwrap() {
                let g = g_matrix(&b, &s).unwrap();
                assert!((&g * &g - &g).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn h_matches_summation_and_two_unit_example() {
        let a = AdjacencyMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let w = Arc::new(SpatialWeights::unnormalized(a).unwrap());
        let d = Dataset::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_element(2, 1, 1.0),
            w,
            vec![String::from("c")],
        );
        // one constant column with n=2 is full rank but p < n holds
        let d = d.unwrap();
        let h = h_empirical(&d, &psi_uniform(2).unwrap()).unwrap();
        // WY = (2, 1)
        let want = DMatrix::from_row_slice(2, 2, &[2.5, 1.5, 1.5, 1.0]);
        assert!((h - want).amax() < 1e-12);
    }

    #[test]
    fn h_without_spatial_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 6;
        let w = Arc::new(SpatialWeights::unnormalized(AdjacencyMatrix::new(DMatrix::zeros(n, n)).unwrap()).unwrap());
        let x = DMatrix::from_fn(n, 2, |_, _| normal(&mut rng));
        let d = Dataset::new(DVector::from_fn(n, |_, _| normal(&mut rng)), x.clone(), w, vec!["a".into(), "b".into()])
            .unwrap();
        let h = h_empirical(&d, &psi_uniform(n).unwrap()).unwrap();
        assert_eq!(h.row(0).amax(), 0.0);
        assert!((h.view((1, 1), (2, 2)) - x.transpose() * &x / n as f64).amax() < 1e-14);
    }

    #[test]
    fn k_equals_weighted_omega_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = 3;
        let d = dataset(15, p, &mut rng);
        let b = rho_beta_blocks(&random_info(p, &mut rng)).unwrap();
        let z0: Vec<f64> = d.x().row(2).iter().copied().collect();
        for psi in [psi_uniform(15).unwrap(), psi_kernel(d.x(), &z0, 1.0).unwrap()] {
            let k = k_empirical(&b, &h_empirical(&d, &psi).unwrap()).unwrap();
            let mut sum = DMatrix::zeros(p, p);
            for (i, &w) in psi.as_slice().iter().enumerate() {
                let o = omega_i(i, &d, &b).unwrap();
                sum += &o * o.transpose() * w;
            }
            assert!((&k - sum).amax() < 1e-10);
            assert!(linalg::sym_eigenvalues(&k)[0] > -1e-10);
        }
    }

    #[test]
    fn omega_without_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = dataset(5, 2, &mut rng);
        let b = rho_beta_blocks(&FisherInfo::new(DMatrix::identity(4, 4), 5).unwrap()).unwrap();
        let o = omega_i(3, &d, &b).unwrap();
        assert_eq!(o, -d.x().row(3).transpose());
    }

    #[test]
    fn averaged_risk_decomposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = 3;
        let d = dataset(20, p, &mut rng);
        let b = rho_beta_blocks(&random_info(p, &mut rng)).unwrap();
        let delta = DVector::from_fn(p, |_, _| 2.0 * normal(&mut rng));
        let z0: Vec<f64> = d.x().row(0).iter().copied().collect();
        for psi in [psi_uniform(20).unwrap(), psi_kernel(d.x(), &z0, 0.8).unwrap()] {
            let h = h_empirical(&d, &psi).unwrap();
            let k = k_empirical(&b, &h).unwrap();
            for s in enumerate_submodels(p).unwrap() {
                let avg: f64 = psi
                    .as_slice()
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| w * pointwise_risk(i, &s, &delta, &b, &d).unwrap())
                    .sum();
                let row = safic_score(&s, &delta, &b, &k).unwrap();
                assert!(row.bias2 >= -1e-10 && row.variance >= -1e-10);
                assert!((avg - (row.score + h[(0, 0)] / b.i_rr)).abs() < 1e-10 * (1.0 + avg));
            }
        }
    }

    #[test]
    fn boundary_submodels() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let p = 2;
        let d = dataset(8, p, &mut rng);
        let b = rho_beta_blocks(&random_info(p, &mut rng)).unwrap();
        let delta = DVector::from_vec(vec![1.0, -1.0]);
        let k = k_empirical(&b, &h_empirical(&d, &psi_uniform(8).unwrap()).unwrap()).unwrap();
        let wide = safic_score(&SubmodelId::wide(p), &delta, &b, &k).unwrap();
        assert!(wide.bias2.abs() < 1e-14);
        assert!((wide.variance - (&b.q * &k).trace()).abs() < 1e-12);
        let narrow = safic_score(&SubmodelId::narrow(p), &delta, &b, &k).unwrap();
        assert_eq!(narrow.variance, 0.0);
        assert!((narrow.bias2 - delta.dot(&(&k * &delta))).abs() < 1e-12);
        let o = omega_i(1, &d, &b).unwrap();
        let r = pointwise_risk(1, &SubmodelId::narrow(p), &delta, &b, &d).unwrap();
        let wy = d.wy()[1];
        assert!((r - (o.dot(&delta).powi(2) + wy * wy / b.i_rr)).abs() < 1e-12);
    }
}

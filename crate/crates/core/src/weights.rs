//! Spatial adjacency and weights matrices.
//!
//! A [`SpatialWeights`] is immutable once built. Its real spectrum and the
//! admissible interval for the autoregressive parameter are computed at
//! construction, so the log-determinant `log|I - rho W|` costs O(n) per call.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Imaginary parts up to this magnitude are treated as round-off.
const IMAG_TOL: f64 = 1e-8;
/// Schur convergence tolerance and iteration cap; without a cap some
/// matrices cycle forever.
const SCHUR_EPS: f64 = 64.0 * f64::EPSILON;
const SCHUR_MAX_ITER: usize = 10_000;
const SCHUR_SHIFTS: [f64; 4] = [0.0, 0.3, -0.55, 1.3];

/// Square, nonnegative, zero-diagonal matrix of neighbour relations.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    entries: DMatrix<f64>,
}

impl AdjacencyMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::InvalidSize(format!("adjacency matrix must be square, got {}x{}", n, entries.ncols())));
        }
        if n < 2 {
            return Err(Error::InvalidSize(format!("need at least 2 units, got {n}")));
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidEntry(i, j));
                }
            }
            if entries[(i, i)] != 0.0 {
                return Err(Error::NonzeroDiagonal(i));
            }
        }
        Ok(Self { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        let scale = self.entries.amax().max(1.0);
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| (self.entries[(i, j)] - self.entries[(j, i)]).abs() <= 1e-12 * scale))
    }
}

/// Lag-1 chain: unit `i` neighbours `i - 1` and `i + 1`.
pub fn build_chain_lag1(n: usize) -> Result<AdjacencyMatrix> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("chain needs at least 2 units, got {n}")));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
        a[(i + 1, i)] = 1.0;
    }
    AdjacencyMatrix::new(a)
}

/// Divides each row by its sum. Fails on the first unit with no neighbours.
pub fn row_normalize(a: AdjacencyMatrix) -> Result<SpatialWeights> {
    SpatialWeights::build(a, true)
}

#[derive(Debug, Clone)]
pub struct SpatialWeights {
    base: AdjacencyMatrix,
    matrix: DMatrix<f64>,
    row_normalized: bool,
    spectrum: core::result::Result<Vec<f64>, f64>,
    rho_interval: (f64, f64),
}

impl SpatialWeights {
    /// Uses the adjacency entries as weights without normalization.
    pub fn unnormalized(a: AdjacencyMatrix) -> Result<Self> {
        Self::build(a, false)
    }

    pub fn row_normalized_from(a: AdjacencyMatrix) -> Result<Self> {
        Self::build(a, true)
    }

    fn build(base: AdjacencyMatrix, normalize: bool) -> Result<Self> {
        let n = base.n();
        let mut matrix = base.entries.clone();
        let mut degrees = Vec::with_capacity(n);
        if normalize {
            for i in 0..n {
                let s: f64 = matrix.row(i).sum();
                if s <= 0.0 {
                    return Err(Error::IsolatedUnit(i));
                }
                matrix.row_mut(i).scale_mut(1.0 / s);
                degrees.push(s);
            }
        }

        let spectrum = if base.is_symmetric() {
            let sym = if normalize {
                // D^{-1/2} A D^{-1/2} is similar to D^{-1} A.
                let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / libm::sqrt(*d)).collect();
                DMatrix::from_fn(n, n, |i, j| base.entries[(i, j)] * inv_sqrt[i] * inv_sqrt[j])
            } else {
                base.entries.clone()
            };
            Ok(crate::linalg::sym_eigenvalues(&sym))
        } else {
            general_real_spectrum(&matrix)
        };

        let rho_interval = if normalize {
            (-1.0, 1.0)
        } else {
            match &spectrum {
                Ok(ev) => interval_from_spectrum(ev),
                Err(_) => {
                    // Any induced norm bounds the spectral radius.
                    let r = (0..n).map(|i| matrix.row(i).abs().sum()).fold(0.0_f64, f64::max);
                    if r > 0.0 {
                        (-1.0 / r, 1.0 / r)
                    } else {
                        (f64::NEG_INFINITY, f64::INFINITY)
                    }
                }
            }
        };

        Ok(Self { base, matrix, row_normalized: normalize, spectrum, rho_interval })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn base(&self) -> &AdjacencyMatrix {
        &self.base
    }

    /// The weights actually used, `W`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_row_normalized(&self) -> bool {
        self.row_normalized
    }

    /// Open interval of admissible `rho`.
    pub fn rho_interval(&self) -> (f64, f64) {
        self.rho_interval
    }

    pub fn contains_rho(&self, rho: f64) -> bool {
        let (lo, hi) = self.rho_interval;
        rho > lo && rho < hi
    }

    /// Real eigenvalues of `W`, ascending.
    pub fn spectrum(&self) -> Result<&[f64]> {
        match &self.spectrum {
            Ok(ev) => Ok(ev),
            Err(im) => Err(Error::ComplexSpectrum(*im)),
        }
    }

    pub fn lag(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.matrix * y
    }

    fn check_rho(&self, rho: f64) -> Result<()> {
        if self.contains_rho(rho) {
            Ok(())
        } else {
            let (lo, hi) = self.rho_interval;
            Err(Error::RhoOutOfRange { rho, lo, hi })
        }
    }

    /// `log|I - rho W|`, from the cached spectrum when available and an LU
    /// factorization otherwise.
    pub fn log_det_factor(&self, rho: f64) -> Result<f64> {
        self.check_rho(rho)?;
        match &self.spectrum {
            Ok(ev) => log_det_from_spectrum(ev, rho),
            Err(_) => self.log_det_lu(rho),
        }
    }

    pub fn log_det_spectrum(&self, rho: f64) -> Result<f64> {
        self.check_rho(rho)?;
        log_det_from_spectrum(self.spectrum()?, rho)
    }

    /// `log|det(I - rho W)|` accumulated from the LU pivots.
    pub fn log_det_lu(&self, rho: f64) -> Result<f64> {
        self.check_rho(rho)?;
        let n = self.n();
        let a = DMatrix::identity(n, n) - &self.matrix * rho;
        let lu = a.lu();
        let u = lu.u();
        let mut acc = 0.0;
        for i in 0..n {
            let d = u[(i, i)].abs();
            if d == 0.0 {
                return Err(Error::Singular(format!("I - rho W at rho = {rho}")));
            }
            acc += libm::log(d);
        }
        Ok(acc)
    }

    /// `d/drho log|I - rho W|`.
    pub fn log_det_derivative(&self, rho: f64) -> Result<f64> {
        self.check_rho(rho)?;
        match &self.spectrum {
            Ok(ev) => Ok(-ev.iter().map(|w| w / (1.0 - rho * w)).sum::<f64>()),
            Err(_) => {
                let h = crate::diff::fd_step(rho);
                let f = |r: f64| self.log_det_factor(r);
                Ok((f(rho + h)? - f(rho - h)?) / (2.0 * h))
            }
        }
    }

    /// `d^2/drho^2 log|I - rho W| = -tr((W (I - rho W)^{-1})^2)`.
    pub fn log_det_second_derivative(&self, rho: f64) -> Result<f64> {
        self.check_rho(rho)?;
        match &self.spectrum {
            Ok(ev) => Ok(-ev
                .iter()
                .map(|w| {
                    let t = w / (1.0 - rho * w);
                    t * t
                })
                .sum::<f64>()),
            Err(_) => {
                let n = self.n();
                let a = DMatrix::identity(n, n) - &self.matrix * rho;
                let z = crate::linalg::solve(&a, &self.matrix)?;
                Ok(-(&z * &z).trace())
            }
        }
    }
}

fn log_det_from_spectrum(ev: &[f64], rho: f64) -> Result<f64> {
    let mut acc = 0.0;
    for w in ev {
        let t = 1.0 - rho * w;
        if t <= 0.0 {
            return Err(Error::Singular(format!("1 - rho * {w} <= 0 at rho = {rho}")));
        }
        acc += libm::log(t);
    }
    Ok(acc)
}

fn interval_from_spectrum(ev: &[f64]) -> (f64, f64) {
    let lo = match ev.first() {
        Some(&w) if w < 0.0 => 1.0 / w,
        _ => f64::NEG_INFINITY,
    };
    let hi = match ev.last() {
        Some(&w) if w > 0.0 => 1.0 / w,
        _ => f64::INFINITY,
    };
    (lo, hi)
}

fn general_real_spectrum(m: &DMatrix<f64>) -> core::result::Result<Vec<f64>, f64> {
    // A diagonal shift leaves the eigenvectors alone but breaks the
    // symmetric pairing (such as +1 and -1) that stalls the QR iteration.
    let n = m.nrows();
    let ev = SCHUR_SHIFTS
        .iter()
        .find_map(|&c| {
            let shifted = m + DMatrix::identity(n, n) * c;
            let s = shifted.try_schur(SCHUR_EPS, SCHUR_MAX_ITER)?;
            Some(s.complex_eigenvalues().map(|z| z - c))
        })
        .ok_or(f64::NAN)?;
    let worst = ev.iter().fold(0.0_f64, |a, z| a.max(z.im.abs()));
    if worst > IMAG_TOL {
        return Err(worst);
    }
    let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
    re.sort_by(f64::total_cmp);
    Ok(re)
}

//! File formats, report writers and the Monte-Carlo driver around
//! `slmfic-core`.

pub mod io;
pub mod report;
pub mod sim;

use serde::{Deserialize, Serialize};
use slmfic_core::{Error, FocusSpec};

/// Focus functions by their command-line names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FocusName {
    /// Conditional mean at one unit.
    Mean,
    /// Largest eigenvalue of the inverse information.
    Maxvar,
    /// Regression coefficients.
    Beta,
    /// Log-determinant, variance and coefficients.
    Spill,
}

impl FocusName {
    pub fn spec(self, location: usize, coeffs: Option<Vec<usize>>) -> FocusSpec {
        match self {
            FocusName::Mean => FocusSpec::conditional_mean(location),
            FocusName::Maxvar => FocusSpec::max_eigen(),
            FocusName::Beta => FocusSpec::beta_coeffs(coeffs),
            FocusName::Spill => FocusSpec::spillover(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FocusName::Mean => "mean",
            FocusName::Maxvar => "maxvar",
            FocusName::Beta => "beta",
            FocusName::Spill => "spill",
        }
    }
}

/// Whether a core error reflects a numerical failure rather than bad input.
pub fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::ComplexSpectrum(_)
            | Error::RhoOutOfRange { .. }
            | Error::Singular(_)
            | Error::DegenerateVariance(_)
            | Error::Convergence { .. }
            | Error::SingularInformation(_)
            | Error::Stencil(_)
            | Error::BandwidthTooSmall(_)
    )
}

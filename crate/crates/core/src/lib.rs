//! Gaussian spatial lag models fitted by concentrated maximum likelihood, with
//! focused variable selection (FIC) and its spatially averaged variant (sAFIC).
//!
//! The crate is `no_std` with `alloc`; the `std` feature (on by default) only
//! switches the linear-algebra backend to the platform math library. File
//! formats, the CLI and the Monte-Carlo driver live in the `slmfic` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub use nalgebra;

mod error;
mod linalg;

pub mod diagnostics;
pub mod diff;
pub mod fic;
pub mod focus;
pub mod optimize;
pub mod safic;
pub mod slm;
pub mod submodel;
pub mod weights;

pub use error::{Error, Result};
pub use fic::{FicReport, ScoreRow};
pub use focus::{FocusEval, FocusKind, FocusSpec};
pub use safic::{PsiWeights, RhoBetaBlocks, SaficReport};
pub use slm::{Dataset, FisherInfo, FitResult, Theta};
pub use submodel::SubmodelId;
pub use weights::{AdjacencyMatrix, SpatialWeights};

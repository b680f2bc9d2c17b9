//! Candidate covariate subsets and their selector matrices.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Largest covariate count for an exhaustive sweep.
pub const MAX_SWEEP_COVARIATES: usize = 20;

/// Subset of the `p` covariates, stored as a bit mask (bit `j` = covariate `j`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubmodelId {
    mask: u64,
    p: usize,
}

impl SubmodelId {
    pub fn new(mask: u64, p: usize) -> Result<Self> {
        if p > 64 || (p < 64 && mask >> p != 0) {
            return Err(Error::InvalidSize(alloc::format!("mask {mask:#b} does not fit {p} covariates")));
        }
        Ok(Self { mask, p })
    }

    pub fn from_indices(indices: &[usize], p: usize) -> Result<Self> {
        let mut mask = 0u64;
        for &j in indices {
            if j >= p {
                return Err(Error::InvalidSize(alloc::format!("covariate index {j} >= {p}")));
            }
            mask |= 1 << j;
        }
        Self::new(mask, p)
    }

    pub fn narrow(p: usize) -> Self {
        Self { mask: 0, p }
    }

    pub fn wide(p: usize) -> Self {
        let mask = if p >= 64 { u64::MAX } else { (1u64 << p) - 1 };
        Self { mask, p }
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn is_wide(&self) -> bool {
        self.len() == self.p
    }

    pub fn contains(&self, j: usize) -> bool {
        j < self.p && self.mask >> j & 1 == 1
    }

    /// Selected covariate indices, ascending.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| self.contains(j)).collect()
    }

    /// Position of covariate `j` inside the submodel's coefficient vector.
    pub fn position(&self, j: usize) -> Option<usize> {
        self.contains(j).then(|| (self.mask & ((1u64 << j) - 1)).count_ones() as usize)
    }

    /// `|S| x p` selector matrix `Pi_S`.
    pub fn projection_matrix(&self) -> DMatrix<f64> {
        let idx = self.indices();
        let mut m = DMatrix::zeros(idx.len(), self.p);
        for (r, &j) in idx.iter().enumerate() {
            m[(r, j)] = 1.0;
        }
        m
    }
}

impl fmt::Display for SubmodelId {
    /// One-based label counting the narrow model as `S1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.mask as u128 + 1)
    }
}

/// All `2^p` subsets in ascending mask order, narrow first and wide last.
pub fn enumerate_submodels(p: usize) -> Result<Vec<SubmodelId>> {
    if p > MAX_SWEEP_COVARIATES {
        return Err(Error::SweepTooLarge { p });
    }
    Ok((0..1u64 << p).map(|mask| SubmodelId { mask, p }).collect())
}

pub fn projection_matrix(s: &SubmodelId) -> DMatrix<f64> {
    s.projection_matrix()
}

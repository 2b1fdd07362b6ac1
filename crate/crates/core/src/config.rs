//! Numerical tolerances and global knobs.
//!
//! Canonical-form computations are discontinuous in the data, so every rank
//! and zero decision goes through an explicit, user-overridable tolerance.
//! With `exact = true` those decisions run in arbitrary-precision rational
//! arithmetic instead (every f64 input is converted losslessly), which makes
//! the verdicts tolerance-free on integer or small-rational data.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Relative rank threshold: singular values (or pivots) below
    /// `tol_rank * scale` are treated as zero.
    pub tol_rank: f64,
    /// Relative threshold for block zero-tests on canonical forms.
    pub tol_block: f64,
    /// Relative reconstruction tolerance for canonical-form certificates.
    pub tol_reconstruct: f64,
    /// Run all rank/zero decisions in exact rational arithmetic.
    pub exact: bool,
    /// Sample budget when probing a matrix subspace for an invertible element.
    pub centralizer_samples: u32,
    /// Seed for the deterministic randomized searches.
    pub search_seed: u64,
    /// Condition-number cap above which transforms are flagged ill-conditioned.
    pub cond_cap: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tol_rank: 1e-9,
            tol_block: 1e-8,
            tol_reconstruct: 1e-8,
            exact: false,
            centralizer_samples: 32,
            search_seed: 0x5eed_cafe,
            cond_cap: 1e12,
        }
    }
}

impl Config {
    pub fn exact() -> Self {
        Config {
            exact: true,
            ..Config::default()
        }
    }
}

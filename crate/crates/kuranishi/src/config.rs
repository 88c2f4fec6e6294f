//! Numerical tolerances shared by every stage.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative singular-value cutoff for numerical rank.
    pub tau_rank: f64,
    /// Equality tolerance for sampled identities.
    pub tau_eq: f64,
    /// Matching radius for identifications in the realization cloud.
    pub tau_id: f64,
    /// Minimal accepted σ_min of the linearization at a zero.
    pub tau_transv: f64,
    /// Residual bound for implicit-function chart fits.
    pub tau_fit: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tau_rank: 1e-8, tau_eq: 1e-9, tau_id: 1e-7, tau_transv: 1e-6, tau_fit: 1e-10 }
    }
}

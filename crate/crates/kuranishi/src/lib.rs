//! Finite-dimensional Kuranishi atlases with trivial isotropy as data.
//!
//! The stages are structural validation ([`validators`]), tame shrinking
//! and reduction ([`refine`]), adapted perturbation ([`perturb`]) and the
//! signed zero count ([`vfc`]). [`generator`] builds additive atlases from
//! global problems and carries an independent degree oracle; [`pipeline`]
//! runs the stages end to end.

pub mod atlas;
pub mod config;
pub mod domain;
pub mod error;
pub mod fixtures;
pub mod generator;
pub mod linalg;
pub mod perturb;
pub mod pipeline;
pub mod poly;
pub mod realization;
pub mod refine;
pub mod report;
pub mod sampling;
pub mod smooth;
pub mod validators;
pub mod vfc;
pub mod zeros;

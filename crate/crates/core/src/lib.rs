//! Two-stage estimation for latent-variable models with simulation-based
//! bias correction.
//!
//! The pipeline: fit measurement (nuisance) parameters piecewise, compute
//! factor scores, estimate structural (focal) parameters from the scores,
//! then remove the scoring bias by solving the fixed-point equation of the
//! estimator's expectation surface with a projected Robbins-Monro recursion.
//! Standard errors come from a sandwich of a parametric-bootstrap covariance
//! and a simultaneous-perturbation Jacobian, all driven by a shared
//! counter-based random number scheme so every run replays exactly.

pub mod acm;
pub mod dga;
pub mod error;
pub mod harness;
pub mod model;
pub mod params;
pub mod rm;
pub mod rng;
pub mod stage1;
pub mod stage2;
pub mod study;

pub use error::{Error, Result};

// matrix types appear in public signatures, so re-export the crate
pub use nalgebra;

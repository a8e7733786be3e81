//! Parameter estimation from one-bit measurements `y = sign((H + E)^T w + n)`
//! where the sensing matrix carries a Gaussian perturbation `E`.
//!
//! The likelihood is non-convex in `w` but becomes a convex probit problem
//! after the change of variables `v = w / sigma_z`. [`estimator`] solves it,
//! [`crlb`] gives the Cramér-Rao bound, [`probability`] the chance that the
//! `w`-space likelihood has an interior optimum, and [`experiments`] runs
//! the Monte Carlo studies that tie them together.

// Negated comparisons are how parameter checks reject NaN; reference
// constants keep every published digit.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod crlb;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod likelihood;
pub mod model;
pub mod numerics;
pub mod probability;

pub use crlb::{fim_and_crlb, scalar_crlb, scalar_crlb_chernoff, FisherReport, GapBounds};
pub use error::{Error, Result};
pub use estimator::{ml_estimate, perturbation_ignored_estimate, EstimateReport, EstimateStatus, SolverOptions};
pub use experiments::{
    run_experiment, CrlbScan, CrlbScanRow, ExperimentConfig, ExperimentKind, ExperimentOutput,
    MseCurvePoint, ProbabilityRow, TrueParameter,
};
pub use likelihood::VParameter;
pub use model::{PerturbedSignModel, RngSeed, SignVector, SimulationMode};
pub use numerics::DenseMatrix;
pub use probability::UnimodalityQuery;

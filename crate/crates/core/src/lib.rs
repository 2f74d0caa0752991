//! Iterative hard thresholding for regression under overlapping group
//! sparsity and sparse overlapping group constraints.
//!
//! - [`groups`]: group layouts, group supports and small-instance oracles.
//! - [`project`]: greedy, exact and SoG projections.
//! - [`objective`]: least squares, gradient checks, spectrum diagnostics.
//! - [`solver`]: the IHT loop with optional full corrections.
//! - [`synth`]: synthetic recovery instances.

pub mod error;
pub mod groups;
pub mod objective;
pub mod project;
pub mod rng;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use groups::{GroupLayout, GroupSupport, MaxSupportEstimate};
pub use objective::{RegressionProblem, RestrictedSpectrumEstimate, SmoothObjective};
pub use project::{ProjectionOutcome, Projector, SogBudget};
pub use solver::{iht_solve, IhtConfig, IhtTrace, StepRule};
pub use synth::{Covariance, SynthInstance, SynthSpec};

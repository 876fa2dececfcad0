//! Decision-aware conformal prediction sets for robust optimization.
//!
//! The library builds polyhedral uncertainty sets from a learnable max-affine
//! nonconformity score, calibrates their radius by split conformal prediction,
//! and solves the induced robust decision problem. Set geometry can be learned
//! either exactly at small scale (column-and-constraint generation over a
//! structured template family) or by a stochastic pinball-subgradient method,
//! with a re-calibration step on an independent split restoring finite-sample
//! coverage after learning.
//!
//! Module map:
//! - [`geometry`]: polytope primitives (boundedness, vertices, volume, containment)
//! - [`conformal`]: max-affine scores, conformal radius, set construction, coverage
//! - [`solver`]: dense primal simplex and branch-and-bound over binaries
//! - [`robust`]: inner adversarial maximization and outer robust decisions
//! - [`pinball`]: stochastic pinball-subgradient set learning
//! - [`ccg`]: exact set learning by column-and-constraint generation
//! - [`data`]: synthetic generator, ridge predictor, CSV ingestion, splits
//! - [`pipeline`]: two-stage procedure, baselines, metrics, experiment runner
//! - [`validation`]: cross-cutting oracle checks wired into one target

pub mod ccg;
pub mod conformal;
pub mod data;
pub mod geometry;
pub mod pinball;
pub mod pipeline;
pub mod robust;
pub mod solver;
pub mod validation;

pub(crate) mod vecops;

pub use conformal::{CalibratedSet, SetParams};
pub use geometry::{Halfspaces, Polytope};
pub use robust::{FeasibleRegion, Objective};
pub use solver::{LinearProgram, MixedIntegerProgram, SolveResult};

//! Numerical laboratory for distribution-dependent SDEs driven by
//! G-Brownian motion.
//!
//! The crate is organised bottom-up:
//!
//! - [`sublinear`]: sublinear distributions as finite families of discrete
//!   measures, `F(φ) = max_P mean_P(φ)`.
//! - [`metric`]: the Lipschitz-dual distance `d₁` and its relatives, computed
//!   exactly by linear programming, with a brute-force vertex oracle.
//! - [`gprocess`]: volatility uncertainty, the function `G`, and simulation of
//!   G-Brownian paths over a finite control grid.
//! - [`integral`]: discrete stochastic integrals and an inequality harness.
//! - [`solver`]: Euler scheme for the frozen equation and the Picard iteration
//!   on distribution processes.
//! - [`validation`]: a-priori estimate constants and diagnostic reports.

pub mod error;
pub mod gprocess;
pub mod grid;
pub mod integral;
pub mod lp;
pub mod metric;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod sublinear;
pub mod validation;

pub use error::{Error, Result};
pub use gprocess::{ControlGrid, ControlPolicy, PathEnsemble, VolatilityUncertainty};
pub use grid::TimeGrid;
pub use metric::MetricResult;
pub use solver::{Coefficients, ConvergenceTrace, PicardOptions, PicardOutcome};
pub use stats::{Estimate, ScenarioValues};
pub use sublinear::{
    DistributionProcess, EmpiricalSublinearDistribution, TestFunction, WeightedMeasure,
};

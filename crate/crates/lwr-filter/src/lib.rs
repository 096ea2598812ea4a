//! Traffic density estimation on a homogeneous road segment.
//!
//! The crate combines a Godunov finite-volume solver for the LWR
//! conservation law with a fully adapted particle filter that learns the
//! triangular fundamental-diagram parameters online from sparse, noisy
//! loop-detector readings.
//!
//! Start with the runnable examples:
//!
//! - `shock_wave` — Riemann problem against the Rankine-Hugoniot speed
//! - `mixture_of_shock_speeds` — Monte Carlo shock-speed mixture
//! - `calibration_run` — joint state/parameter filtering on synthetic data
//! - `capacity_drop` — learning a capacity drop through an accident window
//! - `model_comparison` — sequential Bayes factor between two diagrams
//! - `csv_ingestion` — loop-detector CSV to observation frames
//!
//! The `lwr-filter` binary exposes the same capabilities as subcommands
//! (`simulate`, `filter`, `experiment mixture`, `compare-models`).

pub mod cli;
pub mod filter;
pub mod fundamental_diagram;
pub mod godunov;
pub mod kde;
pub mod scenarios;

pub use fundamental_diagram::{FdError, FundamentalDiagram};
pub use godunov::{
    BoundarySeries, CflPolicy, CflReport, DensityState, PiecewiseConstant, RoadGrid, SolverError,
    check_cfl, evolve, step, total_vehicles,
};

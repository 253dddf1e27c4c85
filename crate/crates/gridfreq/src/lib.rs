//! Deterministic simulator and controller library for multi-area grid
//! frequency regulation.
//!
//! The plant is a network of swing-equation areas coupled by tie lines.
//! The controller has two layers: a projected-gradient reference generator
//! that steers generation toward the cheapest feasible dispatch, and a
//! per-area barrier-based corrector that clamps the applied power so the
//! frequency stays inside a configured safe band (and inside capacity)
//! during transients. Runtime monitors record safety margins, capacity
//! margins, barrier residuals and an energy function so that every claimed
//! property is checkable on the produced trajectory.

pub mod control;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod plant;
pub mod projection;
pub mod scenarios;
pub mod sim;

pub mod cli;

pub use model::{AreaParams, LoadProfile, ParameterSchedule, ScenarioConfig, ValidationReport};
pub use sim::{Metrics, SimOutput, Simulator, Trajectory, TrajectoryRecord};

//! Simulation and weighted-sum multi-objective MPC for series hybrid
//! electric vehicles.
//!
//! The crate is organised bottom-up:
//!
//! * [`powertrain`]: longitudinal dynamics, power split, engine fuel map and
//!   the equivalent-circuit battery.
//! * [`cycle`]: drive cycles and position/velocity references.
//! * [`nlp`]: a dense SQP solver used for every MPC step.
//! * [`mompc`]: horizon transcription, cost terms, the receding-horizon
//!   controller and weight sweeps.
//! * [`sim`]: the closed-loop harness, metrics and trace replay.
//! * [`config`]: JSON run configuration.

pub mod config;
pub mod cycle;
pub mod error;
pub mod mompc;
pub mod nlp;
pub mod powertrain;
pub mod sim;

pub use error::{Error, Result};

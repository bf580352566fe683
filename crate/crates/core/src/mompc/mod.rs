//! Weighted-sum multi-objective receding-horizon controller.

mod config;
mod controller;
pub mod cost;
mod ocp;
mod pareto;

pub use config::{MompcConfig, PUBLISHED_WEIGHTS};
pub use controller::{solve_ocp, solve_step, Controller, DecisionVector, OcpSolution, SolverDiagnostics};
pub use ocp::{build_ocp, CostBreakdown, Ocp, Prediction};
pub use pareto::{mark_dominated, pareto_sweep, simplex_grid, ParetoPoint};

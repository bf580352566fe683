use serde::{Deserialize, Serialize};

use super::config::MompcConfig;
use super::ocp::{build_ocp, CostBreakdown, Ocp, Prediction};
use crate::cycle::ReferencePoint;
use crate::error::Result;
use crate::nlp::{solve_nlp, NlpProblem, SolveStatus};
use crate::powertrain::{PowertrainParams, VehicleState};

/// Force and battery-power sequences over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub force: Vec<f64>,
    pub battery_power: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub constraint_violation_max: f64,
    pub warm_started: bool,
    /// The solver reported infeasibility and the first stage was replaced by
    /// the fallback control.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub decision: DecisionVector,
    pub predicted: Prediction,
    pub cost_total: f64,
    pub cost_motion: f64,
    pub cost_fuel: f64,
    pub cost_battery: f64,
    /// Slack and friction-brake penalty included in `cost_total`.
    pub cost_penalty: f64,
    pub diagnostics: SolverDiagnostics,
    /// Scaled decision vector, kept for warm starts.
    pub raw: Vec<f64>,
}

impl OcpSolution {
    fn from_decision(ocp: &Ocp, raw: Vec<f64>, diagnostics: SolverDiagnostics) -> Self {
        let predicted = ocp.predict(&raw);
        let CostBreakdown {
            motion,
            fuel,
            battery,
            penalty,
            total,
        } = ocp.costs(&predicted);
        Self {
            decision: DecisionVector {
                force: predicted.force.clone(),
                battery_power: predicted.battery_power.clone(),
            },
            predicted,
            cost_total: total,
            cost_motion: motion,
            cost_fuel: fuel,
            cost_battery: battery,
            cost_penalty: penalty,
            diagnostics,
            raw,
        }
    }

    /// First-stage control `(F_d(0), P_b(0))`.
    pub fn first_control(&self) -> (f64, f64) {
        (self.decision.force[0], self.decision.battery_power[0])
    }
}

/// Previous plan moved one stage forward, last stage repeated.
fn shifted(prev: &[f64], horizon_prev: usize, horizon: usize) -> Vec<f64> {
    let blocks = prev.len() / horizon_prev;
    let mut z = Vec::with_capacity(blocks * horizon);
    for b in 0..blocks {
        let block = &prev[b * horizon_prev..(b + 1) * horizon_prev];
        for k in 0..horizon {
            z.push(block[(k + 1).min(horizon_prev - 1)]);
        }
    }
    z
}

/// Solves one receding-horizon step.
///
/// `warm` is the solution from the previous step; its plan is shifted one
/// stage and used as the starting point. When the solver declares the
/// problem infeasible the first stage is replaced by a fallback: the
/// previous plan's next force, with the battery covering the resulting
/// electrical demand as far as its power box allows.
pub fn solve_step(
    state: VehicleState,
    soc: f64,
    window: &[ReferencePoint],
    cfg: &MompcConfig,
    params: &PowertrainParams,
    warm: Option<&OcpSolution>,
) -> Result<OcpSolution> {
    let ocp = build_ocp(state, soc, window, cfg, params)?;
    solve_ocp(&ocp, warm)
}

pub fn solve_ocp(ocp: &Ocp, warm: Option<&OcpSolution>) -> Result<OcpSolution> {
    let n = ocp.horizon();
    let (mut z0, warm_started) = match warm {
        Some(prev) if !prev.raw.is_empty() => {
            let n_prev = prev.decision.force.len();
            (shifted(&prev.raw, n_prev, n), true)
        }
        _ => (ocp.initial_guess(), false),
    };
    ocp.repair(&mut z0);

    let sol = solve_nlp(ocp, &z0, &ocp.cfg.solver_options())?;
    let mut diagnostics = SolverDiagnostics {
        status: sol.status,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        constraint_violation_max: sol.constraint_violation_max,
        warm_started,
        fallback: false,
    };
    let mut raw = sol.x_star;
    match sol.status {
        SolveStatus::Converged => {}
        SolveStatus::MaxIter => log::debug!("horizon solve hit the iteration limit (kkt {:.3e})", sol.kkt_residual),
        SolveStatus::Infeasible => {
            log::warn!("horizon problem infeasible, applying fallback control");
            diagnostics.fallback = true;
            let cfg = &ocp.cfg;
            let p = &ocp.params;
            let force = warm
                .and_then(|w| w.decision.force.get(1).copied())
                .unwrap_or(0.0)
                .clamp(p.vehicle.force_min, p.vehicle.force_max);
            let (pb_lo, pb_hi) = p.battery.power_bounds();
            let demand = force * ocp.initial_state.velocity / p.engine.motor_efficiency;
            raw[0] = force / cfg.force_norm;
            raw[n] = demand.clamp(pb_lo, pb_hi) / cfg.pb_norm;
            ocp.repair(&mut raw);
        }
    }
    debug_assert_eq!(raw.len(), ocp.dim());
    Ok(OcpSolution::from_decision(ocp, raw, diagnostics))
}

/// Receding-horizon controller that carries its warm start between calls.
#[derive(Debug, Clone)]
pub struct Controller {
    pub cfg: MompcConfig,
    pub params: PowertrainParams,
    previous: Option<OcpSolution>,
}

impl Controller {
    pub fn new(cfg: MompcConfig, params: PowertrainParams) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        Ok(Self {
            cfg,
            params,
            previous: None,
        })
    }

    pub fn step(&mut self, state: VehicleState, soc: f64, window: &[ReferencePoint]) -> Result<&OcpSolution> {
        let sol = solve_step(state, soc, window, &self.cfg, &self.params, self.previous.as_ref())?;
        Ok(self.previous.insert(sol))
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }
}

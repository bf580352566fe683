//! Closed-loop simulation of the controller against the vehicle model.

mod metrics;
mod plant;
mod trace;

use serde::{Deserialize, Serialize};

use crate::cycle::{reference_trajectory, resample, DriveCycle};
use crate::error::{Error, Result};
use crate::mompc::{Controller, MompcConfig, ParetoPoint};
use crate::powertrain::{PowertrainParams, VehicleState};

pub use metrics::{compute_metrics, realized_costs, RealizedCosts, SimMetrics};
pub use plant::{admissible_battery_power, plant_step, project_control, PlantStep};
pub use trace::{replay_check, replay_mismatch, SimLog, SimRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConditions {
    pub s: f64,
    pub v: f64,
    pub soc: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            s: 0.0,
            v: 0.0,
            soc: 0.66,
        }
    }
}

impl InitialConditions {
    pub fn state(&self) -> VehicleState {
        VehicleState::new(self.s, self.v)
    }
}

/// Runs the controller over the whole cycle with the plant equal to the
/// prediction model.
pub fn run_closed_loop(
    cycle: &DriveCycle,
    cfg: &MompcConfig,
    params: &PowertrainParams,
    initial: InitialConditions,
) -> Result<SimLog> {
    run_closed_loop_with_plant(cycle, cfg, params, params, initial)
}

/// Same as [`run_closed_loop`] but the applied controls act on `plant`,
/// which may differ from the controller's model.
pub fn run_closed_loop_with_plant(
    cycle: &DriveCycle,
    cfg: &MompcConfig,
    model: &PowertrainParams,
    plant: &PowertrainParams,
    initial: InitialConditions,
) -> Result<SimLog> {
    plant.validate()?;
    let dt = cfg.dt;
    let reference = if cycle.is_on_grid(dt) {
        reference_trajectory(cycle, dt)?
    } else {
        reference_trajectory(&resample(cycle, dt)?, dt)?
    };
    let mut controller = Controller::new(*cfg, *model)?;
    let mut state = initial.state();
    let mut soc = initial.soc;
    let mut records = Vec::with_capacity(reference.len());

    for k in 0..reference.len() {
        let window = reference.preview(k, cfg.horizon);
        let sol = controller
            .step(state, soc, &window)
            .map_err(|e| Error::SolverAbort(format!("step {k}: {e}")))?;
        let (f_plan, pb_plan) = sol.first_control();
        let (force, battery_power) = project_control(state, soc, f_plan, pb_plan, dt, plant);
        let step = plant_step(state, soc, force, battery_power, dt, plant)
            .map_err(|e| Error::SolverAbort(format!("step {k}: applied control rejected: {e}")))?;
        records.push(SimRecord {
            t: k as f64 * dt,
            s: state.position,
            s_ref: window[0].position,
            v: state.velocity,
            v_ref: window[0].velocity,
            force: step.force,
            requested_power: step.requested_power,
            battery_power: step.battery_power,
            engine_power: step.engine_power,
            current: step.current,
            soc,
            mdot_f: step.fuel_rate,
            cost_total: sol.cost_total,
            cost_motion: sol.cost_motion,
            cost_fuel: sol.cost_fuel,
            cost_battery: sol.cost_battery,
            solver_iters: sol.diagnostics.iterations,
            kkt_residual: sol.diagnostics.kkt_residual,
            fallback_flag: sol.diagnostics.fallback as u8,
            friction_power: step.friction_power,
        });
        state = step.next_state;
        soc = step.next_soc;
    }
    Ok(SimLog {
        dt,
        records,
        final_state: Some((state, soc)),
    })
}

/// Closed-loop objective pair for the weights in `cfg`: realised motion
/// cost against realised fuel plus battery cost.
pub fn closed_loop_pareto_point(
    cycle: &DriveCycle,
    cfg: &MompcConfig,
    params: &PowertrainParams,
    initial: InitialConditions,
) -> Result<ParetoPoint> {
    let log = run_closed_loop(cycle, cfg, params, initial)?;
    let c = realized_costs(&log, cfg);
    Ok(ParetoPoint::new(cfg.weights, c.motion, c.fuel + c.battery))
}

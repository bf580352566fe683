use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powertrain::{
    battery_current, battery_power_from_current, fuel_rate, step_longitudinal, PowertrainParams, VehicleState,
};

/// Everything the plant does with one applied control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantStep {
    pub next_state: VehicleState,
    pub next_soc: f64,
    /// Wheel force actually delivered, after engine saturation.
    pub force: f64,
    pub battery_power: f64,
    pub engine_power: f64,
    /// Electric machine output at the wheel, `eta_m (P_e + P_b)`.
    pub requested_power: f64,
    pub current: f64,
    pub fuel_rate: f64,
    /// Power dissipated by the friction brakes, never negative.
    pub friction_power: f64,
}

/// Battery-power interval that respects the current box and keeps the SOC
/// inside its box after one step.
pub fn admissible_battery_power(soc: f64, dt: f64, p: &PowertrainParams) -> (f64, f64) {
    let b = &p.battery;
    let i_lo = b.current_min.max((soc - b.soc_max) * b.capacity_c / dt);
    let i_hi = b.current_max.min((soc - b.soc_min) * b.capacity_c / dt);
    let (i_lo, i_hi) = if i_lo <= i_hi {
        (i_lo, i_hi)
    } else if soc > b.soc_max {
        (i_lo.min(b.current_max), i_lo.min(b.current_max))
    } else {
        (i_hi.max(b.current_min), i_hi.max(b.current_min))
    };
    let (pb_lo, pb_hi) = b.power_bounds();
    (
        battery_power_from_current(i_lo, b).max(pb_lo),
        battery_power_from_current(i_hi, b).min(pb_hi),
    )
}

/// Projects a planned control onto what the hardware can apply.
///
/// Force goes into its box. Battery power goes into
/// [`admissible_battery_power`] and, where the box allows, is raised until
/// the engine share no longer exceeds its rating.
pub fn project_control(
    state: VehicleState,
    soc: f64,
    force: f64,
    battery_power: f64,
    dt: f64,
    p: &PowertrainParams,
) -> (f64, f64) {
    let force = force.clamp(p.vehicle.force_min, p.vehicle.force_max);
    let (lo, hi) = admissible_battery_power(soc, dt, p);
    let demand = force * state.velocity / p.engine.motor_efficiency;
    let floor = (demand - p.engine.max_power()).clamp(lo, hi);
    (force, battery_power.clamp(floor, hi))
}

/// Applies `(force, battery_power)` for one step.
///
/// The engine covers whatever the battery does not, between zero and its
/// rated power. Surplus regenerative power goes to the friction brakes; a
/// shortfall reduces the delivered force.
pub fn plant_step(
    state: VehicleState,
    soc: f64,
    force: f64,
    battery_power: f64,
    dt: f64,
    p: &PowertrainParams,
) -> Result<PlantStep> {
    let eta = p.engine.motor_efficiency;
    let pe_max = p.engine.max_power();
    let v = state.velocity;
    let current = battery_current(battery_power, &p.battery)?;

    let mut force = force;
    let mut engine_power = force * v / eta - battery_power;
    if engine_power < 0.0 {
        engine_power = 0.0;
    } else if engine_power > pe_max {
        engine_power = pe_max;
        if v > 0.0 {
            force = eta * (pe_max + battery_power) / v;
        } else {
            return Err(Error::SolverAbort(format!(
                "battery power {battery_power} W asks more than the engine can supply at standstill"
            )));
        }
    }
    let requested_power = eta * (engine_power + battery_power);
    let friction_power = (requested_power - force * v).max(0.0);
    let next_state = step_longitudinal(state, force, dt, &p.vehicle)?;
    Ok(PlantStep {
        next_state,
        next_soc: soc - current * dt / p.battery.capacity_c,
        force,
        battery_power,
        engine_power,
        requested_power,
        current,
        fuel_rate: fuel_rate(engine_power, &p.engine)?,
        friction_power,
    })
}

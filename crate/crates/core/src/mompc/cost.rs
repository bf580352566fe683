//! The three objective terms, evaluated on a predicted trajectory.

use crate::cycle::ReferencePoint;
use crate::error::{Error, Result};
use crate::powertrain::{fuel_increment, EngineParams, VehicleState};

/// Tracking plus control effort over a horizon of `N = forces.len()` stages.
///
/// `states` and `window` hold `N + 1` entries. Force enters normalised by
/// `force_norm`.
pub fn motion_cost(
    states: &[VehicleState],
    forces: &[f64],
    window: &[ReferencePoint],
    tracking_weight: [[f64; 2]; 2],
    force_weight: f64,
    force_norm: f64,
) -> Result<f64> {
    let n = forces.len();
    if states.len() != n + 1 || window.len() != n + 1 {
        return Err(Error::validation(format!(
            "motion cost needs {} states and reference points, got {} and {}",
            n + 1,
            states.len(),
            window.len()
        )));
    }
    let q = tracking_weight;
    let tracking: f64 = states
        .iter()
        .zip(window)
        .map(|(x, r)| {
            let es = x.position - r.position;
            let ev = x.velocity - r.velocity;
            q[0][0] * es * es + (q[0][1] + q[1][0]) * es * ev + q[1][1] * ev * ev
        })
        .sum();
    let effort: f64 = forces
        .iter()
        .map(|f| {
            let u = f / force_norm;
            force_weight * u * u
        })
        .sum();
    Ok(tracking + effort)
}

/// Sum of `R * dm_f(k)^2` for `k = 0..=N`; the terminal stage reuses the
/// last engine power since only `N` control stages exist.
pub fn fuel_cost(engine_power: &[f64], fuel_weight: f64, dt: f64, eng: &EngineParams) -> Result<f64> {
    let Some(&last) = engine_power.last() else {
        return Err(Error::validation("fuel cost needs at least one stage"));
    };
    let mut total = 0.0;
    for &p in engine_power.iter().chain(std::iter::once(&last)) {
        let dm = fuel_increment(p, dt, eng)?;
        total += fuel_weight * dm * dm;
    }
    Ok(total)
}

pub fn battery_cost(soc: &[f64], soc_ref: f64, soc_weight: f64) -> f64 {
    soc.iter()
        .map(|s| {
            let e = s - soc_ref;
            soc_weight * e * e
        })
        .sum()
}

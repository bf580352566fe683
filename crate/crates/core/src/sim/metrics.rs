use serde::{Deserialize, Serialize};

use super::trace::SimLog;
use crate::error::{Error, Result};
use crate::mompc::MompcConfig;
use crate::powertrain::BatteryParams;

const VIOLATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub steps: usize,
    pub total_fuel_g: f64,
    pub velocity_rmse: f64,
    pub position_rmse: f64,
    pub velocity_error_max: f64,
    pub soc_final: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub current_min: f64,
    pub current_max: f64,
    pub violation_count: usize,
    pub mean_solve_iterations: f64,
    pub fallback_count: usize,
    pub power_balance_max: f64,
}

pub fn compute_metrics(log: &SimLog, battery: &BatteryParams, motor_efficiency: f64) -> Result<SimMetrics> {
    if log.is_empty() {
        return Err(Error::validation("cannot summarise an empty log"));
    }
    let n = log.len() as f64;
    let recs = &log.records;
    let mut soc_min = f64::INFINITY;
    let mut soc_max = f64::NEG_INFINITY;
    let mut current_min = f64::INFINITY;
    let mut current_max = f64::NEG_INFINITY;
    let mut violation_count = 0;
    let socs = recs.iter().skip(1).map(|r| r.soc).chain(log.final_soc());
    for (r, soc_after) in recs.iter().zip(socs) {
        soc_min = soc_min.min(r.soc).min(soc_after);
        soc_max = soc_max.max(r.soc).max(soc_after);
        current_min = current_min.min(r.current);
        current_max = current_max.max(r.current);
        let bad_current =
            r.current > battery.current_max + VIOLATION_TOL || r.current < battery.current_min - VIOLATION_TOL;
        let bad_soc = soc_after > battery.soc_max + VIOLATION_TOL || soc_after < battery.soc_min - VIOLATION_TOL;
        if bad_current || bad_soc {
            violation_count += 1;
        }
    }
    let rms = |f: &dyn Fn(&super::SimRecord) -> f64| (recs.iter().map(|r| f(r).powi(2)).sum::<f64>() / n).sqrt();
    Ok(SimMetrics {
        steps: recs.len(),
        total_fuel_g: recs.iter().map(|r| r.mdot_f * log.dt).sum(),
        velocity_rmse: rms(&|r| r.v - r.v_ref),
        position_rmse: rms(&|r| r.s - r.s_ref),
        velocity_error_max: recs.iter().map(|r| (r.v - r.v_ref).abs()).fold(0.0, f64::max),
        soc_final: log.final_soc().unwrap_or(f64::NAN),
        soc_min,
        soc_max,
        current_min,
        current_max,
        violation_count,
        mean_solve_iterations: recs.iter().map(|r| r.solver_iters as f64).sum::<f64>() / n,
        fallback_count: recs.iter().filter(|r| r.fallback_flag != 0).count(),
        power_balance_max: recs
            .iter()
            .map(|r| (r.requested_power - motor_efficiency * (r.engine_power + r.battery_power)).abs())
            .fold(0.0, f64::max),
    })
}

/// Unweighted objective terms accumulated along the applied trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedCosts {
    pub motion: f64,
    pub fuel: f64,
    pub battery: f64,
}

/// Stage costs of the controller evaluated on what actually happened, one
/// stage per record.
pub fn realized_costs(log: &SimLog, cfg: &MompcConfig) -> RealizedCosts {
    let q = cfg.tracking_weight;
    let mut out = RealizedCosts {
        motion: 0.0,
        fuel: 0.0,
        battery: 0.0,
    };
    for r in &log.records {
        let es = r.s - r.s_ref;
        let ev = r.v - r.v_ref;
        let u = r.force / cfg.force_norm;
        out.motion += q[0][0] * es * es + (q[0][1] + q[1][0]) * es * ev + q[1][1] * ev * ev + cfg.force_weight * u * u;
        let dm = r.mdot_f * log.dt;
        out.fuel += cfg.fuel_weight * dm * dm;
        let e = r.soc - cfg.soc_ref;
        out.battery += cfg.soc_weight * e * e;
    }
    out
}

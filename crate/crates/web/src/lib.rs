//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string; the page does its own drawing.

use serde::Serialize;
use shev_mompc::cycle::DriveCycle;
use shev_mompc::mompc::{mark_dominated, simplex_grid, MompcConfig};
use shev_mompc::powertrain::{battery_current, PowertrainParams};
use shev_mompc::sim::{closed_loop_pareto_point, compute_metrics, run_closed_loop, InitialConditions, SimMetrics};
use wasm_bindgen::prelude::*;

fn cycle_by_name(name: &str) -> Result<DriveCycle, String> {
    match name {
        "udds" => Ok(DriveCycle::udds()),
        "pulse" => Ok(DriveCycle::synthetic_pulse()),
        other => Err(format!("unknown cycle {other:?}, expected \"udds\" or \"pulse\"")),
    }
}

#[derive(Serialize)]
struct Trace {
    t: Vec<f64>,
    v: Vec<f64>,
    v_ref: Vec<f64>,
    soc: Vec<f64>,
    battery_power: Vec<f64>,
    engine_power: Vec<f64>,
    current: Vec<f64>,
    metrics: SimMetrics,
}

/// Closed-loop run with the given (unnormalised) weights.
pub fn simulate_json(cycle: &str, w_motion: f64, w_fuel: f64, w_battery: f64) -> Result<String, String> {
    let cycle = cycle_by_name(cycle)?;
    let params = PowertrainParams::default();
    let cfg = MompcConfig::default()
        .with_weights([w_motion, w_fuel, w_battery])
        .map_err(|e| e.to_string())?;
    let log = run_closed_loop(&cycle, &cfg, &params, InitialConditions::default()).map_err(|e| e.to_string())?;
    let metrics = compute_metrics(&log, &params.battery, params.engine.motor_efficiency).map_err(|e| e.to_string())?;
    let r = &log.records;
    let trace = Trace {
        t: r.iter().map(|x| x.t).collect(),
        v: r.iter().map(|x| x.v).collect(),
        v_ref: r.iter().map(|x| x.v_ref).collect(),
        soc: r.iter().map(|x| x.soc).collect(),
        battery_power: r.iter().map(|x| x.battery_power).collect(),
        engine_power: r.iter().map(|x| x.engine_power).collect(),
        current: r.iter().map(|x| x.current).collect(),
        metrics,
    };
    serde_json::to_string(&trace).map_err(|e| e.to_string())
}

/// Closed-loop weight sweep over `grid` simplex points on the short pulse.
pub fn pareto_json(grid: usize) -> Result<String, String> {
    let cycle = DriveCycle::synthetic_pulse();
    let params = PowertrainParams::default();
    let mut points = Vec::new();
    for w in simplex_grid(grid).map_err(|e| e.to_string())? {
        let cfg = MompcConfig::default().with_weights(w).map_err(|e| e.to_string())?;
        points.push(
            closed_loop_pareto_point(&cycle, &cfg, &params, InitialConditions::default()).map_err(|e| e.to_string())?,
        );
    }
    mark_dominated(&mut points);
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    power: Vec<f64>,
    current: Vec<f64>,
    power_min: f64,
    power_max: f64,
}

/// Terminal current over the admissible battery-power range.
pub fn battery_curve_json(points: usize) -> Result<String, String> {
    if points < 2 {
        return Err("need at least two points".into());
    }
    let b = PowertrainParams::default().battery;
    let (lo, hi) = b.power_bounds();
    let power: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let current = power
        .iter()
        .map(|&p| battery_current(p, &b))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&Curve {
        power,
        current,
        power_min: lo,
        power_max: hi,
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(cycle: &str, w_motion: f64, w_fuel: f64, w_battery: f64) -> Result<String, JsValue> {
    simulate_json(cycle, w_motion, w_fuel, w_battery).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn pareto(grid: usize) -> Result<String, JsValue> {
    pareto_json(grid).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn battery_curve(points: usize) -> Result<String, JsValue> {
    battery_curve_json(points).map_err(|e| JsValue::from_str(&e))
}

//! Plant equations of the series hybrid powertrain.
//!
//! Everything here is a pure function of its arguments. Units are SI unless a
//! field says otherwise: the fuel coefficients are per kW of engine power and
//! battery capacity is carried in coulombs.
//!
//! Sign conventions: battery power and current are positive on discharge.
//! Engine power is never negative; braking energy that the battery cannot
//! absorb goes to the friction brake.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub const GRAVITY: f64 = 9.81;
const AH_TO_COULOMB: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Kept for reference; the traction input is already a wheel force, so
    /// the dynamics do not scale by it.
    pub driveline_efficiency: f64,
    /// m, unused by the force-based dynamics.
    pub tire_radius: f64,
    /// Aerodynamic coefficient such that drag = `aero_coeff * v^2` (kg/m).
    pub aero_coeff: f64,
    pub rolling_resistance: f64,
    pub gravity: f64,
    /// Road slope in radians.
    pub grade: f64,
    pub force_min: f64,
    pub force_max: f64,
    pub v_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1405.0,
            driveline_efficiency: 0.96,
            tire_radius: 0.3050,
            aero_coeff: 0.5063,
            rolling_resistance: 0.01,
            gravity: GRAVITY,
            grade: 0.0,
            force_min: -3000.0,
            force_max: 3000.0,
            v_max: 40.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mass,
            self.driveline_efficiency,
            self.tire_radius,
            self.aero_coeff,
            self.rolling_resistance,
            self.gravity,
            self.grade,
            self.force_min,
            self.force_max,
            self.v_max,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("vehicle parameters must be finite"));
        }
        if self.mass <= 0.0 {
            return Err(Error::validation("vehicle mass must be positive"));
        }
        if !(self.driveline_efficiency > 0.0 && self.driveline_efficiency <= 1.0) {
            return Err(Error::validation("driveline efficiency must lie in (0, 1]"));
        }
        if self.aero_coeff < 0.0 || self.rolling_resistance < 0.0 {
            return Err(Error::validation("aero and rolling coefficients must be non-negative"));
        }
        if !(self.force_min < 0.0 && 0.0 < self.force_max) {
            return Err(Error::validation("force bounds must satisfy F_min < 0 < F_max"));
        }
        if self.v_max <= 0.0 {
            return Err(Error::validation("v_max must be positive"));
        }
        Ok(())
    }

    /// Gravity plus rolling resistance, applied only while the vehicle moves.
    pub(crate) fn resistive_static(&self) -> f64 {
        self.mass * self.gravity * self.rolling_resistance * self.grade.cos()
    }

    pub(crate) fn grade_force(&self) -> f64 {
        self.mass * self.gravity * self.grade.sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// m
    pub position: f64,
    /// m/s
    pub velocity: f64,
}

impl VehicleState {
    pub fn new(position: f64, velocity: f64) -> Self {
        Self { position, velocity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryParams {
    pub open_circuit_voltage: f64,
    pub resistance: f64,
    /// Capacity in coulombs (23.4 Ah = 84 240 C).
    pub capacity_c: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub current_min: f64,
    pub current_max: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            open_circuit_voltage: 220.64,
            resistance: 0.3757,
            capacity_c: 23.4 * AH_TO_COULOMB,
            soc_min: 0.3,
            soc_max: 0.8,
            current_min: -90.0,
            current_max: 90.0,
        }
    }
}

impl BatteryParams {
    pub fn capacity_from_ah(ah: f64) -> f64 {
        ah * AH_TO_COULOMB
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.open_circuit_voltage,
            self.resistance,
            self.capacity_c,
            self.soc_min,
            self.soc_max,
            self.current_min,
            self.current_max,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("battery parameters must be finite"));
        }
        if self.open_circuit_voltage <= 0.0 || self.resistance <= 0.0 || self.capacity_c <= 0.0 {
            return Err(Error::validation(
                "battery voltage, resistance and capacity must be positive",
            ));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::validation("SOC limits must satisfy 0 <= soc_min < soc_max <= 1"));
        }
        if !(self.current_min < 0.0 && 0.0 < self.current_max) {
            return Err(Error::validation("current limits must satisfy I_min < 0 < I_max"));
        }
        Ok(())
    }

    /// Largest power the equivalent circuit can deliver, `V_oc^2 / (4 R_b)`.
    pub fn max_discharge_power(&self) -> f64 {
        self.open_circuit_voltage * self.open_circuit_voltage / (4.0 * self.resistance)
    }

    fn domain_margin(&self) -> f64 {
        1e-9 * self.max_discharge_power()
    }

    /// Battery power box implied by the current limits.
    pub fn power_bounds(&self) -> (f64, f64) {
        let lo = battery_power_from_current(self.current_min, self);
        let hi =
            battery_power_from_current(self.current_max, self).min(self.max_discharge_power() - self.domain_margin());
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineParams {
    /// rad/s
    pub speed_min: f64,
    pub speed_max: f64,
    /// N·m
    pub torque_min: f64,
    pub torque_max: f64,
    pub motor_efficiency: f64,
    /// g/(s·kW)
    pub fuel_alpha: f64,
    /// g/s
    pub fuel_beta: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            speed_min: 0.0,
            speed_max: 105.0,
            torque_min: 0.0,
            torque_max: 112.0,
            motor_efficiency: 0.96,
            fuel_alpha: 0.0614,
            fuel_beta: 0.0583,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.speed_min,
            self.speed_max,
            self.torque_min,
            self.torque_max,
            self.motor_efficiency,
            self.fuel_alpha,
            self.fuel_beta,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("engine parameters must be finite"));
        }
        if !(0.0 <= self.speed_min && self.speed_min < self.speed_max) {
            return Err(Error::validation("engine speed limits must satisfy 0 <= min < max"));
        }
        if !(0.0 <= self.torque_min && self.torque_min < self.torque_max) {
            return Err(Error::validation("engine torque limits must satisfy 0 <= min < max"));
        }
        if !(self.motor_efficiency > 0.0 && self.motor_efficiency <= 1.0) {
            return Err(Error::validation("motor efficiency must lie in (0, 1]"));
        }
        if self.fuel_alpha <= 0.0 || self.fuel_beta < 0.0 {
            return Err(Error::validation("fuel coefficients need alpha > 0 and beta >= 0"));
        }
        Ok(())
    }

    /// Engine power at the corner of the speed/torque envelope.
    pub fn max_power(&self) -> f64 {
        self.speed_max * self.torque_max
    }
}

/// The three parameter groups the plant and the controller share.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowertrainParams {
    pub vehicle: VehicleParams,
    pub battery: BatteryParams,
    pub engine: EngineParams,
}

impl PowertrainParams {
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.battery.validate()?;
        self.engine.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub engine_speed: f64,
    pub engine_torque: f64,
    pub engine_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelSample {
    /// W
    pub engine_power: f64,
    /// g/s
    pub fuel_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelFit {
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
}

/// Acceleration and its partials with respect to velocity and force.
///
/// At standstill the resistive terms vanish and only forward motion is
/// possible. The force partial is zero only when the net force strictly
/// cannot move the vehicle; on the boundary the moving branch is used.
pub(crate) fn acceleration_parts(velocity: f64, force: f64, p: &VehicleParams) -> (f64, f64, f64) {
    let m = p.mass;
    if velocity > 0.0 {
        let a = (force - p.aero_coeff * velocity * velocity - p.resistive_static() - p.grade_force()) / m;
        (a, -2.0 * p.aero_coeff * velocity / m, 1.0 / m)
    } else {
        let push = force - p.grade_force();
        if push >= 0.0 {
            (push / m, 0.0, 1.0 / m)
        } else {
            (0.0, 0.0, 0.0)
        }
    }
}

/// Net longitudinal acceleration for a wheel force `force` (N).
pub fn net_acceleration(state: VehicleState, force: f64, p: &VehicleParams) -> Result<f64> {
    ensure_finite("position", state.position)?;
    ensure_finite("velocity", state.velocity)?;
    ensure_finite("force", force)?;
    Ok(acceleration_parts(state.velocity, force, p).0)
}

/// Velocity update with the clamp to `[0, v_max]`; returns `(v', dv'/dv, dv'/dF)`.
pub(crate) fn velocity_step(velocity: f64, force: f64, dt: f64, p: &VehicleParams) -> (f64, f64, f64) {
    let (a, da_dv, da_df) = acceleration_parts(velocity, force, p);
    let raw = velocity + dt * a;
    if raw < 0.0 {
        (0.0, 0.0, 0.0)
    } else if raw >= p.v_max {
        (p.v_max, 0.0, 0.0)
    } else {
        (raw, 1.0 + dt * da_dv, dt * da_df)
    }
}

/// One forward-Euler step of the longitudinal dynamics.
///
/// Position advances with the pre-step velocity.
pub fn step_longitudinal(state: VehicleState, force: f64, dt: f64, p: &VehicleParams) -> Result<VehicleState> {
    ensure_finite("position", state.position)?;
    ensure_finite("velocity", state.velocity)?;
    ensure_finite("force", force)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation(format!("time step must be positive, got {dt}")));
    }
    let (v_next, _, _) = velocity_step(state.velocity, force, dt, p);
    Ok(VehicleState {
        position: state.position + dt * state.velocity,
        velocity: v_next,
    })
}

pub fn wheel_power(force: f64, velocity: f64) -> f64 {
    force * velocity
}

/// Engine share of a power request: `P_r / eta_m - P_b`. No bound checks.
pub fn engine_power_from_split(requested: f64, battery: f64, eng: &EngineParams) -> f64 {
    requested / eng.motor_efficiency - battery
}

/// Closed-form terminal current for battery power `power` (W).
pub fn battery_current(power: f64, b: &BatteryParams) -> Result<f64> {
    ensure_finite("battery power", power)?;
    let limit = b.max_discharge_power();
    if power > limit - b.domain_margin() {
        return Err(Error::Domain { power, limit });
    }
    Ok(current_unchecked(power, b))
}

/// `(V - sqrt(V^2 - 4RP)) / 2R` rewritten to avoid cancellation near zero.
#[inline]
pub(crate) fn current_unchecked(power: f64, b: &BatteryParams) -> f64 {
    let v = b.open_circuit_voltage;
    let root = (v * v - 4.0 * b.resistance * power).max(0.0).sqrt();
    2.0 * power / (v + root)
}

/// dI/dP = 1 / sqrt(V^2 - 4RP)
#[inline]
pub(crate) fn current_slope(power: f64, b: &BatteryParams) -> f64 {
    let v = b.open_circuit_voltage;
    1.0 / (v * v - 4.0 * b.resistance * power).max(f64::MIN_POSITIVE).sqrt()
}

pub fn battery_power_from_current(current: f64, b: &BatteryParams) -> f64 {
    current * (b.open_circuit_voltage - current * b.resistance)
}

pub fn terminal_voltage(current: f64, b: &BatteryParams) -> f64 {
    b.open_circuit_voltage - current * b.resistance
}

/// Euler step of the SOC. Bounds are not enforced here.
pub fn step_soc(soc: f64, power: f64, dt: f64, b: &BatteryParams) -> Result<f64> {
    ensure_finite("soc", soc)?;
    let current = battery_current(power, b)?;
    Ok(soc - current * dt / b.capacity_c)
}

/// Affine fuel map, grams per second.
pub fn fuel_rate(engine_power: f64, eng: &EngineParams) -> Result<f64> {
    ensure_finite("engine power", engine_power)?;
    if engine_power < 0.0 {
        return Err(Error::Range {
            what: "engine power",
            value: engine_power,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    Ok(eng.fuel_alpha * engine_power / 1000.0 + eng.fuel_beta)
}

pub fn fuel_increment(engine_power: f64, dt: f64, eng: &EngineParams) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation(format!("time step must be positive, got {dt}")));
    }
    Ok(dt * fuel_rate(engine_power, eng)?)
}

/// Efficient-operation line mapping engine power to a speed/torque pair.
///
/// The default runs the engine on its torque ceiling. A measured line can be
/// supplied as `(power W, speed rad/s)` breakpoints; torque follows from
/// `P = w * tau`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum OperatingLine {
    #[default]
    MaxTorque,
    Table(Vec<(f64, f64)>),
}

impl OperatingLine {
    pub fn point(&self, engine_power: f64, eng: &EngineParams) -> Result<OperatingPoint> {
        ensure_finite("engine power", engine_power)?;
        let p_max = eng.max_power();
        if !(0.0..=p_max).contains(&engine_power) {
            return Err(Error::Range {
                what: "engine power",
                value: engine_power,
                min: 0.0,
                max: p_max,
            });
        }
        if engine_power == 0.0 {
            return Ok(OperatingPoint {
                engine_speed: 0.0,
                engine_torque: 0.0,
                engine_power: 0.0,
            });
        }
        let speed = match self {
            OperatingLine::MaxTorque => engine_power / eng.torque_max,
            OperatingLine::Table(points) => interpolate_speed(points, engine_power)?,
        };
        let speed = speed.clamp(eng.speed_min, eng.speed_max);
        let torque = engine_power / speed;
        if torque > eng.torque_max * (1.0 + 1e-12) || torque < eng.torque_min {
            return Err(Error::Range {
                what: "engine torque",
                value: torque,
                min: eng.torque_min,
                max: eng.torque_max,
            });
        }
        Ok(OperatingPoint {
            engine_speed: speed,
            engine_torque: torque.min(eng.torque_max),
            engine_power,
        })
    }
}

fn interpolate_speed(points: &[(f64, f64)], power: f64) -> Result<f64> {
    if points.len() < 2 || points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::validation(
            "operating-line table needs at least two breakpoints with increasing power",
        ));
    }
    let idx = points.partition_point(|&(p, _)| p < power).clamp(1, points.len() - 1);
    let (p0, w0) = points[idx - 1];
    let (p1, w1) = points[idx];
    Ok(w0 + (w1 - w0) * (power - p0) / (p1 - p0))
}

/// Operating point on the maximum-torque line.
pub fn engine_operating_point(engine_power: f64, eng: &EngineParams) -> Result<OperatingPoint> {
    OperatingLine::MaxTorque.point(engine_power, eng)
}

/// Least-squares affine fit of fuel rate (g/s) against engine power in kW.
pub fn fit_fuel_coefficients(samples: &[FuelSample]) -> Result<FuelFit> {
    if samples.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "need at least two samples, got {}",
            samples.len()
        )));
    }
    for s in samples {
        ensure_finite("engine power", s.engine_power)?;
        ensure_finite("fuel rate", s.fuel_rate)?;
    }
    let n = samples.len() as f64;
    let mean_x = samples.iter().map(|s| s.engine_power / 1000.0).sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.fuel_rate).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for s in samples {
        let dx = s.engine_power / 1000.0 - mean_x;
        let dy = s.fuel_rate - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= f64::EPSILON * mean_x.abs().max(1.0) * n {
        return Err(Error::DegenerateData("all samples share the same engine power".into()));
    }
    let alpha = sxy / sxx;
    let beta = mean_y - alpha * mean_x;
    let ss_res: f64 = samples
        .iter()
        .map(|s| {
            let r = s.fuel_rate - (alpha * s.engine_power / 1000.0 + beta);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(FuelFit { alpha, beta, r_squared })
}

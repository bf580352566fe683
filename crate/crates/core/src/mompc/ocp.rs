//! Single-shooting transcription of the weighted-sum horizon problem.
//!
//! Decision vector layout for horizon `N` (all entries scaled):
//!
//! | block            | index        | physical value                     |
//! |------------------|--------------|------------------------------------|
//! | wheel force      | `k`          | `F_d(k) = z * force_norm`          |
//! | battery power    | `N + k`      | `P_b(k) = z * pb_norm`             |
//! | friction brake   | `2N + k`     | wheel power dissipated, `z * pb_norm` |
//! | SOC slack        | `3N + k`     | relaxes the SOC box at stage `k+1` |
//! | engine slack     | `4N + k`     | relaxes `P_e(k) <= P_e_max`, in units of `P_e_max` |
//!
//! States follow from the controls by forward substitution through the plant
//! recursions, so the dynamics never appear as constraints. The battery-power
//! box is the current limit mapped through the monotone current/power
//! relation and stays hard. Engine power at stage `k` is
//! `(F_d(k) v(k) + friction(k)) / eta_m - P_b(k)`, constrained to
//! `[0, P_e_max]`; the lower side is always attainable through the friction
//! variable, the upper side carries a penalised slack.
//!
//! Constraint rows per stage `k` (4 each):
//! `soc(k+1) - soc_max - sigma_soc <= 0`, `soc_min - soc(k+1) - sigma_soc <= 0`,
//! `P_e(k)/P_e_max - 1 - sigma_e <= 0`, `-P_e(k)/P_e_max <= 0`.

use nalgebra::{DMatrix, DVector};

use super::config::MompcConfig;
use crate::cycle::ReferencePoint;
use crate::error::{Error, Result};
use crate::nlp::{Evaluation, NlpProblem};
use crate::powertrain::{current_slope, current_unchecked, velocity_step, PowertrainParams, VehicleState};

pub(crate) const ROWS_PER_STAGE: usize = 4;
const BLOCKS: usize = 5;
/// Scaled force gap below break-away used for parked stationary stages.
const STALL_OFFSET: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub n: usize,
}

impl Layout {
    pub fn dim(self) -> usize {
        BLOCKS * self.n
    }
    pub fn force(self, k: usize) -> usize {
        k
    }
    pub fn battery(self, k: usize) -> usize {
        self.n + k
    }
    pub fn friction(self, k: usize) -> usize {
        2 * self.n + k
    }
    pub fn soc_slack(self, k: usize) -> usize {
        3 * self.n + k
    }
    pub fn engine_slack(self, k: usize) -> usize {
        4 * self.n + k
    }
}

/// Physical trajectory implied by one decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub soc: Vec<f64>,
    pub force: Vec<f64>,
    pub battery_power: Vec<f64>,
    pub friction_power: Vec<f64>,
    /// Wheel power delivered by the electric machine, `F_d v + friction`.
    pub requested_power: Vec<f64>,
    pub engine_power: Vec<f64>,
    pub current: Vec<f64>,
    pub soc_slack: Vec<f64>,
    pub engine_slack: Vec<f64>,
}

/// Unweighted cost terms and the penalty at one decision vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub motion: f64,
    pub fuel: f64,
    pub battery: f64,
    pub penalty: f64,
    pub total: f64,
}

/// Sensitivities of the predicted states with respect to the scaled force
/// and battery-power variables. `dv[k * N + j] = d v(k) / d z_force(j)`.
struct Sensitivities {
    dv: Vec<f64>,
    ds: Vec<f64>,
    /// `d soc(k) / d z_battery(j)` for any `k > j`.
    dsoc: Vec<f64>,
}

/// One horizon problem, ready for [`crate::nlp::solve_nlp`].
#[derive(Debug, Clone)]
pub struct Ocp {
    pub(crate) layout: Layout,
    pub initial_state: VehicleState,
    pub initial_soc: f64,
    pub window: Vec<ReferencePoint>,
    pub cfg: MompcConfig,
    pub params: PowertrainParams,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// Transcribes the horizon problem at `(state, soc)` for a preview window of
/// `horizon + 1` reference points.
pub fn build_ocp(
    state: VehicleState,
    soc: f64,
    window: &[ReferencePoint],
    cfg: &MompcConfig,
    params: &PowertrainParams,
) -> Result<Ocp> {
    cfg.validate()?;
    let n = cfg.horizon;
    if window.len() != n + 1 {
        return Err(Error::validation(format!(
            "preview window must have {} points, got {}",
            n + 1,
            window.len()
        )));
    }
    if !(0.0..=1.0).contains(&soc) {
        return Err(Error::validation(format!("initial SOC {soc} is outside [0, 1]")));
    }
    if !state.position.is_finite() || !state.velocity.is_finite() || state.velocity < 0.0 {
        return Err(Error::validation("initial vehicle state must be finite with v >= 0"));
    }
    let layout = Layout { n };
    let (v, b, e) = (&params.vehicle, &params.battery, &params.engine);
    let (pb_lo, pb_hi) = b.power_bounds();
    let friction_max = (e.motor_efficiency * pb_hi + v.force_min.abs() * v.v_max) / cfg.pb_norm;

    let mut lower = vec![0.0; layout.dim()];
    let mut upper = vec![f64::INFINITY; layout.dim()];
    for k in 0..n {
        lower[layout.force(k)] = v.force_min / cfg.force_norm;
        upper[layout.force(k)] = v.force_max / cfg.force_norm;
        lower[layout.battery(k)] = pb_lo / cfg.pb_norm;
        upper[layout.battery(k)] = pb_hi / cfg.pb_norm;
        upper[layout.friction(k)] = friction_max;
    }
    Ok(Ocp {
        layout,
        initial_state: state,
        initial_soc: soc,
        window: window.to_vec(),
        cfg: *cfg,
        params: *params,
        lower,
        upper,
    })
}

impl Ocp {
    pub fn horizon(&self) -> usize {
        self.layout.n
    }

    fn engine_max(&self) -> f64 {
        self.params.engine.max_power()
    }

    /// Forward substitution of the plant recursions.
    pub fn predict(&self, z: &[f64]) -> Prediction {
        self.predict_inner(z, None)
    }

    fn predict_inner(&self, z: &[f64], mut sens: Option<&mut Sensitivities>) -> Prediction {
        let l = self.layout;
        let n = l.n;
        let cfg = &self.cfg;
        let p = &self.params;
        let dt = cfg.dt;
        let eta = p.engine.motor_efficiency;

        let mut position = Vec::with_capacity(n + 1);
        let mut velocity = Vec::with_capacity(n + 1);
        let mut soc = Vec::with_capacity(n + 1);
        position.push(self.initial_state.position);
        velocity.push(self.initial_state.velocity);
        soc.push(self.initial_soc);

        let force: Vec<f64> = (0..n).map(|k| z[l.force(k)] * cfg.force_norm).collect();
        let battery_power: Vec<f64> = (0..n).map(|k| z[l.battery(k)] * cfg.pb_norm).collect();
        let friction_power: Vec<f64> = (0..n).map(|k| z[l.friction(k)] * cfg.pb_norm).collect();
        let mut requested_power = Vec::with_capacity(n);
        let mut engine_power = Vec::with_capacity(n);
        let mut current = Vec::with_capacity(n);

        if let Some(s) = sens.as_deref_mut() {
            s.dv.iter_mut().for_each(|x| *x = 0.0);
            s.ds.iter_mut().for_each(|x| *x = 0.0);
        }

        for k in 0..n {
            let vk = velocity[k];
            let (v_next, dvdv, dvdf) = velocity_step(vk, force[k], dt, &p.vehicle);
            position.push(position[k] + dt * vk);
            velocity.push(v_next);

            let i_b = current_unchecked(battery_power[k], &p.battery);
            current.push(i_b);
            soc.push(soc[k] - i_b * dt / p.battery.capacity_c);

            let p_r = force[k] * vk + friction_power[k];
            requested_power.push(p_r);
            engine_power.push(p_r / eta - battery_power[k]);

            if let Some(s) = sens.as_deref_mut() {
                for j in 0..n {
                    let (cur, next) = (k * n + j, (k + 1) * n + j);
                    s.ds[next] = s.ds[cur] + dt * s.dv[cur];
                    s.dv[next] = if j < k {
                        dvdv * s.dv[cur]
                    } else if j == k {
                        dvdf * cfg.force_norm
                    } else {
                        0.0
                    };
                }
                s.dsoc[k] = -current_slope(battery_power[k], &p.battery) * cfg.pb_norm * dt / p.battery.capacity_c;
            }
        }

        Prediction {
            position,
            velocity,
            soc,
            force,
            battery_power,
            friction_power,
            requested_power,
            engine_power,
            current,
            soc_slack: (0..n).map(|k| z[l.soc_slack(k)]).collect(),
            engine_slack: (0..n).map(|k| z[l.engine_slack(k)]).collect(),
        }
    }

    fn fuel_mass(&self, engine_power: f64) -> f64 {
        let e = &self.params.engine;
        self.cfg.dt * (e.fuel_alpha * engine_power / 1000.0 + e.fuel_beta)
    }

    /// Cost terms of a prediction. The fuel term uses the affine map directly
    /// so it stays smooth for slightly negative engine power at intermediate
    /// iterates.
    pub fn costs(&self, pred: &Prediction) -> CostBreakdown {
        let cfg = &self.cfg;
        let n = self.layout.n;
        let q = cfg.tracking_weight;
        let mut motion = 0.0;
        for k in 0..=n {
            let es = pred.position[k] - self.window[k].position;
            let ev = pred.velocity[k] - self.window[k].velocity;
            motion += q[0][0] * es * es + (q[0][1] + q[1][0]) * es * ev + q[1][1] * ev * ev;
        }
        for f in &pred.force {
            let u = f / cfg.force_norm;
            motion += cfg.force_weight * u * u;
        }
        let mut fuel = 0.0;
        for k in 0..=n {
            let m = self.fuel_mass(pred.engine_power[k.min(n - 1)]);
            fuel += cfg.fuel_weight * m * m;
        }
        let battery: f64 = pred
            .soc
            .iter()
            .map(|s| cfg.soc_weight * (s - cfg.soc_ref) * (s - cfg.soc_ref))
            .sum();
        let rho = cfg.soft_constraint_penalty;
        let mut penalty = 0.0;
        for k in 0..n {
            penalty += rho * (pred.soc_slack[k].powi(2) + pred.engine_slack[k].powi(2));
            penalty += cfg.friction_penalty * pred.friction_power[k] / cfg.pb_norm;
        }
        let [a1, a2, a3] = cfg.weights;
        CostBreakdown {
            motion,
            fuel,
            battery,
            penalty,
            total: a1 * motion + a2 * fuel + a3 * battery + penalty,
        }
    }

    fn constraint_values(&self, pred: &Prediction, out: &mut [f64]) {
        let b = &self.params.battery;
        let pe_max = self.engine_max();
        for k in 0..self.layout.n {
            let row = ROWS_PER_STAGE * k;
            let soc = pred.soc[k + 1];
            out[row] = soc - b.soc_max - pred.soc_slack[k];
            out[row + 1] = b.soc_min - soc - pred.soc_slack[k];
            out[row + 2] = pred.engine_power[k] / pe_max - 1.0 - pred.engine_slack[k];
            out[row + 3] = -pred.engine_power[k] / pe_max;
        }
    }

    /// Gradient of `P_e(k)` with respect to the decision vector, written
    /// into `out` (which is cleared first).
    fn engine_power_gradient(&self, pred: &Prediction, sens: &Sensitivities, k: usize, out: &mut [f64]) {
        let l = self.layout;
        let n = l.n;
        let cfg = &self.cfg;
        let eta = self.params.engine.motor_efficiency;
        out.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..k {
            out[l.force(j)] = pred.force[k] * sens.dv[k * n + j] / eta;
        }
        out[l.force(k)] = cfg.force_norm * pred.velocity[k] / eta;
        out[l.battery(k)] = -cfg.pb_norm;
        out[l.friction(k)] = cfg.pb_norm / eta;
    }

    fn new_sensitivities(&self) -> Sensitivities {
        let n = self.layout.n;
        Sensitivities {
            dv: vec![0.0; (n + 1) * n],
            ds: vec![0.0; (n + 1) * n],
            dsoc: vec![0.0; n],
        }
    }

    /// Objective gradient, constraint Jacobian and optionally the
    /// Gauss–Newton matrix of the least-squares objective.
    fn derivatives(&self, z: &[f64], gauss_newton: bool) -> (Prediction, Evaluation, Option<DMatrix<f64>>) {
        let l = self.layout;
        let n = l.n;
        let dim = l.dim();
        let cfg = &self.cfg;
        let [a1, a2, a3] = cfg.weights;
        let mut sens = self.new_sensitivities();
        let pred = self.predict_inner(z, Some(&mut sens));
        let costs = self.costs(&pred);

        let mut grad = DVector::zeros(dim);
        let mut hess = gauss_newton.then(|| DMatrix::zeros(dim, dim));

        // motion
        let q = cfg.tracking_weight;
        let q_off = 0.5 * (q[0][1] + q[1][0]);
        for k in 0..=n {
            let es = pred.position[k] - self.window[k].position;
            let ev = pred.velocity[k] - self.window[k].velocity;
            let ws = 2.0 * a1 * (q[0][0] * es + q_off * ev);
            let wv = 2.0 * a1 * (q_off * es + q[1][1] * ev);
            for j in 0..k.min(n) {
                grad[l.force(j)] += ws * sens.ds[k * n + j] + wv * sens.dv[k * n + j];
            }
            if let Some(h) = hess.as_mut() {
                for i in 0..k.min(n) {
                    let (si, vi) = (sens.ds[k * n + i], sens.dv[k * n + i]);
                    for j in 0..k.min(n) {
                        let (sj, vj) = (sens.ds[k * n + j], sens.dv[k * n + j]);
                        h[(i, j)] += 2.0 * a1 * (q[0][0] * si * sj + q_off * (si * vj + vi * sj) + q[1][1] * vi * vj);
                    }
                }
            }
        }
        for k in 0..n {
            let u = z[l.force(k)];
            grad[l.force(k)] += 2.0 * a1 * cfg.force_weight * u;
            if let Some(h) = hess.as_mut() {
                h[(l.force(k), l.force(k))] += 2.0 * a1 * cfg.force_weight;
            }
        }

        // fuel
        let e = &self.params.engine;
        let dm_dpe = cfg.dt * e.fuel_alpha / 1000.0;
        let mut gpe = vec![0.0; dim];
        let mut pe_grads = Vec::with_capacity(n);
        for k in 0..n {
            self.engine_power_gradient(&pred, &sens, k, &mut gpe);
            pe_grads.push(gpe.clone());
        }
        for k in 0..=n {
            let kk = k.min(n - 1);
            let m = self.fuel_mass(pred.engine_power[kk]);
            let coef = 2.0 * a2 * cfg.fuel_weight * m * dm_dpe;
            let g = &pe_grads[kk];
            for (i, gi) in g.iter().enumerate() {
                if *gi != 0.0 {
                    grad[i] += coef * gi;
                }
            }
            if let Some(h) = hess.as_mut() {
                let w = 2.0 * a2 * cfg.fuel_weight * dm_dpe * dm_dpe;
                let nz: Vec<usize> = (0..dim).filter(|&i| g[i] != 0.0).collect();
                for &i in &nz {
                    for &j in &nz {
                        h[(i, j)] += w * g[i] * g[j];
                    }
                }
            }
        }

        // battery
        for k in 1..=n {
            let coef = 2.0 * a3 * cfg.soc_weight * (pred.soc[k] - cfg.soc_ref);
            for j in 0..k {
                grad[l.battery(j)] += coef * sens.dsoc[j];
            }
            if let Some(h) = hess.as_mut() {
                let w = 2.0 * a3 * cfg.soc_weight;
                for i in 0..k {
                    for j in 0..k {
                        h[(l.battery(i), l.battery(j))] += w * sens.dsoc[i] * sens.dsoc[j];
                    }
                }
            }
        }

        // penalties
        let rho = cfg.soft_constraint_penalty;
        for k in 0..n {
            grad[l.soc_slack(k)] += 2.0 * rho * z[l.soc_slack(k)];
            grad[l.engine_slack(k)] += 2.0 * rho * z[l.engine_slack(k)];
            grad[l.friction(k)] += cfg.friction_penalty;
            if let Some(h) = hess.as_mut() {
                h[(l.soc_slack(k), l.soc_slack(k))] += 2.0 * rho;
                h[(l.engine_slack(k), l.engine_slack(k))] += 2.0 * rho;
            }
        }

        // constraints
        let m = ROWS_PER_STAGE * n;
        let mut constraints = DVector::zeros(m);
        self.constraint_values(&pred, constraints.as_mut_slice());
        let mut jac = DMatrix::zeros(m, dim);
        let pe_max = self.engine_max();
        for k in 0..n {
            let row = ROWS_PER_STAGE * k;
            for j in 0..=k {
                jac[(row, l.battery(j))] = sens.dsoc[j];
                jac[(row + 1, l.battery(j))] = -sens.dsoc[j];
            }
            jac[(row, l.soc_slack(k))] = -1.0;
            jac[(row + 1, l.soc_slack(k))] = -1.0;
            for (i, gi) in pe_grads[k].iter().enumerate() {
                if *gi != 0.0 {
                    jac[(row + 2, i)] = gi / pe_max;
                    jac[(row + 3, i)] = -gi / pe_max;
                }
            }
            jac[(row + 2, l.engine_slack(k))] = -1.0;
        }

        let eval = Evaluation {
            objective: costs.total,
            gradient: grad,
            constraints,
            jacobian: jac,
        };
        (pred, eval, hess)
    }

    /// Gradient of the objective and Jacobian of the constraints, exposed for
    /// derivative audits.
    pub fn analytic_derivatives(&self, z: &[f64]) -> Evaluation {
        self.derivatives(z, false).1
    }

    /// Replaces slack and friction entries by the smallest values that make
    /// every inequality hold for the given force and battery-power entries.
    ///
    /// Forces at a stationary stage that cannot move the vehicle sit where
    /// the motion does not respond to them. Each such force is placed at the
    /// break-away value when the cost gradient there asks for more force,
    /// and just below it otherwise. The trajectory is unchanged either way.
    pub fn repair(&self, z: &mut [f64]) {
        let l = self.layout;
        let n = l.n;
        let cfg = &self.cfg;
        for ((zi, lo), hi) in z.iter_mut().zip(&self.lower).zip(&self.upper) {
            *zi = zi.clamp(*lo, *hi);
        }
        for k in 0..n {
            z[l.friction(k)] = 0.0;
            z[l.soc_slack(k)] = 0.0;
            z[l.engine_slack(k)] = 0.0;
        }
        let breakaway =
            (self.params.vehicle.grade_force() / cfg.force_norm).clamp(self.lower[l.force(0)], self.upper[l.force(0)]);
        let stalled = self.predict(z);
        let idle: Vec<usize> = (0..n)
            .filter(|&k| stalled.velocity[k] == 0.0 && z[l.force(k)] <= breakaway)
            .collect();
        if !idle.is_empty() {
            for &k in &idle {
                z[l.force(k)] = breakaway;
            }
            let grad = self.derivatives(z, false).1.gradient;
            for &k in &idle {
                if grad[l.force(k)] > 0.0 {
                    z[l.force(k)] = (breakaway - STALL_OFFSET).max(self.lower[l.force(k)]);
                }
            }
        }
        let pred = self.predict(z);
        let eta = self.params.engine.motor_efficiency;
        let b = &self.params.battery;
        let pe_max = self.engine_max();
        for k in 0..n {
            let friction = (eta * pred.battery_power[k] - pred.force[k] * pred.velocity[k]).max(0.0);
            z[l.friction(k)] = (friction / cfg.pb_norm).min(self.upper[l.friction(k)]);
            let pe = (pred.force[k] * pred.velocity[k] + friction) / eta - pred.battery_power[k];
            z[l.engine_slack(k)] = (pe / pe_max - 1.0).max(0.0);
            let soc = pred.soc[k + 1];
            z[l.soc_slack(k)] = (soc - b.soc_max).max(b.soc_min - soc).max(0.0);
        }
    }

    /// Cold-start guess: force that follows the reference speed, battery
    /// covering the electrical demand up to its limits, engine making up the
    /// rest.
    pub fn initial_guess(&self) -> Vec<f64> {
        let l = self.layout;
        let n = l.n;
        let cfg = &self.cfg;
        let p = &self.params;
        let eta = p.engine.motor_efficiency;
        let (pb_lo, pb_hi) = p.battery.power_bounds();
        let mut z = vec![0.0; l.dim()];
        let mut v = self.initial_state.velocity;
        for k in 0..n {
            let target = self.window[k + 1].velocity;
            // invert the velocity update assuming motion
            let resist = if v > 0.0 || target > 0.0 {
                p.vehicle.aero_coeff * v * v
                    + p.vehicle.mass * p.vehicle.gravity * p.vehicle.rolling_resistance * p.vehicle.grade.cos()
            } else {
                0.0
            };
            let force = (p.vehicle.mass * (target - v) / cfg.dt
                + resist
                + p.vehicle.mass * p.vehicle.gravity * p.vehicle.grade.sin())
            .clamp(p.vehicle.force_min, p.vehicle.force_max);
            z[l.force(k)] = force / cfg.force_norm;
            let demand = force * v / eta;
            z[l.battery(k)] = demand.clamp(pb_lo, pb_hi) / cfg.pb_norm;
            v = velocity_step(v, force, cfg.dt, &p.vehicle).0;
        }
        self.repair(&mut z);
        z
    }
}

impl NlpProblem for Ocp {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn num_constraints(&self) -> usize {
        ROWS_PER_STAGE * self.layout.n
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, z: &[f64]) -> f64 {
        self.costs(&self.predict(z)).total
    }

    fn gradient(&self, z: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(self.derivatives(z, false).1.gradient.as_slice());
    }

    fn constraints(&self, z: &[f64], out: &mut [f64]) {
        self.constraint_values(&self.predict(z), out);
    }

    fn jacobian(&self, z: &[f64], jac: &mut DMatrix<f64>) {
        jac.copy_from(&self.derivatives(z, false).1.jacobian);
    }

    fn evaluate(&self, z: &[f64]) -> Evaluation {
        self.derivatives(z, false).1
    }

    fn evaluate_values(&self, z: &[f64]) -> (f64, DVector<f64>) {
        let pred = self.predict(z);
        let mut c = DVector::zeros(self.num_constraints());
        self.constraint_values(&pred, c.as_mut_slice());
        (self.costs(&pred).total, c)
    }

    fn hessian_seed(&self, z: &[f64]) -> Option<DMatrix<f64>> {
        let mut h = self.derivatives(z, true).2?;
        let scale = (0..h.nrows()).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1.0);
        for i in 0..h.nrows() {
            h[(i, i)] += 1e-8 * scale;
        }
        Some(h)
    }
}

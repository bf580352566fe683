use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::plant::plant_step;
use crate::error::{Error, Result};
use crate::powertrain::{PowertrainParams, VehicleState};

/// One closed-loop step. States are sampled at the start of the step, the
/// controls are the ones the plant applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub t: f64,
    pub s: f64,
    pub s_ref: f64,
    pub v: f64,
    pub v_ref: f64,
    #[serde(rename = "F_d")]
    pub force: f64,
    #[serde(rename = "P_r")]
    pub requested_power: f64,
    #[serde(rename = "P_b")]
    pub battery_power: f64,
    #[serde(rename = "P_e")]
    pub engine_power: f64,
    #[serde(rename = "I_b")]
    pub current: f64,
    #[serde(rename = "SOC")]
    pub soc: f64,
    pub mdot_f: f64,
    pub cost_total: f64,
    #[serde(rename = "J_m")]
    pub cost_motion: f64,
    #[serde(rename = "J_f")]
    pub cost_fuel: f64,
    #[serde(rename = "J_b")]
    pub cost_battery: f64,
    pub solver_iters: usize,
    pub kkt_residual: f64,
    pub fallback_flag: u8,
    #[serde(rename = "friction_brake_W")]
    pub friction_power: f64,
}

/// Closed-loop trace: one record per cycle sample plus the state reached
/// after the last step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub dt: f64,
    pub records: Vec<SimRecord>,
    pub final_state: Option<(VehicleState, f64)>,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_soc(&self) -> Option<f64> {
        self.final_state
            .map(|(_, soc)| soc)
            .or_else(|| self.records.last().map(|r| r.soc))
    }

    /// Writes the records as CSV with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Validation(e.to_string()))
    }

    /// Reads a trace written by [`SimLog::write_csv`]. The final state is not
    /// part of the CSV, so it comes back as `None`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<SimRecord>, _>>()
            .map_err(csv_error)?;
        let dt = match records.as_slice() {
            [a, b, ..] => b.t - a.t,
            _ => 1.0,
        };
        Ok(Self {
            dt,
            records,
            final_state: None,
        })
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Re-runs the plant on the logged controls and checks every logged
/// quantity against the recomputation.
pub fn replay_check(log: &SimLog, params: &PowertrainParams) -> bool {
    replay_mismatch(log, params).is_none()
}

/// Index and name of the first quantity that fails to replay.
pub fn replay_mismatch(log: &SimLog, params: &PowertrainParams) -> Option<(usize, &'static str)> {
    for (k, r) in log.records.iter().enumerate() {
        let state = VehicleState::new(r.s, r.v);
        let Ok(step) = plant_step(state, r.soc, r.force, r.battery_power, log.dt, params) else {
            return Some((k, "control"));
        };
        let checks = [
            ("F_d", step.force, r.force),
            ("P_r", step.requested_power, r.requested_power),
            ("P_e", step.engine_power, r.engine_power),
            ("I_b", step.current, r.current),
            ("mdot_f", step.fuel_rate, r.mdot_f),
            ("friction_brake_W", step.friction_power, r.friction_power),
        ];
        if let Some((name, _, _)) = checks.iter().find(|(_, a, b)| !close(*a, *b)) {
            return Some((k, name));
        }
        let (next, next_soc) = match log.records.get(k + 1) {
            Some(n) => (VehicleState::new(n.s, n.v), n.soc),
            None => match log.final_state {
                Some(f) => f,
                None => continue,
            },
        };
        let checks = [
            ("s", step.next_state.position, next.position),
            ("v", step.next_state.velocity, next.velocity),
            ("SOC", step.next_soc, next_soc),
        ];
        if let Some((name, _, _)) = checks.iter().find(|(_, a, b)| !close(*a, *b)) {
            return Some((k + 1, name));
        }
    }
    None
}

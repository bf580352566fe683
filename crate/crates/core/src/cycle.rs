//! Drive cycles and the reference trajectories derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed conversion for cycles published in miles per hour.
pub const MPH_TO_MPS: f64 = 0.44704;

const UDDS_CSV: &str = include_str!("../data/udds.csv");
const SYNTHETIC_PULSE_CSV: &str = include_str!("../data/synthetic_pulse.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpeedUnit {
    #[default]
    MetersPerSecond,
    MilesPerHour,
}

impl SpeedUnit {
    fn factor(self) -> f64 {
        match self {
            SpeedUnit::MetersPerSecond => 1.0,
            SpeedUnit::MilesPerHour => MPH_TO_MPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveCycle {
    pub name: String,
    /// `(time s, speed m/s)`, strictly increasing in time from 0.
    samples: Vec<(f64, f64)>,
}

impl DriveCycle {
    pub fn new(name: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self> {
        let cycle = Self {
            name: name.into(),
            samples,
        };
        cycle.validate()?;
        Ok(cycle)
    }

    fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::validation("a drive cycle needs at least two samples"));
        }
        if self.samples[0].0 != 0.0 {
            return Err(Error::validation("drive cycle must start at t = 0"));
        }
        for (i, &(t, v)) in self.samples.iter().enumerate() {
            if !t.is_finite() || !v.is_finite() {
                return Err(Error::validation(format!("non-finite value in sample {i}")));
            }
            if v < 0.0 {
                return Err(Error::validation(format!("negative speed {v} at t = {t}")));
            }
        }
        if let Some(w) = self.samples.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::validation(format!(
                "time is not strictly increasing at t = {}",
                w[1].0
            )));
        }
        Ok(())
    }

    /// Bundled Urban Dynamometer Driving Schedule, 1 Hz, 0..=1369 s.
    pub fn udds() -> Self {
        parse_cycle_named(UDDS_CSV.as_bytes(), "UDDS", SpeedUnit::MetersPerSecond).expect("bundled UDDS file is valid")
    }

    /// 120 s trapezoidal speed pulse (0.8 m/s² ramps to a 12 m/s plateau).
    pub fn synthetic_pulse() -> Self {
        parse_cycle_named(
            SYNTHETIC_PULSE_CSV.as_bytes(),
            "synthetic-pulse",
            SpeedUnit::MetersPerSecond,
        )
        .expect("bundled synthetic file is valid")
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }

    pub fn max_speed(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(0.0, f64::max)
    }

    pub fn speeds(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    /// Checks the speed ceiling of a particular vehicle.
    pub fn check_speed_limit(&self, v_max: f64) -> Result<()> {
        match self.samples.iter().find(|s| s.1 > v_max) {
            Some(&(t, v)) => Err(Error::validation(format!(
                "cycle speed {v} m/s at t = {t} exceeds v_max = {v_max}"
            ))),
            None => Ok(()),
        }
    }

    fn speed_at(&self, t: f64) -> f64 {
        let s = &self.samples;
        let idx = s.partition_point(|&(ts, _)| ts < t);
        if idx == 0 {
            return s[0].1;
        }
        if idx >= s.len() {
            return s[s.len() - 1].1;
        }
        let (t0, v0) = s[idx - 1];
        let (t1, v1) = s[idx];
        if t1 == t {
            return v1;
        }
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// True when the samples sit on `0, dt, 2dt, ...`.
    pub fn is_on_grid(&self, dt: f64) -> bool {
        self.samples
            .iter()
            .enumerate()
            .all(|(k, &(t, _))| (t - k as f64 * dt).abs() <= 1e-9 * dt.max(1.0))
    }
}

/// Parses the `t_s,v_mps` CSV format. With [`SpeedUnit::MilesPerHour`] the
/// second column is converted to m/s.
pub fn parse_cycle(bytes: &[u8], unit: SpeedUnit) -> Result<DriveCycle> {
    parse_cycle_named(bytes, "cycle", unit)
}

pub fn parse_cycle_named(bytes: &[u8], name: &str, unit: SpeedUnit) -> Result<DriveCycle> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 1,
        msg: format!("input is not UTF-8: {e}"),
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim().trim_start_matches('\u{feff}') == "t_s,v_mps" => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `t_s,v_mps`, found `{header}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty input".into(),
            })
        }
    }
    let factor = unit.factor();
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(t), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected two fields, found `{line}`"),
            });
        };
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("`{}`: {e}", s.trim()),
            })
        };
        samples.push((parse(t)?, parse(v)? * factor));
    }
    DriveCycle::new(name, samples)
}

/// Linear interpolation onto `0, dt, ..., T_end`. The final sample is kept
/// even when the duration is not a multiple of `dt`.
pub fn resample(cycle: &DriveCycle, dt: f64) -> Result<DriveCycle> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation(format!("resample step must be positive, got {dt}")));
    }
    let t_end = cycle.duration();
    let steps = (t_end / dt + 1e-9).floor() as usize;
    let mut samples: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            (t, cycle.speed_at(t))
        })
        .collect();
    let last_t = samples.last().map_or(0.0, |s| s.0);
    if t_end - last_t > 1e-9 * dt.max(1.0) {
        samples.push((t_end, cycle.speed_at(t_end)));
    } else if let Some(last) = samples.last_mut() {
        *last = (t_end, cycle.samples[cycle.len() - 1].1);
    }
    DriveCycle::new(cycle.name.clone(), samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub dt: f64,
    pub v_ref: Vec<f64>,
    pub s_ref: Vec<f64>,
}

/// One stage of the reference seen by the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub position: f64,
    pub velocity: f64,
}

/// Position/velocity reference with trapezoidal position integration.
pub fn reference_trajectory(cycle: &DriveCycle, dt: f64) -> Result<ReferenceTrajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation(format!("reference step must be positive, got {dt}")));
    }
    if !cycle.is_on_grid(dt) {
        return Err(Error::validation(format!(
            "cycle `{}` is not sampled on a {dt} s grid; resample it first",
            cycle.name
        )));
    }
    let v_ref: Vec<f64> = cycle.speeds().collect();
    let mut s_ref = Vec::with_capacity(v_ref.len());
    let mut s = 0.0;
    s_ref.push(s);
    for w in v_ref.windows(2) {
        s += dt * (w[0] + w[1]) / 2.0;
        s_ref.push(s);
    }
    Ok(ReferenceTrajectory { dt, v_ref, s_ref })
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.v_ref.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_ref.is_empty()
    }

    pub fn point(&self, k: usize) -> ReferencePoint {
        ReferencePoint {
            position: self.s_ref[k],
            velocity: self.v_ref[k],
        }
    }

    /// Horizon window of `horizon + 1` points starting at `t_index`. Past the
    /// end of the cycle the final speed is held and position keeps advancing
    /// at that speed.
    pub fn preview(&self, t_index: usize, horizon: usize) -> Vec<ReferencePoint> {
        let last = self.len() - 1;
        (t_index..=t_index + horizon)
            .map(|k| {
                if k <= last {
                    self.point(k)
                } else {
                    let v_end = self.v_ref[last];
                    ReferencePoint {
                        position: self.s_ref[last] + (k - last) as f64 * self.dt * v_end,
                        velocity: v_end,
                    }
                }
            })
            .collect()
    }
}

/// Free-function form of [`ReferenceTrajectory::preview`].
pub fn preview(reference: &ReferenceTrajectory, t_index: usize, horizon: usize) -> Vec<ReferencePoint> {
    reference.preview(t_index, horizon)
}

//! JSON run configuration.
//!
//! Every key is optional and falls back to the default vehicle and
//! controller settings; unknown keys are rejected.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mompc::MompcConfig;
use crate::powertrain::{BatteryParams, EngineParams, PowertrainParams, VehicleParams};
use crate::sim::InitialConditions;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub vehicle: VehicleParams,
    pub battery: BatteryParams,
    pub engine: EngineParams,
    pub controller: MompcConfig,
    pub cycle_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub initial: InitialConditions,
}

impl RunConfig {
    /// Parses and validates a configuration. Weights that do not sum to one
    /// are rescaled with a warning.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        if let Some(old) = cfg.controller.normalize_weights()? {
            log::warn!(
                "controller weights summed to {old}; rescaled to {:?}",
                cfg.controller.weights
            );
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn params(&self) -> PowertrainParams {
        PowertrainParams {
            vehicle: self.vehicle,
            battery: self.battery,
            engine: self.engine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        self.controller.validate()?;
        let i = &self.initial;
        if !(i.s.is_finite() && i.v.is_finite()) || i.v < 0.0 || i.v > self.vehicle.v_max {
            return Err(Error::Config(format!(
                "initial state (s = {}, v = {}) is not admissible",
                i.s, i.v
            )));
        }
        if !(self.battery.soc_min..=self.battery.soc_max).contains(&i.soc) {
            return Err(Error::Config(format!(
                "initial SOC {} is outside [{}, {}]",
                i.soc, self.battery.soc_min, self.battery.soc_max
            )));
        }
        Ok(())
    }
}

/// Writes `contents` to a sibling temporary file and renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.initial.soc, 0.66);
        assert_eq!(cfg.controller.horizon, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"vehicle": {"mas": 1200}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"extra": 1}"#).is_err());
    }

    #[test]
    fn nominal_weights_are_rescaled() {
        let cfg = RunConfig::from_json(r#"{"controller": {"weights": [0.33, 0.33, 0.33]}}"#).unwrap();
        let sum: f64 = cfg.controller.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.controller.horizon = 7;
        cfg.initial.soc = 0.55;
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

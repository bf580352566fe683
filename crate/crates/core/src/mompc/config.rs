use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nlp::SqpOptions;

/// Weighted-sum controller settings.
///
/// `force_weight` multiplies the squared force normalised by `force_norm`;
/// `pb_norm` only scales the battery-power decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MompcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Motion, fuel and battery weights. Must sum to one after
    /// [`MompcConfig::normalize_weights`].
    pub weights: [f64; 3],
    /// Tracking weight on `(position error, velocity error)`.
    pub tracking_weight: [[f64; 2]; 2],
    pub force_weight: f64,
    pub fuel_weight: f64,
    pub soc_weight: f64,
    pub soc_ref: f64,
    pub force_norm: f64,
    pub pb_norm: f64,
    /// Quadratic penalty on the SOC and engine-power slacks.
    pub soft_constraint_penalty: f64,
    /// Linear cost per `pb_norm` watts of friction braking.
    pub friction_penalty: f64,
    pub tol_kkt: f64,
    pub tol_feas: f64,
    pub max_iter: usize,
}

/// Nominal weights before renormalisation (they sum to 0.99).
pub const PUBLISHED_WEIGHTS: [f64; 3] = [0.33, 0.33, 0.33];

impl Default for MompcConfig {
    fn default() -> Self {
        let solver = SqpOptions::default();
        Self {
            horizon: 10,
            dt: 1.0,
            weights: renormalized(PUBLISHED_WEIGHTS),
            tracking_weight: [[1.0, 0.0], [0.0, 1.0]],
            force_weight: 1.0,
            fuel_weight: 5.0,
            soc_weight: 300.0,
            soc_ref: 0.5,
            force_norm: 3000.0,
            pb_norm: 10_000.0,
            soft_constraint_penalty: 1e4,
            friction_penalty: 2.0,
            tol_kkt: solver.tol_kkt,
            tol_feas: solver.tol_feas,
            max_iter: solver.max_iter,
        }
    }
}

fn renormalized(w: [f64; 3]) -> [f64; 3] {
    let sum: f64 = w.iter().sum();
    [w[0] / sum, w[1] / sum, w[2] / sum]
}

impl MompcConfig {
    pub fn with_weights(mut self, weights: [f64; 3]) -> Result<Self> {
        self.weights = weights;
        self.normalize_weights()?;
        Ok(self)
    }

    /// Rescales the weights to sum to one. Returns the previous sum when a
    /// rescale happened.
    pub fn normalize_weights(&mut self) -> Result<Option<f64>> {
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!(
                "weights must be finite and non-negative, got {:?}",
                self.weights
            )));
        }
        let sum: f64 = self.weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Config("weights must not all be zero".into()));
        }
        if (sum - 1.0).abs() <= 1e-12 {
            return Ok(None);
        }
        self.weights = renormalized(self.weights);
        Ok(Some(sum))
    }

    pub fn solver_options(&self) -> SqpOptions {
        SqpOptions {
            tol_kkt: self.tol_kkt,
            tol_feas: self.tol_feas,
            max_iter: self.max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.horizon < 1 {
            return bad("horizon must be at least one step".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad(format!("weights must be non-negative, got {:?}", self.weights));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("weights must sum to one, got {sum}"));
        }
        let q = self.tracking_weight;
        if q.iter().flatten().any(|v| !v.is_finite()) || (q[0][1] - q[1][0]).abs() > 1e-12 {
            return bad("tracking weight must be a finite symmetric matrix".into());
        }
        if q[0][0] < 0.0 || q[1][1] < 0.0 || q[0][0] * q[1][1] - q[0][1] * q[1][0] < -1e-12 {
            return bad("tracking weight must be positive semidefinite".into());
        }
        if !(self.force_weight > 0.0 && self.force_weight.is_finite()) {
            return bad("force weight must be positive".into());
        }
        if !(self.fuel_weight >= 0.0 && self.soc_weight >= 0.0) {
            return bad("fuel and SOC weights must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.soc_ref) {
            return bad(format!("soc_ref must lie in [0, 1], got {}", self.soc_ref));
        }
        if !(self.force_norm > 0.0 && self.pb_norm > 0.0) {
            return bad("normalisation constants must be positive".into());
        }
        if !(self.soft_constraint_penalty > 0.0 && self.friction_penalty >= 0.0) {
            return bad("penalty weights must be positive".into());
        }
        if !(self.tol_kkt > 0.0 && self.tol_feas > 0.0) || self.max_iter == 0 {
            return bad("solver tolerances and iteration limit must be positive".into());
        }
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use super::config::MompcConfig;
use super::controller::solve_step;
use crate::cycle::ReferencePoint;
use crate::error::{Error, Result};
use crate::powertrain::{PowertrainParams, VehicleState};

/// One weight triple and the two objectives it produced.
///
/// `motion` is the unweighted motion cost, `energy` the unweighted fuel plus
/// battery cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub weights: [f64; 3],
    pub motion: f64,
    pub energy: f64,
    pub dominated: bool,
}

impl ParetoPoint {
    pub fn new(weights: [f64; 3], motion: f64, energy: f64) -> Self {
        Self {
            weights,
            motion,
            energy,
            dominated: false,
        }
    }

    fn dominates(&self, other: &Self) -> bool {
        self.motion <= other.motion
            && self.energy <= other.energy
            && (self.motion < other.motion || self.energy < other.energy)
    }
}

/// Sets `dominated` on every point that another point strictly improves.
pub fn mark_dominated(points: &mut [ParetoPoint]) {
    let flags: Vec<bool> = points.iter().map(|p| points.iter().any(|q| q.dominates(p))).collect();
    for (p, d) in points.iter_mut().zip(flags) {
        p.dominated = d;
    }
}

/// Removes repeated weight triples, keeping the first occurrence.
fn dedup_weights(weights: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(weights.len());
    for w in weights {
        if !out.iter().any(|o| o == w) {
            out.push(*w);
        }
    }
    out
}

/// Solves the horizon problem once per weight triple from the same initial
/// state and reports the resulting objective pairs.
pub fn pareto_sweep(
    state: VehicleState,
    soc: f64,
    window: &[ReferencePoint],
    base: &MompcConfig,
    params: &PowertrainParams,
    weights: &[[f64; 3]],
) -> Result<Vec<ParetoPoint>> {
    if weights.is_empty() {
        return Err(Error::validation("pareto sweep needs at least one weight triple"));
    }
    let mut points = Vec::new();
    for w in dedup_weights(weights) {
        let cfg = base.with_weights(w)?;
        let sol = solve_step(state, soc, window, &cfg, params, None)?;
        points.push(ParetoPoint::new(
            cfg.weights,
            sol.cost_motion,
            sol.cost_fuel + sol.cost_battery,
        ));
    }
    mark_dominated(&mut points);
    Ok(points)
}

/// `k` weight triples on the probability simplex.
///
/// `k = 1` gives the centroid. Otherwise the smallest uniform lattice with at
/// least `k` nodes is enumerated with the motion weight descending and `k`
/// evenly spaced nodes are taken, so the first triple is always `(1, 0, 0)`
/// and the last `(0, 0, 1)`.
pub fn simplex_grid(k: usize) -> Result<Vec<[f64; 3]>> {
    match k {
        0 => Err(Error::validation("grid size must be at least one")),
        1 => Ok(vec![[1.0 / 3.0; 3]]),
        _ => {
            let mut h = 1usize;
            while (h + 1) * (h + 2) / 2 < k {
                h += 1;
            }
            let mut lattice = Vec::with_capacity((h + 1) * (h + 2) / 2);
            for i in (0..=h).rev() {
                for j in (0..=h - i).rev() {
                    let l = h - i - j;
                    let hf = h as f64;
                    lattice.push([i as f64 / hf, j as f64 / hf, l as f64 / hf]);
                }
            }
            let m = lattice.len();
            Ok((0..k).map(|t| lattice[(t * (m - 1) + (k - 1) / 2) / (k - 1)]).collect())
        }
    }
}

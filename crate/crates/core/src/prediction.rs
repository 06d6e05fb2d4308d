//! Iterative trajectory prediction from mobility-control knowledge.
//!
//! Each iteration advances the estimate by one `step_interval` using the
//! most precise method still available: the steering vector (first step
//! only, since it cannot be predicted itself), then line-of-sight travel
//! toward the current waypoint, and finally extrapolation of the mean
//! velocity over the last `N_e` known or already predicted positions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::mobility::MobilityInfo;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionConfig {
    /// Number of predicted positions (`N_p`).
    pub horizon_steps: usize,
    /// Positions averaged by the extrapolation method (`N_e`).
    pub extrapolation_window: usize,
    /// Time between consecutive predicted positions, seconds.
    pub step_interval: f64,
    /// Whether the steering vector is offered to the predictor.
    pub use_steering: bool,
    /// Whether waypoints are offered to the predictor.
    pub use_waypoints: bool,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 15,
            extrapolation_window: 5,
            step_interval: 0.25,
            use_steering: true,
            use_waypoints: true,
        }
    }
}

impl PredictionConfig {
    pub fn horizon(&self) -> f64 {
        self.horizon_steps as f64 * self.step_interval
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Steering,
    Waypoint,
    Extrapolation,
    /// Nothing to extrapolate from; the position is held.
    Hold,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictedTrajectory {
    pub positions: Vec<(f64, Vec3)>,
    pub methods_used: Vec<Method>,
}

impl PredictedTrajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Last predicted position, if any.
    pub fn endpoint(&self) -> Option<Vec3> {
        self.positions.last().map(|&(_, p)| p)
    }

    /// Debug dump as `time_s,x,y,z,method` CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_s,x,y,z,method\n");
        for (&(t, p), m) in self.positions.iter().zip(&self.methods_used) {
            s.push_str(&format!("{t},{},{},{},{m:?}\n", p.x, p.y, p.z));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PredictionError {
    #[error("extrapolation needs at least two timestamped positions, got {0}")]
    InsufficientHistory(usize),
}

/// One steering step: the commanded displacement per update interval
/// rescaled to `dt`.
pub fn predict_step_steering(p: Vec3, steering: Vec3, dt: f64, update_interval: f64) -> Vec3 {
    p + steering * (dt / update_interval)
}

/// One step along the line of sight to `waypoint` at speed `v`. A waypoint
/// coinciding with `p` has no direction, so the position is held.
pub fn predict_step_waypoint(p: Vec3, waypoint: Vec3, v: f64, dt: f64) -> Vec3 {
    match (waypoint - p).unit() {
        Some(dir) => p + dir * (dt * v),
        None => p,
    }
}

/// One extrapolation step from the mean finite-difference velocity of the
/// most recent `min(window, history.len())` entries.
pub fn predict_step_extrapolation(
    history: &[(f64, Vec3)],
    dt: f64,
    window: usize,
) -> Result<Vec3, PredictionError> {
    let k = window.min(history.len());
    if k < 2 {
        return Err(PredictionError::InsufficientHistory(history.len()));
    }
    let recent = &history[history.len() - k..];
    let velocity_sum: Vec3 = recent
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .sum();
    let current = recent[k - 1].1;
    Ok(current + velocity_sum * (dt / (k - 1) as f64))
}

/// Predicts `horizon_steps` future positions of the agent described by
/// `info`.
pub fn predict_trajectory(info: &MobilityInfo, cfg: &PredictionConfig) -> PredictedTrajectory {
    let n = cfg.horizon_steps;
    let mut out = PredictedTrajectory {
        positions: Vec::with_capacity(n),
        methods_used: Vec::with_capacity(n),
    };
    if n == 0 {
        return out;
    }

    let dt = cfg.step_interval;
    let waypoints: &[Vec3] = if cfg.use_waypoints { &info.waypoints } else { &[] };
    let mut next_wp = 0;

    // Known history followed by our own predictions; only the tail is read.
    let mut track: Vec<(f64, Vec3)> = info.history.clone();
    if track.last().map(|&(t, _)| t) != Some(info.time) {
        track.push((info.time, info.position));
    }

    let mut t = info.time;
    let mut pos = info.position;
    for i in 0..n {
        let (next, method) = match info.steering {
            Some(s) if i == 0 && cfg.use_steering => (
                predict_step_steering(pos, s, dt, info.update_interval),
                Method::Steering,
            ),
            _ => {
                while next_wp < waypoints.len()
                    && pos.distance(waypoints[next_wp]) <= info.waypoint_radius
                {
                    next_wp += 1;
                }
                if let Some(&w) = waypoints.get(next_wp) {
                    (predict_step_waypoint(pos, w, info.velocity_mag, dt), Method::Waypoint)
                } else {
                    match predict_step_extrapolation(&track, dt, cfg.extrapolation_window) {
                        Ok(p) => (p, Method::Extrapolation),
                        Err(_) => (pos, Method::Hold),
                    }
                }
            }
        };
        t += dt;
        pos = next;
        track.push((t, pos));
        out.positions.push((t, pos));
        out.methods_used.push(method);
    }
    out
}

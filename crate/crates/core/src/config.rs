//! Scenario definition: a TOML document whose omitted keys fall back to the
//! reference scenario (10 agents in a 500 x 500 x 250 m area at 50 km/h,
//! alpha 7, prediction width 15, score buffer of 8).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{self, ChannelModel, ChannelParams};
use crate::mobility::{DispersionParams, GnssErrorModel, MissionArea, SwarmParams};
use crate::prediction::PredictionConfig;
use crate::routing::{PredictedDistance, Protocol, Rebroadcast};
use crate::geom::Vec3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {constraint}")]
    Invalid { key: String, constraint: String },
}

fn invalid(key: &str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), constraint: constraint.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MobilityModel {
    RandomWalk,
    ControlledWaypoint,
    Swarm,
    Dispersion,
    /// Agents hold their initial positions.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreaConfig {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for AreaConfig {
    fn default() -> Self {
        Self { x: 500.0, y: 500.0, z: 250.0 }
    }
}

impl AreaConfig {
    pub fn mission_area(&self) -> MissionArea {
        MissionArea::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub model: MobilityModel,
    pub velocity_kmh: f64,
    /// Mobility update interval, seconds.
    pub update_interval: f64,
    /// Waypoint-reached radius, meters.
    pub waypoint_radius: f64,
    /// Fixed start positions, one `[x, y, z]` per agent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_positions: Option<Vec<[f64; 3]>>,
    pub swarm: SwarmParams,
    pub dispersion: DispersionParams,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            model: MobilityModel::ControlledWaypoint,
            velocity_kmh: 50.0,
            update_interval: 0.25,
            waypoint_radius: 10.0,
            initial_positions: None,
            swarm: SwarmParams::default(),
            dispersion: DispersionParams::default(),
        }
    }
}

impl MobilityConfig {
    pub fn velocity_mps(&self) -> f64 {
        self.velocity_kmh / 3.6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingConfig {
    pub alpha: f64,
    pub p_trend_max: f64,
    /// +1 or -1.
    pub trend_sign: i8,
    pub buffer_size: usize,
    /// OGM origination interval, seconds.
    pub ogm_interval: f64,
    /// Update-phase timer, seconds.
    pub update_phase: f64,
    pub ttl: u8,
    pub ogm_size: usize,
    pub predicted_distance: PredictedDistance,
    pub rebroadcast: Rebroadcast,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            alpha: 7.0,
            p_trend_max: 0.1,
            trend_sign: 1,
            buffer_size: 8,
            ogm_interval: 0.5,
            update_phase: 0.5,
            ttl: 10,
            ogm_size: 64,
            predicted_distance: PredictedDistance::Endpoint,
            rebroadcast: Rebroadcast::FirstCopy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Video stream rate, bit/s.
    pub video_bitrate: f64,
    /// Video payload per packet, bytes.
    pub mtu: usize,
    pub telemetry_interval: f64,
    pub telemetry_size: usize,
    /// Video streaming starts here, leaving time for rankings to form.
    pub start_time: f64,
    /// Tumbling window of the PDR series, seconds.
    pub pdr_window: f64,
    /// Fixed video source agent id; drawn per run when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<u32>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            video_bitrate: 2e6,
            mtu: 1460,
            telemetry_interval: 0.25,
            telemetry_size: 1000,
            start_time: 5.0,
            pdr_window: 1.0,
            source: None,
        }
    }
}

impl TrafficConfig {
    pub fn video_interval(&self) -> f64 {
        self.mtu as f64 * 8.0 / self.video_bitrate
    }
}

/// Complete experiment definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub agents: usize,
    /// Simulated time per run, seconds.
    pub duration: f64,
    /// Number of runs (seeds) per configuration.
    pub seeds: usize,
    /// First seed; runs use `base_seed .. base_seed + seeds`.
    pub base_seed: u64,
    pub protocol: Protocol,
    pub area: AreaConfig,
    pub mobility: MobilityConfig,
    pub channel: ChannelParams,
    pub prediction: PredictionConfig,
    pub routing: RoutingConfig,
    pub gnss: GnssErrorModel,
    pub traffic: TrafficConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            agents: 10,
            duration: 300.0,
            seeds: 50,
            base_seed: 1,
            protocol: Protocol::Batmobile,
            area: AreaConfig::default(),
            mobility: MobilityConfig::default(),
            channel: ChannelParams::default(),
            prediction: PredictionConfig::default(),
            routing: RoutingConfig::default(),
            gnss: GnssErrorModel::default(),
            traffic: TrafficConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Reference scenario scaled for a laptop: 200 kbit/s video, 20 seeds.
    pub fn desk_scale() -> Self {
        let mut c = Self::default();
        c.traffic.video_bitrate = 200e3;
        c.seeds = 20;
        c
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.base_seed + i).collect()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Sets a dotted field path (e.g. `prediction.horizon_steps`) from a
    /// JSON value, type-checking and revalidating the result.
    pub fn with_field(&self, path: &str, value: serde_json::Value) -> Result<Self, ConfigError> {
        let mut doc = serde_json::to_value(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut slot = &mut doc;
        for part in path.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| invalid(path, "no such scenario field"))?;
        }
        merge(slot, value);
        let cfg: ScenarioConfig = serde_json::from_value(doc)
            .map_err(|e| invalid(path, format!("type mismatch: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be a finite value > 0, got {v}")))
            }
        }
        fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be a finite value >= 0, got {v}")))
            }
        }

        if self.agents == 0 {
            return Err(invalid("agents", "must be >= 1"));
        }
        non_negative("duration", self.duration)?;
        if self.seeds == 0 {
            return Err(invalid("seeds", "must be >= 1"));
        }
        positive("area.x", self.area.x)?;
        positive("area.y", self.area.y)?;
        positive("area.z", self.area.z)?;

        let m = &self.mobility;
        non_negative("mobility.velocity_kmh", m.velocity_kmh)?;
        positive("mobility.update_interval", m.update_interval)?;
        positive("mobility.waypoint_radius", m.waypoint_radius)?;
        if let Some(ps) = &m.initial_positions {
            if ps.len() != self.agents {
                return Err(invalid(
                    "mobility.initial_positions",
                    format!("needs one entry per agent ({}), got {}", self.agents, ps.len()),
                ));
            }
            let area = self.area.mission_area();
            for p in ps {
                if !area.contains(Vec3::new(p[0], p[1], p[2])) {
                    return Err(invalid("mobility.initial_positions", format!("{p:?} lies outside the area")));
                }
            }
        }
        let s = &m.swarm;
        for (k, w) in [
            ("mobility.swarm.w_explore", s.w_explore),
            ("mobility.swarm.w_avoid", s.w_avoid),
            ("mobility.swarm.w_cohere", s.w_cohere),
        ] {
            non_negative(k, w)?;
        }
        positive("mobility.swarm.avoid_radius", s.avoid_radius)?;
        positive("mobility.swarm.chain_range", s.chain_range)?;
        positive("mobility.swarm.waypoint_timeout", s.waypoint_timeout)?;
        let d = &m.dispersion;
        positive("mobility.dispersion.mesh_spacing", d.mesh_spacing)?;
        non_negative("mobility.dispersion.w_spacing", d.w_spacing)?;
        non_negative("mobility.dispersion.w_explore", d.w_explore)?;
        positive("mobility.dispersion.heading_hold", d.heading_hold)?;

        let c = &self.channel;
        positive("channel.frequency_hz", c.frequency_hz)?;
        positive("channel.path_loss_exponent", c.path_loss_exponent)?;
        if c.model == ChannelModel::Nakagami && c.path_loss_exponent < 2.0 {
            return Err(invalid("channel.path_loss_exponent", "must be >= 2 for the nakagami model"));
        }
        if !(c.nakagami_m >= 0.5) {
            return Err(invalid("channel.nakagami_m", "must be >= 0.5"));
        }
        positive("channel.phy_bitrate", c.phy_bitrate)?;
        channel::max_range(c).map_err(|e| invalid("channel.sensitivity_dbm", e.to_string()))?;

        let p = &self.prediction;
        if p.extrapolation_window < 2 {
            return Err(invalid("prediction.extrapolation_window", "must be >= 2"));
        }
        positive("prediction.step_interval", p.step_interval)?;

        let r = &self.routing;
        if !(r.alpha >= 1.0) {
            return Err(invalid("routing.alpha", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&r.p_trend_max) {
            return Err(invalid("routing.p_trend_max", "must lie in [0, 1)"));
        }
        if r.trend_sign != 1 && r.trend_sign != -1 {
            return Err(invalid("routing.trend_sign", "must be +1 or -1"));
        }
        if r.buffer_size == 0 {
            return Err(invalid("routing.buffer_size", "must be >= 1"));
        }
        positive("routing.ogm_interval", r.ogm_interval)?;
        positive("routing.update_phase", r.update_phase)?;
        if r.ttl == 0 {
            return Err(invalid("routing.ttl", "must be >= 1"));
        }
        if r.ogm_size == 0 {
            return Err(invalid("routing.ogm_size", "must be >= 1"));
        }

        non_negative("gnss.max_error", self.gnss.max_error)?;
        positive("gnss.resample_interval", self.gnss.resample_interval)?;

        let t = &self.traffic;
        positive("traffic.video_bitrate", t.video_bitrate)?;
        if t.mtu == 0 {
            return Err(invalid("traffic.mtu", "must be >= 1"));
        }
        positive("traffic.telemetry_interval", t.telemetry_interval)?;
        if t.telemetry_size == 0 {
            return Err(invalid("traffic.telemetry_size", "must be >= 1"));
        }
        non_negative("traffic.start_time", t.start_time)?;
        positive("traffic.pdr_window", t.pdr_window)?;
        if let Some(src) = t.source {
            if src == 0 || src as usize > self.agents {
                return Err(invalid("traffic.source", format!("must name an agent in 1..={}", self.agents)));
            }
        }
        Ok(())
    }
}

/// Reads and validates a scenario file.
/// Objects merge key by key; anything else replaces.
fn merge(slot: &mut serde_json::Value, value: serde_json::Value) {
    match (slot, value) {
        (serde_json::Value::Object(dst), serde_json::Value::Object(src)) => {
            for (k, v) in src {
                match dst.get_mut(&k) {
                    Some(d) => merge(d, v),
                    None => {
                        dst.insert(k, v);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    ScenarioConfig::from_toml_str(&text)
}

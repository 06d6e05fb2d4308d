//! Ground-truth agent motion and the mobility knowledge exposed to routing.
//!
//! Four motion models are provided. Random walk and controlled waypoint are
//! complete as described; the swarm-exploration and dispersion-mesh models
//! are simplified potential-field stand-ins that keep the structural
//! properties routing cares about (a tethered chain toward the base station,
//! and a dense but restless mesh around it).

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::rng::{self, Stream};
use crate::NodeId;

/// Axis-aligned mission volume `[0, size]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionArea {
    pub size: Vec3,
}

impl MissionArea {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { size: Vec3::new(x, y, z) }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0.0..=self.size.x).contains(&p.x)
            && (0.0..=self.size.y).contains(&p.y)
            && (0.0..=self.size.z).contains(&p.z)
    }

    pub fn clamp(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(0.0, self.size.x),
            p.y.clamp(0.0, self.size.y),
            p.z.clamp(0.0, self.size.z),
        )
    }

    /// Base station location: horizontal center, ground level.
    pub fn base_station(&self) -> Vec3 {
        Vec3::new(self.size.x / 2.0, self.size.y / 2.0, 0.0)
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        Vec3::new(
            rng.random_range(0.0..=self.size.x),
            rng.random_range(0.0..=self.size.y),
            rng.random_range(0.0..=self.size.z),
        )
    }
}

impl Default for MissionArea {
    fn default() -> Self {
        Self::new(500.0, 500.0, 250.0)
    }
}

/// Kinematic context shared by all agents of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionContext {
    pub area: MissionArea,
    /// Mobility update interval in seconds.
    pub update_interval: f64,
    /// Distance at which a waypoint counts as reached, meters.
    pub waypoint_radius: f64,
}

impl Default for MotionContext {
    fn default() -> Self {
        Self {
            area: MissionArea::default(),
            update_interval: 0.25,
            waypoint_radius: 10.0,
        }
    }
}

/// Bounded ring of timestamped positions, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionHistory {
    entries: VecDeque<(f64, Vec3)>,
    capacity: usize,
}

impl PositionHistory {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(2);
        Self { entries: VecDeque::with_capacity(capacity), capacity }
    }

    /// Appends a sample. Samples that do not advance time are ignored so the
    /// timestamps stay strictly increasing.
    pub fn push(&mut self, t: f64, p: Vec3) {
        if let Some(&(last, _)) = self.entries.back() {
            if t <= last {
                return;
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((t, p));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &(f64, Vec3)> {
        self.entries.iter()
    }
}

/// Ground-truth state of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: NodeId,
    pub position: Vec3,
    /// Cruise speed in m/s.
    pub velocity_mag: f64,
    /// Remaining trajectory, head first.
    pub waypoints: VecDeque<Vec3>,
    /// Displacement the mobility controller commands per update interval.
    pub steering: Option<Vec3>,
    pub history: PositionHistory,
    /// Persistent exploration heading of the dispersion model.
    pub heading: Option<Vec3>,
}

impl AgentState {
    pub fn new(id: NodeId, position: Vec3, velocity_mag: f64, history_len: usize) -> Self {
        Self {
            id,
            position,
            velocity_mag,
            waypoints: VecDeque::new(),
            steering: None,
            history: PositionHistory::new(history_len),
            heading: None,
        }
    }

    pub fn with_waypoints(mut self, waypoints: impl IntoIterator<Item = Vec3>) -> Self {
        self.waypoints = waypoints.into_iter().collect();
        self
    }

    /// Records the current position in the history at time `t`.
    pub fn record(&mut self, t: f64) {
        self.history.push(t, self.position);
    }
}

/// Weights and ranges of the swarm-exploration model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmParams {
    pub w_explore: f64,
    pub w_avoid: f64,
    pub w_cohere: f64,
    /// Repulsion acts below this separation, meters.
    pub avoid_radius: f64,
    /// Desired maximum length of a chain link toward the base, meters.
    pub chain_range: f64,
    /// A centroid waypoint is abandoned after this many seconds.
    pub waypoint_timeout: f64,
}

impl Default for SwarmParams {
    fn default() -> Self {
        Self {
            w_explore: 1.0,
            w_avoid: 1.5,
            w_cohere: 1.2,
            avoid_radius: 30.0,
            chain_range: 150.0,
            waypoint_timeout: 40.0,
        }
    }
}

/// Spacing and exploration parameters of the dispersion-mesh model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispersionParams {
    /// Target inter-agent spacing, meters.
    pub mesh_spacing: f64,
    pub w_spacing: f64,
    pub w_explore: f64,
    /// Mean time an exploration heading is kept before redrawing, seconds.
    pub heading_hold: f64,
}

impl Default for DispersionParams {
    fn default() -> Self {
        Self { mesh_spacing: 120.0, w_spacing: 1.0, w_explore: 0.6, heading_hold: 4.0 }
    }
}

fn apply_displacement(state: &mut AgentState, ctx: &MotionContext, steering: Vec3, dt: f64) {
    let cap = state.velocity_mag * ctx.update_interval;
    let steering = steering.clamp_norm(cap);
    let disp = (steering * (dt / ctx.update_interval)).clamp_norm(state.velocity_mag * dt);
    let before = state.position;
    state.position = ctx.area.clamp(before + disp);
    state.steering = Some((state.position - before) * (ctx.update_interval / dt));
}

/// Random walk: a fresh uniformly random direction every call.
///
/// Candidates leaving the mission area are redrawn a few times before the
/// final one is clamped to the boundary.
pub fn step_random_walk<R: Rng + ?Sized>(
    state: &mut AgentState,
    ctx: &MotionContext,
    dt: f64,
    rng: &mut R,
) {
    const REDRAWS: usize = 8;
    let step = state.velocity_mag * dt;
    let mut dir = rng::unit_sphere(rng);
    for _ in 0..REDRAWS {
        if ctx.area.contains(state.position + dir * step) {
            break;
        }
        dir = rng::unit_sphere(rng);
    }
    let before = state.position;
    state.position = ctx.area.clamp(before + dir * step);
    state.steering = Some((state.position - before) * (ctx.update_interval / dt));
}

/// Controlled waypoint: straight line toward the head waypoint at cruise
/// speed; reached waypoints are popped and an empty queue halts the agent.
pub fn step_waypoint(state: &mut AgentState, ctx: &MotionContext, dt: f64) {
    pop_reached(state, ctx.waypoint_radius);
    let before = state.position;
    if let Some(&target) = state.waypoints.front() {
        let to_target = target - before;
        let dist = to_target.norm();
        let travel = (state.velocity_mag * dt).min(dist);
        if let Some(dir) = to_target.unit() {
            state.position = ctx.area.clamp(before + dir * travel);
        }
        pop_reached(state, ctx.waypoint_radius);
    }
    state.steering = Some((state.position - before) * (ctx.update_interval / dt));
}

fn pop_reached(state: &mut AgentState, radius: f64) {
    while let Some(&w) = state.waypoints.front() {
        if state.position.distance(w) <= radius {
            state.waypoints.pop_front();
        } else {
            break;
        }
    }
}

/// Swarm exploration: superposition of a centroid-to-target pull, short
/// range repulsion and a tether to the nearest node that is closer to the
/// base, which strings the swarm out into a chain.
pub fn step_swarm(
    state: &mut AgentState,
    neighbors: &[Vec3],
    base: Vec3,
    target: Option<Vec3>,
    params: &SwarmParams,
    ctx: &MotionContext,
    dt: f64,
) {
    let unit_step = state.velocity_mag * ctx.update_interval;
    let p = state.position;

    let explore = target
        .and_then(|w| {
            let centroid = (neighbors.iter().copied().sum::<Vec3>() + p) / (neighbors.len() + 1) as f64;
            (w - centroid).unit()
        })
        .map_or(Vec3::ZERO, |u| u * unit_step);

    let avoid: Vec3 = neighbors
        .iter()
        .filter_map(|&n| {
            let d = p.distance(n);
            if d < params.avoid_radius {
                (p - n).unit().map(|u| u * ((params.avoid_radius - d) / params.avoid_radius))
            } else {
                None
            }
        })
        .sum::<Vec3>()
        * unit_step;

    let my_base_dist = p.distance(base);
    let anchor = neighbors
        .iter()
        .copied()
        .filter(|n| n.distance(base) < my_base_dist)
        .chain(std::iter::once(base))
        .min_by(|a, b| p.distance(*a).total_cmp(&p.distance(*b)));
    let cohere = anchor
        .and_then(|a| {
            let d = p.distance(a);
            (a - p).unit().map(|u| u * (d / params.chain_range).powi(2).min(1.0))
        })
        .map_or(Vec3::ZERO, |v| v * unit_step);

    let steering = explore * params.w_explore + avoid * params.w_avoid + cohere * params.w_cohere;
    apply_displacement(state, ctx, steering, dt);
}

/// Dispersion mesh: springs toward `mesh_spacing` with every known
/// neighbor plus a slowly changing exploration heading.
pub fn step_dispersion<R: Rng + ?Sized>(
    state: &mut AgentState,
    neighbors: &[Vec3],
    params: &DispersionParams,
    ctx: &MotionContext,
    dt: f64,
    rng: &mut R,
) {
    let unit_step = state.velocity_mag * ctx.update_interval;
    let p = state.position;

    let mut spacing = Vec3::ZERO;
    let mut count = 0usize;
    for &n in neighbors {
        let d = p.distance(n);
        if let Some(u) = (n - p).unit() {
            spacing += u * ((d - params.mesh_spacing) / params.mesh_spacing);
            count += 1;
        }
    }
    if count > 0 {
        spacing = (spacing / count as f64).clamp_norm(1.0) * unit_step;
    }

    let mut explore = Vec3::ZERO;
    if params.w_explore > 0.0 {
        let redraw = match state.heading {
            None => true,
            Some(_) => rng.random::<f64>() < dt / params.heading_hold.max(dt),
        };
        if redraw {
            state.heading = Some(rng::unit_sphere(rng));
        }
        explore = state.heading.unwrap_or(Vec3::ZERO) * unit_step;
    }

    let steering = spacing * params.w_spacing + explore * params.w_explore;
    apply_displacement(state, ctx, steering, dt);
}

/// Bounded GNSS positioning error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnssErrorModel {
    /// Upper bound of the error magnitude, meters.
    pub max_error: f64,
    /// The error vector is redrawn once per interval, seconds.
    pub resample_interval: f64,
}

impl Default for GnssErrorModel {
    fn default() -> Self {
        Self { max_error: 0.0, resample_interval: 0.25 }
    }
}

impl GnssErrorModel {
    /// Error vector for `agent` at time `t`. The magnitude is uniform in
    /// `[0, max_error]`, the direction uniform on the sphere, and the value
    /// is a pure function of `(seed, agent, epoch)`.
    pub fn offset(&self, seed: u64, agent: NodeId, t: f64) -> Vec3 {
        if self.max_error <= 0.0 {
            return Vec3::ZERO;
        }
        // Epoch boundaries are nudged so exact multiples of the interval
        // land in the epoch they start.
        let epoch = (t / self.resample_interval + 1e-9).floor() as i64;
        let mut rng = rng::keyed(seed, Stream::Gnss, &[agent.0 as u64, epoch as u64]);
        let mag = rng.random_range(0.0..=self.max_error);
        rng::unit_sphere(&mut rng) * mag
    }
}

/// Application-layer snapshot of an agent's mobility knowledge.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityInfo {
    pub time: f64,
    /// Reported (possibly GNSS-perturbed) position.
    pub position: Vec3,
    pub steering: Option<Vec3>,
    pub waypoints: Vec<Vec3>,
    pub velocity_mag: f64,
    pub update_interval: f64,
    pub waypoint_radius: f64,
    /// Reported positions, oldest first; the last entry is `(time, position)`.
    pub history: Vec<(f64, Vec3)>,
}

/// Builds the mobility snapshot of `state` at time `now`.
///
/// Ground truth is never modified; every reported position, including the
/// history, is shifted by the error sample of its own timestamp.
pub fn mobility_info(
    state: &AgentState,
    ctx: &MotionContext,
    gnss: &GnssErrorModel,
    seed: u64,
    now: f64,
) -> MobilityInfo {
    let perturb = |t: f64, p: Vec3| p + gnss.offset(seed, state.id, t);
    let position = perturb(now, state.position);
    let mut history: Vec<(f64, Vec3)> = state
        .history
        .iter()
        .filter(|(t, _)| *t < now)
        .map(|&(t, p)| (t, perturb(t, p)))
        .collect();
    history.push((now, position));
    MobilityInfo {
        time: now,
        position,
        steering: state.steering,
        waypoints: state.waypoints.iter().copied().collect(),
        velocity_mag: state.velocity_mag,
        update_interval: ctx.update_interval,
        waypoint_radius: ctx.waypoint_radius,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    fn ctx() -> MotionContext {
        MotionContext {
            area: MissionArea::new(1000.0, 1000.0, 1000.0),
            update_interval: 0.25,
            waypoint_radius: 0.5,
        }
    }

    fn agent(p: Vec3, v: f64) -> AgentState {
        AgentState::new(NodeId(1), p, v, 5)
    }

    #[test]
    fn random_walk_zero_velocity_stays() {
        let mut a = agent(Vec3::new(500.0, 500.0, 500.0), 0.0);
        let mut rng = substream(1, Stream::Mobility);
        step_random_walk(&mut a, &ctx(), 0.25, &mut rng);
        assert_eq!(a.position, Vec3::new(500.0, 500.0, 500.0));
    }

    #[test]
    fn random_walk_moves_exactly_v_dt_in_interior() {
        let mut a = agent(Vec3::new(500.0, 500.0, 500.0), 10.0);
        let mut rng = substream(2, Stream::Mobility);
        step_random_walk(&mut a, &ctx(), 1.0, &mut rng);
        assert!((a.position.distance(Vec3::new(500.0, 500.0, 500.0)) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn random_walk_is_seed_deterministic() {
        let run = || {
            let mut a = agent(Vec3::new(500.0, 500.0, 500.0), 10.0);
            let mut rng = substream(3, Stream::Mobility);
            for _ in 0..50 {
                step_random_walk(&mut a, &ctx(), 0.25, &mut rng);
            }
            a.position
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn random_walk_stays_inside_area() {
        let c = MotionContext { area: MissionArea::new(20.0, 20.0, 20.0), ..ctx() };
        let mut a = agent(Vec3::new(0.0, 0.0, 0.0), 15.0);
        let mut rng = substream(4, Stream::Mobility);
        for _ in 0..500 {
            step_random_walk(&mut a, &c, 0.25, &mut rng);
            assert!(c.area.contains(a.position));
        }
    }

    #[test]
    fn waypoint_straight_line_step() {
        let mut a = agent(Vec3::ZERO, 1.0).with_waypoints([Vec3::new(10.0, 0.0, 0.0)]);
        step_waypoint(&mut a, &ctx(), 1.0);
        assert!((a.position - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn waypoint_reached_is_popped() {
        let w = Vec3::new(0.2, 0.0, 0.0);
        let w2 = Vec3::new(100.0, 0.0, 0.0);
        let mut a = agent(Vec3::ZERO, 1.0).with_waypoints([w, w2]);
        step_waypoint(&mut a, &ctx(), 0.25);
        assert_eq!(a.waypoints, VecDeque::from(vec![w2]));
    }

    #[test]
    fn waypoint_empty_queue_halts() {
        let mut a = agent(Vec3::new(3.0, 4.0, 5.0), 13.0);
        step_waypoint(&mut a, &ctx(), 0.25);
        assert_eq!(a.position, Vec3::new(3.0, 4.0, 5.0));
        assert_eq!(a.steering, Some(Vec3::ZERO));
    }

    #[test]
    fn waypoint_steering_is_scaled_displacement() {
        let mut a = agent(Vec3::ZERO, 2.0).with_waypoints([Vec3::new(100.0, 0.0, 0.0)]);
        step_waypoint(&mut a, &ctx(), 0.5);
        // 1 m executed over 0.5 s -> 0.5 m per 0.25 s update.
        assert!((a.steering.unwrap() - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn swarm_zero_weights_stays() {
        let params = SwarmParams { w_explore: 0.0, w_avoid: 0.0, w_cohere: 0.0, ..Default::default() };
        let start = Vec3::new(10.0, 10.0, 10.0);
        let mut a = agent(start, 10.0);
        step_swarm(&mut a, &[Vec3::new(12.0, 10.0, 10.0)], Vec3::ZERO, Some(Vec3::new(900.0, 0.0, 0.0)), &params, &ctx(), 0.25);
        assert_eq!(a.position, start);
    }

    #[test]
    fn swarm_coherence_points_to_base() {
        let params = SwarmParams { w_explore: 0.0, w_avoid: 0.0, w_cohere: 1.0, ..Default::default() };
        let c = MotionContext { area: MissionArea::new(1000.0, 1000.0, 1000.0), ..ctx() };
        let mut a = agent(Vec3::new(0.0, 0.0, 0.0), 10.0);
        step_swarm(&mut a, &[], Vec3::new(100.0, 0.0, 0.0), None, &params, &c, 0.25);
        let s = a.steering.unwrap();
        assert!(s.x > 0.0 && s.y.abs() < 1e-12 && s.z.abs() < 1e-12);
    }

    #[test]
    fn swarm_avoidance_is_antiparallel() {
        let params = SwarmParams { w_explore: 0.0, w_avoid: 1.0, w_cohere: 0.0, ..Default::default() };
        let pa = Vec3::new(500.0, 500.0, 500.0);
        let pb = Vec3::new(505.0, 502.0, 500.0);
        let mut a = agent(pa, 10.0);
        let mut b = AgentState::new(NodeId(2), pb, 10.0, 5);
        step_swarm(&mut a, &[pb], Vec3::ZERO, None, &params, &ctx(), 0.25);
        step_swarm(&mut b, &[pa], Vec3::ZERO, None, &params, &ctx(), 0.25);
        assert!(a.steering.unwrap().dot(b.steering.unwrap()) < 0.0);
    }

    #[test]
    fn dispersion_equilibrium_at_spacing() {
        let params = DispersionParams { w_explore: 0.0, ..Default::default() };
        let pa = Vec3::new(400.0, 500.0, 500.0);
        let pb = pa + Vec3::new(params.mesh_spacing, 0.0, 0.0);
        let mut rng = substream(5, Stream::Mobility);
        let mut a = agent(pa, 10.0);
        let mut b = AgentState::new(NodeId(2), pb, 10.0, 5);
        step_dispersion(&mut a, &[pb], &params, &ctx(), 0.25, &mut rng);
        step_dispersion(&mut b, &[pa], &params, &ctx(), 0.25, &mut rng);
        assert!(a.steering.unwrap().norm() < 1e-12);
        assert!(b.steering.unwrap().norm() < 1e-12);
    }

    #[test]
    fn dispersion_attracts_beyond_spacing() {
        let params = DispersionParams { w_explore: 0.0, ..Default::default() };
        let pa = Vec3::new(300.0, 500.0, 500.0);
        let pb = pa + Vec3::new(2.0 * params.mesh_spacing, 0.0, 0.0);
        let mut rng = substream(6, Stream::Mobility);
        let mut a = agent(pa, 10.0);
        let mut b = AgentState::new(NodeId(2), pb, 10.0, 5);
        step_dispersion(&mut a, &[pb], &params, &ctx(), 0.25, &mut rng);
        step_dispersion(&mut b, &[pa], &params, &ctx(), 0.25, &mut rng);
        assert!(a.steering.unwrap().x > 0.0);
        assert!(b.steering.unwrap().x < 0.0);
    }

    #[test]
    fn dispersion_isolated_agent_respects_speed() {
        let params = DispersionParams::default();
        let mut rng = substream(7, Stream::Mobility);
        let mut a = agent(Vec3::new(500.0, 500.0, 500.0), 13.9);
        for _ in 0..200 {
            let before = a.position;
            step_dispersion(&mut a, &[], &params, &ctx(), 0.25, &mut rng);
            assert!(a.position.distance(before) <= 13.9 * 0.25 + 1e-9);
        }
    }

    #[test]
    fn gnss_zero_error_is_truth() {
        let mut a = agent(Vec3::new(1.0, 2.0, 3.0), 1.0);
        a.record(0.0);
        let info = mobility_info(&a, &ctx(), &GnssErrorModel::default(), 9, 0.5);
        assert_eq!(info.position, a.position);
    }

    #[test]
    fn gnss_same_timestamp_same_offset() {
        let g = GnssErrorModel { max_error: 120.0, resample_interval: 0.25 };
        assert_eq!(g.offset(1, NodeId(3), 1.3), g.offset(1, NodeId(3), 1.3));
        assert_eq!(g.offset(1, NodeId(3), 1.26), g.offset(1, NodeId(3), 1.49));
        assert_ne!(g.offset(1, NodeId(3), 1.26), g.offset(1, NodeId(3), 1.51));
    }

    #[test]
    fn gnss_history_perturbed_consistently() {
        let g = GnssErrorModel { max_error: 50.0, resample_interval: 0.25 };
        let mut a = agent(Vec3::new(1.0, 2.0, 3.0), 1.0);
        for k in 0..4 {
            a.record(k as f64 * 0.25);
        }
        let now = 1.0;
        let info = mobility_info(&a, &ctx(), &g, 4, now);
        for &(t, p) in &info.history[..info.history.len() - 1] {
            assert_eq!(p, a.position + g.offset(4, a.id, t));
        }
        // Ground truth untouched.
        assert_eq!(a.position, Vec3::new(1.0, 2.0, 3.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn gnss_error_bounded(seed in any::<u64>(), t in 0.0f64..300.0, id in 1u32..20) {
            let g = GnssErrorModel { max_error: 120.0, resample_interval: 0.25 };
            prop_assert!(g.offset(seed, NodeId(id), t).norm() <= 120.0 + 1e-9);
        }

        #[test]
        fn every_model_respects_speed_bound(seed in any::<u64>(), v in 0.0f64..40.0, dt in 0.05f64..1.0, model in 0u8..4) {
            let c = MotionContext { area: MissionArea::default(), update_interval: 0.25, waypoint_radius: 10.0 };
            let mut rng = substream(seed, Stream::Mobility);
            let mut a = AgentState::new(NodeId(1), c.area.random_point(&mut rng), v, 5)
                .with_waypoints((0..4).map(|_| c.area.random_point(&mut rng)).collect::<Vec<_>>());
            let others: Vec<Vec3> = (0..4).map(|_| c.area.random_point(&mut rng)).collect();
            for _ in 0..20 {
                let before = a.position;
                match model {
                    0 => step_random_walk(&mut a, &c, dt, &mut rng),
                    1 => step_waypoint(&mut a, &c, dt),
                    2 => step_swarm(&mut a, &others, c.area.base_station(), Some(Vec3::new(50.0, 50.0, 100.0)), &SwarmParams::default(), &c, dt),
                    _ => step_dispersion(&mut a, &others, &DispersionParams::default(), &c, dt, &mut rng),
                }
                prop_assert!(a.position.distance(before) <= v * dt + 1e-9);
                prop_assert!(c.area.contains(a.position));
            }
        }

        #[test]
        fn popped_waypoints_are_prefix(seed in any::<u64>()) {
            let c = MotionContext::default();
            let mut rng = substream(seed, Stream::Mobility);
            let plan: Vec<Vec3> = (0..6).map(|_| c.area.random_point(&mut rng)).collect();
            let mut a = AgentState::new(NodeId(1), c.area.random_point(&mut rng), 13.9, 5).with_waypoints(plan.clone());
            for _ in 0..400 {
                step_waypoint(&mut a, &c, 0.25);
                let remaining: Vec<Vec3> = a.waypoints.iter().copied().collect();
                prop_assert_eq!(&plan[plan.len() - remaining.len()..], &remaining[..]);
            }
        }
    }
}

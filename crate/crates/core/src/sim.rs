//! Deterministic discrete-event engine.
//!
//! One run owns all of its state; nothing is shared between runs. Events are
//! ordered by (time, insertion sequence), so a run is a pure function of the
//! scenario and the seed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Channel, ChannelError};
use crate::config::{ConfigError, MobilityModel, ScenarioConfig};
use crate::geom::Vec3;
use crate::mobility::{self, AgentState, MotionContext};
use crate::prediction::{self, PredictionConfig};
use crate::rng::{self, SimRng, Stream};
use crate::routing::{
    MetricParams, Ogm, OwnPosition, PredictedDistance, Protocol, RouteRow, RoutingNode,
    RoutingParams,
};
use crate::NodeId;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Fate of one application packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Delivered,
    NoRoute,
    Channel,
    Ttl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdrPoint {
    /// End of the window, seconds.
    pub time: f64,
    pub pdr: f64,
    /// Packets generated in the window.
    pub sent: u64,
}

/// Per-run metrics of the video stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub protocol: Protocol,
    pub source: NodeId,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_dropped_no_route: u64,
    pub packets_dropped_channel: u64,
    pub packets_dropped_ttl: u64,
    /// Delivered over sent for the whole run; 1 when nothing was sent.
    pub mean_pdr: f64,
    pub pdr_series: Vec<PdrPoint>,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run result serializes")
    }

    /// PDR series as `time_s,pdr` CSV.
    pub fn series_csv(&self) -> String {
        let mut s = String::from("time_s,pdr\n");
        for p in &self.pdr_series {
            s.push_str(&format!("{},{}\n", p.time, p.pdr));
        }
        s
    }
}

/// Tumbling-window PDR over `(time, delivered)` records. Windows start at
/// t = 0; empty windows are left out.
pub fn pdr_window(records: &[(f64, bool)], window: f64) -> Vec<PdrPoint> {
    assert!(window > 0.0, "pdr window must be positive");
    let mut out = Vec::new();
    let mut current: Option<(i64, u64, u64)> = None;
    let flush = |slot: Option<(i64, u64, u64)>, out: &mut Vec<PdrPoint>| {
        if let Some((k, sent, ok)) = slot {
            out.push(PdrPoint {
                time: (k + 1) as f64 * window,
                pdr: ok as f64 / sent as f64,
                sent,
            });
        }
    };
    for &(t, delivered) in records {
        let k = (t / window).floor() as i64;
        match &mut current {
            Some((ck, sent, ok)) if *ck == k => {
                *sent += 1;
                *ok += delivered as u64;
            }
            _ => {
                flush(current.take(), &mut out);
                current = Some((k, 1, delivered as u64));
            }
        }
    }
    flush(current, &mut out);
    out
}

type Nanos = u64;

fn nanos(seconds: f64) -> Nanos {
    (seconds * 1e9).round().max(0.0) as Nanos
}

fn seconds(t: Nanos) -> f64 {
    t as f64 * 1e-9
}

#[derive(Debug)]
enum EventKind {
    Mobility,
    OgmTimer(usize),
    PhaseTimer(usize),
    TelemetryTimer(usize),
    Video,
    OgmArrival(Ogm),
    TelemetryArrival { from: usize, pos: Vec3 },
}

#[derive(Debug)]
struct Event {
    time: Nanos,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

/// Telemetry older than this many intervals is no longer used for steering.
const TELEMETRY_STALE_INTERVALS: f64 = 4.0;
/// Waypoints handed to the predictor; the horizon never needs more.
const PREDICTOR_WAYPOINTS: usize = 8;

/// One simulation run.
pub struct Simulation {
    cfg: ScenarioConfig,
    seed: u64,
    channel: Channel,
    ctx: MotionContext,
    prediction: PredictionConfig,
    base_pos: Vec3,
    agents: Vec<AgentState>,
    routing: Vec<RoutingNode>,
    own: Vec<OwnPosition>,
    /// `known[agent][node]`: last telemetry (time, reported position).
    known: Vec<Vec<Option<(f64, Vec3)>>>,
    swarm_targets: Vec<Vec3>,
    swarm_target: usize,
    swarm_target_since: f64,
    mobility_rng: SimRng,
    fading_rng: SimRng,
    source: NodeId,
    queue: BinaryHeap<Event>,
    next_seq: u64,
    end: Nanos,
    records: Vec<(f64, Outcome)>,
    trajectory: Option<Vec<(f64, NodeId, Vec3)>>,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let cfg = cfg.clone();
        let channel = Channel::new(cfg.channel)?;
        let area = cfg.area.mission_area();
        let ctx = MotionContext {
            area,
            update_interval: cfg.mobility.update_interval,
            waypoint_radius: cfg.mobility.waypoint_radius,
        };
        let v = cfg.mobility.velocity_mps();
        let base_pos = area.base_station();
        let n_nodes = cfg.agents + 1;

        let mut mobility_rng = rng::substream(seed, Stream::Mobility);
        let history_len = cfg.prediction.extrapolation_window.max(2);
        let mut agents = Vec::with_capacity(cfg.agents);
        for i in 0..cfg.agents {
            let start = match &cfg.mobility.initial_positions {
                Some(ps) => Vec3::new(ps[i][0], ps[i][1], ps[i][2]),
                None => match cfg.mobility.model {
                    MobilityModel::Swarm | MobilityModel::Dispersion => area.clamp(
                        base_pos
                            + Vec3::new(
                                mobility_rng.random_range(-40.0..=40.0),
                                mobility_rng.random_range(-40.0..=40.0),
                                mobility_rng.random_range(10.0..=50.0),
                            ),
                    ),
                    _ => area.random_point(&mut mobility_rng),
                },
            };
            agents.push(AgentState::new(NodeId(i as u32 + 1), start, v, history_len));
        }
        if cfg.mobility.model == MobilityModel::ControlledWaypoint {
            let count = (cfg.duration * v / 100.0).ceil() as usize + 8;
            for a in &mut agents {
                a.waypoints = (0..count).map(|_| area.random_point(&mut mobility_rng)).collect();
            }
        }
        let swarm_targets = if cfg.mobility.model == MobilityModel::Swarm {
            let count = (cfg.duration / cfg.mobility.swarm.waypoint_timeout).ceil() as usize + 2;
            (0..count).map(|_| area.random_point(&mut mobility_rng)).collect()
        } else {
            Vec::new()
        };

        let metric = MetricParams {
            alpha: cfg.routing.alpha,
            d_max: channel.d_max(),
            p_trend_max: cfg.routing.p_trend_max,
            d_step: v * cfg.prediction.step_interval,
            horizon_steps: cfg.prediction.horizon_steps,
            trend_sign: cfg.routing.trend_sign as f64,
        };
        let rparams = RoutingParams {
            protocol: cfg.protocol,
            metric,
            window: cfg.routing.buffer_size,
            ttl: cfg.routing.ttl,
            predicted_distance: cfg.routing.predicted_distance,
            rebroadcast: cfg.routing.rebroadcast,
        };
        let routing = (0..n_nodes).map(|i| RoutingNode::new(NodeId(i as u32), rparams)).collect();
        let own = vec![OwnPosition::fixed(base_pos); n_nodes];

        let source = match cfg.traffic.source {
            Some(id) => NodeId(id),
            None => {
                let mut traffic_rng = rng::substream(seed, Stream::Traffic);
                NodeId(traffic_rng.random_range(1..=cfg.agents as u32))
            }
        };

        let mut sim = Self {
            prediction: cfg.prediction,
            end: nanos(cfg.duration),
            seed,
            channel,
            ctx,
            base_pos,
            agents,
            routing,
            own,
            known: vec![vec![None; n_nodes]; n_nodes],
            swarm_targets,
            swarm_target: 0,
            swarm_target_since: 0.0,
            mobility_rng,
            fading_rng: rng::substream(seed, Stream::Fading),
            source,
            queue: BinaryHeap::new(),
            next_seq: 0,
            records: Vec::new(),
            trajectory: None,
            cfg,
        };
        sim.schedule_initial();
        Ok(sim)
    }

    fn push(&mut self, time: Nanos, kind: EventKind) {
        if time > self.end {
            return;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { time, seq, kind });
    }

    fn schedule_initial(&mut self) {
        self.push(0, EventKind::Mobility);
        let mut sched = rng::substream(self.seed, Stream::Schedule);
        let n_nodes = self.routing.len();
        let ogm = self.cfg.routing.ogm_interval;
        let phase = self.cfg.routing.update_phase;
        let telemetry = self.cfg.traffic.telemetry_interval;
        for i in 0..n_nodes {
            let t = nanos(sched.random_range(0.0..ogm));
            self.push(t, EventKind::OgmTimer(i));
        }
        for i in 0..n_nodes {
            let t = nanos(sched.random_range(0.0..phase));
            self.push(t, EventKind::PhaseTimer(i));
        }
        for i in 1..n_nodes {
            let t = nanos(sched.random_range(0.0..telemetry));
            self.push(t, EventKind::TelemetryTimer(i));
        }
        self.push(nanos(self.cfg.traffic.start_time), EventKind::Video);
    }

    /// Starts recording ground-truth agent positions at every mobility
    /// update.
    pub fn record_trajectories(&mut self) {
        self.trajectory.get_or_insert_with(Vec::new);
    }

    /// Recorded positions as `time_s,agent_id,x,y,z` CSV.
    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from("time_s,agent_id,x,y,z\n");
        for (t, id, p) in self.trajectory.iter().flatten() {
            s.push_str(&format!("{t},{},{},{},{}\n", id.0, p.x, p.y, p.z));
        }
        s
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn node_count(&self) -> usize {
        self.routing.len()
    }

    /// Ground-truth position of a node.
    pub fn position(&self, node: NodeId) -> Vec3 {
        match node.index() {
            0 => self.base_pos,
            i => self.agents[i - 1].position,
        }
    }

    pub fn routing_node(&self, node: NodeId) -> &RoutingNode {
        &self.routing[node.index()]
    }

    /// Routing table dump of one node.
    pub fn routing_table(&self, node: NodeId) -> Vec<RouteRow> {
        self.routing[node.index()].table()
    }

    /// Processes events up to and including `t` seconds.
    pub fn run_until(&mut self, t: f64) {
        let limit = nanos(t).min(self.end);
        while let Some(ev) = self.queue.peek() {
            if ev.time > limit {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.handle(ev);
        }
    }

    /// Runs to the configured duration and returns the metrics.
    pub fn finish(mut self) -> RunResult {
        self.run_to_end()
    }

    /// Like [`Simulation::finish`] but keeps the simulation for inspection.
    pub fn run_to_end(&mut self) -> RunResult {
        self.run_until(self.cfg.duration);
        self.result()
    }

    fn handle(&mut self, ev: Event) {
        let now = ev.time;
        match ev.kind {
            EventKind::Mobility => {
                self.mobility_update(seconds(now));
                self.push(now + nanos(self.ctx.update_interval), EventKind::Mobility);
            }
            EventKind::OgmTimer(i) => {
                let ogm = self.routing[i].originate_ogm(&self.own[i]);
                let air = nanos(self.channel.airtime(self.cfg.routing.ogm_size));
                self.push(now + air, EventKind::OgmArrival(ogm));
                self.push(now + nanos(self.cfg.routing.ogm_interval), EventKind::OgmTimer(i));
            }
            EventKind::PhaseTimer(i) => {
                self.routing[i].flush_update_phase();
                self.push(now + nanos(self.cfg.routing.update_phase), EventKind::PhaseTimer(i));
            }
            EventKind::TelemetryTimer(i) => {
                let pos = self.own[i].current;
                let air = nanos(self.channel.airtime(self.cfg.traffic.telemetry_size));
                self.push(now + air, EventKind::TelemetryArrival { from: i, pos });
                self.push(now + nanos(self.cfg.traffic.telemetry_interval), EventKind::TelemetryTimer(i));
            }
            EventKind::Video => {
                let outcome = self.deliver_app_packet(self.source, NodeId::BASE);
                self.records.push((seconds(now), outcome));
                self.push(now + nanos(self.cfg.traffic.video_interval()), EventKind::Video);
            }
            EventKind::OgmArrival(ogm) => self.broadcast_ogm(now, &ogm),
            EventKind::TelemetryArrival { from, pos } => {
                let t = seconds(now);
                let src = self.position(NodeId(from as u32));
                for r in 1..self.routing.len() {
                    if r == from {
                        continue;
                    }
                    let d = src.distance(self.position(NodeId(r as u32)));
                    if self.channel.delivered(d, &mut self.fading_rng) {
                        self.known[r][from] = Some((t, pos));
                    }
                }
            }
        }
    }

    fn broadcast_ogm(&mut self, now: Nanos, ogm: &Ogm) {
        let sender = ogm.sender.index();
        let src = self.position(ogm.sender);
        let air = nanos(self.channel.airtime(self.cfg.routing.ogm_size));
        for r in 0..self.routing.len() {
            if r == sender {
                continue;
            }
            let d = src.distance(self.position(NodeId(r as u32)));
            if !self.channel.delivered(d, &mut self.fading_rng) {
                continue;
            }
            if let Some(fwd) = self.routing[r].on_ogm(ogm, &self.own[r]) {
                self.push(now + air, EventKind::OgmArrival(fwd));
            }
        }
    }

    /// Walks one video packet along the next-hop chain from `source` to
    /// `sink` at the current instant.
    pub fn deliver_app_packet(&mut self, source: NodeId, sink: NodeId) -> Outcome {
        let mut at = source;
        let mut hops = 0u32;
        loop {
            if at == sink {
                return Outcome::Delivered;
            }
            if hops >= self.cfg.routing.ttl as u32 {
                return Outcome::Ttl;
            }
            let Some(next) = self.routing[at.index()].select_next_hop(sink) else {
                return Outcome::NoRoute;
            };
            let d = self.position(at).distance(self.position(next));
            if !self.channel.delivered(d, &mut self.fading_rng) {
                return Outcome::Channel;
            }
            at = next;
            hops += 1;
        }
    }

    fn fresh_neighbors(&self, agent: usize, t: f64) -> Vec<Vec3> {
        let stale = TELEMETRY_STALE_INTERVALS * self.cfg.traffic.telemetry_interval;
        self.known[agent]
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != agent && *j != 0)
            .filter_map(|(_, k)| k.filter(|(ts, _)| t - ts <= stale).map(|(_, p)| p))
            .collect()
    }

    fn mobility_update(&mut self, t: f64) {
        let dt = self.ctx.update_interval;
        if t > 0.0 {
            if self.cfg.mobility.model == MobilityModel::Swarm {
                self.advance_swarm_target(t);
            }
            let target = self.swarm_targets.get(self.swarm_target).copied();
            for i in 0..self.agents.len() {
                let node = i + 1;
                match self.cfg.mobility.model {
                    MobilityModel::RandomWalk => mobility::step_random_walk(
                        &mut self.agents[i],
                        &self.ctx,
                        dt,
                        &mut self.mobility_rng,
                    ),
                    MobilityModel::ControlledWaypoint => {
                        mobility::step_waypoint(&mut self.agents[i], &self.ctx, dt)
                    }
                    MobilityModel::Swarm => {
                        let neighbors = self.fresh_neighbors(node, t);
                        mobility::step_swarm(
                            &mut self.agents[i],
                            &neighbors,
                            self.base_pos,
                            target,
                            &self.cfg.mobility.swarm,
                            &self.ctx,
                            dt,
                        );
                    }
                    MobilityModel::Dispersion => {
                        let mut neighbors = self.fresh_neighbors(node, t);
                        neighbors.push(self.base_pos);
                        mobility::step_dispersion(
                            &mut self.agents[i],
                            &neighbors,
                            &self.cfg.mobility.dispersion,
                            &self.ctx,
                            dt,
                            &mut self.mobility_rng,
                        );
                    }
                    MobilityModel::Static => {
                        self.agents[i].steering = Some(Vec3::ZERO);
                    }
                }
            }
        }
        for a in &mut self.agents {
            a.record(t);
        }
        if let Some(tr) = &mut self.trajectory {
            tr.extend(self.agents.iter().map(|a| (t, a.id, a.position)));
        }
        self.refresh_own_positions(t);
    }

    fn advance_swarm_target(&mut self, t: f64) {
        let Some(&target) = self.swarm_targets.get(self.swarm_target) else {
            return;
        };
        let centroid =
            self.agents.iter().map(|a| a.position).sum::<Vec3>() / self.agents.len() as f64;
        let params = &self.cfg.mobility.swarm;
        let reached = centroid.distance(target) <= params.chain_range / 3.0;
        if (reached || t - self.swarm_target_since >= params.waypoint_timeout)
            && self.swarm_target + 1 < self.swarm_targets.len()
        {
            self.swarm_target += 1;
            self.swarm_target_since = t;
        }
    }

    fn refresh_own_positions(&mut self, t: f64) {
        let predictive = self.cfg.protocol == Protocol::Batmobile;
        let keep_track = self.cfg.routing.predicted_distance == PredictedDistance::MinOverHorizon;
        for (i, a) in self.agents.iter().enumerate() {
            let mut info = mobility::mobility_info(a, &self.ctx, &self.cfg.gnss, self.seed, t);
            if !predictive || self.prediction.horizon_steps == 0 {
                self.own[i + 1] = OwnPosition::fixed(info.position);
                continue;
            }
            info.waypoints.truncate(PREDICTOR_WAYPOINTS);
            let tr = prediction::predict_trajectory(&info, &self.prediction);
            let predicted = tr.endpoint().unwrap_or(info.position);
            let track: Option<Arc<[Vec3]>> =
                keep_track.then(|| tr.positions.iter().map(|p| p.1).collect());
            self.own[i + 1] = OwnPosition { current: info.position, predicted, track };
        }
        if keep_track {
            let steps = self.prediction.horizon_steps;
            self.own[0].track = Some(vec![self.base_pos; steps].into());
        }
    }

    fn result(&self) -> RunResult {
        let mut r = RunResult {
            seed: self.seed,
            protocol: self.cfg.protocol,
            source: self.source,
            packets_sent: self.records.len() as u64,
            packets_delivered: 0,
            packets_dropped_no_route: 0,
            packets_dropped_channel: 0,
            packets_dropped_ttl: 0,
            mean_pdr: 1.0,
            pdr_series: Vec::new(),
        };
        for (_, o) in &self.records {
            match o {
                Outcome::Delivered => r.packets_delivered += 1,
                Outcome::NoRoute => r.packets_dropped_no_route += 1,
                Outcome::Channel => r.packets_dropped_channel += 1,
                Outcome::Ttl => r.packets_dropped_ttl += 1,
            }
        }
        if r.packets_sent > 0 {
            r.mean_pdr = r.packets_delivered as f64 / r.packets_sent as f64;
        }
        let flags: Vec<(f64, bool)> =
            self.records.iter().map(|&(t, o)| (t, o == Outcome::Delivered)).collect();
        r.pdr_series = pdr_window(&flags, self.cfg.traffic.pdr_window);
        r
    }
}

/// Runs one scenario with one seed.
pub fn run(scenario: &ScenarioConfig, seed: u64) -> Result<RunResult, SimError> {
    Ok(Simulation::new(scenario, seed)?.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_delivered_series_is_flat() {
        let recs: Vec<(f64, bool)> = (0..100).map(|k| (k as f64 * 0.1, true)).collect();
        let s = pdr_window(&recs, 1.0);
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|p| p.pdr == 1.0));
        assert_eq!(s[0].time, 1.0);
    }

    #[test]
    fn alternating_is_half() {
        let recs: Vec<(f64, bool)> = (0..100).map(|k| (k as f64 * 0.1, k % 2 == 0)).collect();
        assert!(pdr_window(&recs, 1.0).iter().all(|p| p.pdr == 0.5));
    }

    #[test]
    fn empty_windows_omitted() {
        let recs = [(0.5, true), (3.2, false)];
        let s = pdr_window(&recs, 1.0);
        assert_eq!(
            s,
            vec![
                PdrPoint { time: 1.0, pdr: 1.0, sent: 1 },
                PdrPoint { time: 4.0, pdr: 0.0, sent: 1 }
            ]
        );
    }

    #[test]
    fn event_order_is_time_then_insertion() {
        let mut h = BinaryHeap::new();
        h.push(Event { time: 5, seq: 2, kind: EventKind::Video });
        h.push(Event { time: 5, seq: 1, kind: EventKind::Video });
        h.push(Event { time: 1, seq: 3, kind: EventKind::Video });
        let order: Vec<(u64, u64)> = std::iter::from_fn(|| h.pop().map(|e| (e.time, e.seq))).collect();
        assert_eq!(order, vec![(1, 3), (5, 1), (5, 2)]);
    }
}

//! Score-based predictive routing and a count-based baseline.
//!
//! Every node floods Originator Messages (OGMs). An OGM carries the
//! position and predicted position of the node that last transmitted it and
//! the quality `S` of the path back to its originator. A receiver multiplies
//! `S` by the link score toward the transmitter, keeps the best product per
//! (originator, neighbor) during an update phase, and at the end of each
//! phase shifts it into a small FIFO whose mean ranks that neighbor as next
//! hop toward the originator.
//!
//! The baseline ranks neighbors by how many distinct OGM sequence numbers of
//! an originator they relayed within the same window of update phases.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Batmobile,
    BatmanBaseline,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Batmobile => "batmobile",
            Protocol::BatmanBaseline => "batman-baseline",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "batmobile" => Ok(Protocol::Batmobile),
            "batman-baseline" | "batman" => Ok(Protocol::BatmanBaseline),
            other => Err(format!("unknown protocol `{other}` (expected batmobile | batman-baseline)")),
        }
    }
}

/// Which predicted distance feeds the link score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictedDistance {
    /// Distance between the two horizon endpoints.
    #[default]
    Endpoint,
    /// Smallest distance between time-aligned predicted positions.
    MinOverHorizon,
}

/// Which received copies of an OGM a node rebroadcasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rebroadcast {
    /// The first copy of every sequence number.
    #[default]
    FirstCopy,
    /// The first copy that arrives from the current next hop toward the
    /// originator, or the first copy at all while there is no next hop.
    BestNeighbor,
}

/// Routing broadcast extended with forwarder positions and path score.
#[derive(Debug, Clone, PartialEq)]
pub struct Ogm {
    pub originator: NodeId,
    pub seq: u32,
    /// Remaining hop budget.
    pub ttl: u8,
    /// Node that transmitted this copy.
    pub sender: NodeId,
    /// Node the sender received its copy from (the originator at origin).
    pub prev_sender: NodeId,
    pub forwarder_pos: Vec3,
    pub forwarder_pred_pos: Vec3,
    /// Full predicted track of the forwarder; only carried when the
    /// min-over-horizon distance is in use.
    pub forwarder_track: Option<Arc<[Vec3]>>,
    pub path_score: f64,
}

/// Parameters of the link-score metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    /// Grade of relative mobility (exponent on the normalized distance).
    pub alpha: f64,
    /// Maximum communication distance, meters.
    pub d_max: f64,
    pub p_trend_max: f64,
    /// Largest displacement of one agent per prediction step, meters.
    pub d_step: f64,
    pub horizon_steps: usize,
    /// +1 rewards a growing distance, -1 penalizes it.
    pub trend_sign: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            alpha: 7.0,
            d_max: 1000.0,
            p_trend_max: 0.1,
            d_step: 50.0 / 3.6 * 0.25,
            horizon_steps: 15,
            trend_sign: 1.0,
        }
    }
}

/// Trend term: predicted change of distance relative to the largest change
/// two agents can achieve over the horizon, scaled to `p_trend_max`.
pub fn p_trend(d: f64, d_pred: f64, params: &MetricParams) -> f64 {
    if params.horizon_steps == 0 || params.d_step <= 0.0 {
        return 0.0;
    }
    params.trend_sign * (d_pred - d) / (2.0 * params.d_step * params.horizon_steps as f64)
        * params.p_trend_max
}

/// Link score from the current distance `d` and predicted distance `d_pred`.
pub fn link_score_from_distances(d: f64, d_pred: f64, params: &MetricParams) -> f64 {
    let now = 1.0 - (d / params.d_max).powf(params.alpha);
    let later = 1.0 - (d_pred / params.d_max).powf(params.alpha);
    (now.min(later) + p_trend(d, d_pred, params)).clamp(0.0, 1.0)
}

/// Link score of the hop from the OGM's forwarder to the receiver.
pub fn link_score(
    receiver_pos: Vec3,
    receiver_pred_pos: Vec3,
    ogm: &Ogm,
    params: &MetricParams,
) -> f64 {
    let d = receiver_pos.distance(ogm.forwarder_pos);
    let d_pred = receiver_pred_pos.distance(ogm.forwarder_pred_pos);
    link_score_from_distances(d, d_pred, params)
}

/// Path score after one more hop.
pub fn path_score_update(received: f64, link: f64) -> f64 {
    received * link
}

/// Fixed-size FIFO of per-phase scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreBuffer {
    values: VecDeque<f64>,
    capacity: usize,
}

impl ScoreBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "score buffer needs room for one value");
        Self { values: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn push(&mut self, v: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }

    /// Mean of the buffered values; 0 when empty.
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// State of one candidate next hop toward one destination.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub neighbor: NodeId,
    /// Best path score seen via this neighbor in the running phase.
    pub score_candidate: f64,
    pub buffer: ScoreBuffer,
    /// Mean of `buffer`, refreshed at every phase flush.
    pub score: f64,
    pub last_seq_seen: Option<u32>,
    /// Distinct sequence numbers relayed per phase, for the baseline.
    seq_counts: VecDeque<u32>,
    seqs_this_phase: u32,
}

impl NeighborEntry {
    pub fn new(neighbor: NodeId, window: usize) -> Self {
        Self {
            neighbor,
            score_candidate: 0.0,
            buffer: ScoreBuffer::new(window),
            score: 0.0,
            last_seq_seen: None,
            seq_counts: VecDeque::with_capacity(window),
            seqs_this_phase: 0,
        }
    }

    /// Distinct sequence numbers relayed within the window of completed
    /// phases.
    pub fn window_count(&self) -> u32 {
        self.seq_counts.iter().sum()
    }

    fn observe(&mut self, seq: u32, path_score: f64) {
        self.score_candidate = self.score_candidate.max(path_score);
        if self.last_seq_seen.is_none_or(|s| seq > s) {
            self.last_seq_seen = Some(seq);
            self.seqs_this_phase += 1;
        }
    }

    fn flush(&mut self) {
        self.buffer.push(self.score_candidate);
        self.score_candidate = 0.0;
        self.score = self.buffer.mean();
        if self.seq_counts.len() == self.buffer.capacity {
            self.seq_counts.pop_front();
        }
        self.seq_counts.push_back(self.seqs_this_phase);
        self.seqs_this_phase = 0;
    }
}

/// Neighbors toward one destination, best first after each flush.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborRanking {
    pub entries: Vec<NeighborEntry>,
}

impl NeighborRanking {
    fn entry_mut(&mut self, neighbor: NodeId, window: usize) -> &mut NeighborEntry {
        let idx = match self.entries.iter().position(|e| e.neighbor == neighbor) {
            Some(i) => i,
            None => {
                self.entries.push(NeighborEntry::new(neighbor, window));
                self.entries.len() - 1
            }
        };
        &mut self.entries[idx]
    }

    pub fn get(&self, neighbor: NodeId) -> Option<&NeighborEntry> {
        self.entries.iter().find(|e| e.neighbor == neighbor)
    }

    fn sort(&mut self) {
        self.entries
            .sort_by(|a, b| b.score.total_cmp(&a.score).then(a.neighbor.cmp(&b.neighbor)));
    }

    /// Highest score, ties to the lowest id; `None` if nothing scores above 0.
    pub fn best(&self) -> Option<NodeId> {
        best_by(&self.entries, |e| e.score)
    }

    /// Most relayed sequence numbers, ties to the lowest id; `None` if the
    /// window is empty.
    pub fn best_by_count(&self) -> Option<NodeId> {
        best_by(&self.entries, |e| e.window_count() as f64)
    }
}

fn best_by(entries: &[NeighborEntry], key: impl Fn(&NeighborEntry) -> f64) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for e in entries {
        let k = key(e);
        let better = match best {
            None => true,
            Some((bk, bid)) => k > bk || (k == bk && e.neighbor < bid),
        };
        if better {
            best = Some((k, e.neighbor));
        }
    }
    best.filter(|&(k, _)| k > 0.0).map(|(_, id)| id)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingParams {
    pub protocol: Protocol,
    pub metric: MetricParams,
    /// Neighbor score buffer size and baseline window, in phases.
    pub window: usize,
    /// Hop budget given to originated OGMs.
    pub ttl: u8,
    pub predicted_distance: PredictedDistance,
    pub rebroadcast: Rebroadcast,
}

impl Default for RoutingParams {
    fn default() -> Self {
        Self {
            protocol: Protocol::Batmobile,
            metric: MetricParams::default(),
            window: 8,
            ttl: 10,
            predicted_distance: PredictedDistance::Endpoint,
            rebroadcast: Rebroadcast::FirstCopy,
        }
    }
}

/// What a node knows about its own position when handling an OGM.
#[derive(Debug, Clone, Default)]
pub struct OwnPosition {
    pub current: Vec3,
    /// Predicted position at the horizon (equal to `current` without
    /// prediction).
    pub predicted: Vec3,
    pub track: Option<Arc<[Vec3]>>,
}

impl OwnPosition {
    pub fn fixed(p: Vec3) -> Self {
        Self { current: p, predicted: p, track: None }
    }
}

/// One row of a routing table dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteRow {
    pub destination: NodeId,
    pub neighbor: NodeId,
    pub score: f64,
    pub window_count: u32,
    pub buffer: Vec<f64>,
}

/// Per-node routing state.
#[derive(Debug, Clone)]
pub struct RoutingNode {
    id: NodeId,
    params: RoutingParams,
    seq: u32,
    rankings: BTreeMap<NodeId, NeighborRanking>,
    /// Highest sequence number forwarded per originator.
    forwarded: BTreeMap<NodeId, u32>,
}

impl RoutingNode {
    pub fn new(id: NodeId, params: RoutingParams) -> Self {
        Self { id, params, seq: 0, rankings: BTreeMap::new(), forwarded: BTreeMap::new() }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn params(&self) -> &RoutingParams {
        &self.params
    }

    /// Builds this node's next OGM: fresh sequence number, path score 1 and
    /// both position fields taken from the node itself.
    pub fn originate_ogm(&mut self, own: &OwnPosition) -> Ogm {
        self.seq = self.seq.wrapping_add(1);
        Ogm {
            originator: self.id,
            seq: self.seq,
            ttl: self.params.ttl,
            sender: self.id,
            prev_sender: self.id,
            forwarder_pos: own.current,
            forwarder_pred_pos: own.predicted,
            forwarder_track: self.track_for_wire(own),
            path_score: 1.0,
        }
    }

    fn track_for_wire(&self, own: &OwnPosition) -> Option<Arc<[Vec3]>> {
        match self.params.predicted_distance {
            PredictedDistance::Endpoint => None,
            PredictedDistance::MinOverHorizon => own.track.clone(),
        }
    }

    fn predicted_distance(&self, own: &OwnPosition, ogm: &Ogm) -> f64 {
        let endpoint = own.predicted.distance(ogm.forwarder_pred_pos);
        match (self.params.predicted_distance, &own.track, &ogm.forwarder_track) {
            (PredictedDistance::MinOverHorizon, Some(mine), Some(theirs)) if !mine.is_empty() => mine
                .iter()
                .zip(theirs.iter())
                .map(|(a, b)| a.distance(*b))
                .fold(f64::INFINITY, f64::min)
                .min(endpoint),
            _ => endpoint,
        }
    }

    /// Handles a received OGM and returns the copy to rebroadcast, if any.
    ///
    /// Scores are updated for every accepted copy; only the first copy of
    /// each (originator, seq) is forwarded, and only while hop budget
    /// remains. Our own OGMs, echoes of copies we forwarded, and sequence
    /// numbers older than the ranking window are ignored.
    pub fn on_ogm(&mut self, ogm: &Ogm, own: &OwnPosition) -> Option<Ogm> {
        if ogm.originator == self.id || ogm.sender == self.id || ogm.prev_sender == self.id {
            return None;
        }
        let last = self.forwarded.get(&ogm.originator).copied();
        if let Some(last) = last {
            if (ogm.seq as u64) + (self.params.window as u64) < last as u64 {
                return None;
            }
        }

        let d = own.current.distance(ogm.forwarder_pos);
        let d_pred = self.predicted_distance(own, ogm);
        let s_link = link_score_from_distances(d, d_pred, &self.params.metric);
        let s_path = path_score_update(ogm.path_score, s_link);

        let window = self.params.window;
        self.rankings
            .entry(ogm.originator)
            .or_default()
            .entry_mut(ogm.sender, window)
            .observe(ogm.seq, s_path);

        let fresh = last.is_none_or(|l| ogm.seq > l);
        if !fresh {
            return None;
        }
        if self.params.rebroadcast == Rebroadcast::BestNeighbor {
            if let Some(best) = self.select_next_hop(ogm.originator) {
                if best != ogm.sender {
                    return None;
                }
            }
        }
        self.forwarded.insert(ogm.originator, ogm.seq);
        if ogm.ttl <= 1 {
            return None;
        }
        Some(Ogm {
            originator: ogm.originator,
            seq: ogm.seq,
            ttl: ogm.ttl - 1,
            sender: self.id,
            prev_sender: ogm.sender,
            forwarder_pos: own.current,
            forwarder_pred_pos: own.predicted,
            forwarder_track: self.track_for_wire(own),
            path_score: s_path,
        })
    }

    /// Ends the running update phase: every candidate score moves into its
    /// buffer, the candidate resets to zero, and rankings are re-sorted.
    pub fn flush_update_phase(&mut self) {
        for ranking in self.rankings.values_mut() {
            for e in &mut ranking.entries {
                e.flush();
            }
            ranking.sort();
        }
    }

    pub fn ranking(&self, destination: NodeId) -> Option<&NeighborRanking> {
        self.rankings.get(&destination)
    }

    /// Score-ranking next hop toward `destination`.
    pub fn batmobile_next_hop(&self, destination: NodeId) -> Option<NodeId> {
        self.rankings.get(&destination).and_then(NeighborRanking::best)
    }

    /// Count-window next hop toward `destination`.
    pub fn baseline_next_hop(&self, destination: NodeId) -> Option<NodeId> {
        self.rankings.get(&destination).and_then(NeighborRanking::best_by_count)
    }

    /// Next hop under the configured protocol.
    pub fn select_next_hop(&self, destination: NodeId) -> Option<NodeId> {
        match self.params.protocol {
            Protocol::Batmobile => self.batmobile_next_hop(destination),
            Protocol::BatmanBaseline => self.baseline_next_hop(destination),
        }
    }

    /// Routing table dump: (destination, neighbor, score, buffer).
    pub fn table(&self) -> Vec<RouteRow> {
        self.rankings
            .iter()
            .flat_map(|(dest, r)| {
                r.entries.iter().map(move |e| RouteRow {
                    destination: *dest,
                    neighbor: e.neighbor,
                    score: e.score,
                    window_count: e.window_count(),
                    buffer: e.buffer.values().collect(),
                })
            })
            .collect()
    }
}

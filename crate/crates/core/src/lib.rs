//! Discrete-event simulation of predictive, score-based routing for
//! low-altitude UAV ad-hoc networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`geom`] — the `Vec3` type shared by every other module.
//! * [`mobility`] — ground-truth agent motion and the application-layer
//!   mobility snapshot ([`mobility::MobilityInfo`]) with optional GNSS error.
//! * [`prediction`] — the iterative multi-method trajectory predictor.
//! * [`channel`] — received power, delivery decisions and maximum range.
//! * [`routing`] — OGM handling, link/path scores, neighbor rankings and the
//!   count-based baseline.
//! * [`sim`] — the event loop binding everything together and PDR metrics.
//! * [`config`] / [`experiment`] — scenario files, sweeps and aggregation.

pub mod channel;
pub mod config;
pub mod experiment;
pub mod geom;
pub mod mobility;
pub mod prediction;
pub mod rng;
pub mod routing;
pub mod sim;
pub mod stats;

use serde::{Deserialize, Serialize};

pub use config::ScenarioConfig;
pub use geom::Vec3;
pub use sim::{run, RunResult};

/// Identifier of a network node. The base station is always node 0 and
/// agents are numbered from 1.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const BASE: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

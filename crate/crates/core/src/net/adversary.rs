//! Faulty behaviour: byzantine broadcast attacks and crashes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Network;
use crate::graph::{EventPayload, GraphError};
use crate::monitor::SignedEnvelope;
use crate::replica::Replica;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Behavior {
    /// Each round, one event goes to `a` and a conflicting twin to `b`.
    Equivocate { a: Vec<usize>, b: Vec<usize> },
    /// Normal events that are never sent to `targets`.
    Withhold { targets: Vec<usize> },
    /// `rate` events per round whose parents do not exist.
    OrphanFlood { rate: u64 },
}

/// Crash-stop at `at`, or crash-recovery when `recover` is set. A replica
/// that recovers keeps its state and counts as correct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crash {
    pub replica: usize,
    pub at: u64,
    #[serde(default)]
    pub recover: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    #[serde(default)]
    pub byzantine: Vec<usize>,
    #[serde(default)]
    pub behaviors: Vec<Behavior>,
    #[serde(default)]
    pub crashes: Vec<Crash>,
}

impl AdversarySpec {
    pub fn is_byzantine(&self, replica: usize) -> bool {
        self.byzantine.contains(&replica)
    }

    /// Crashed for good: never recovers.
    pub fn is_crash_stop(&self, replica: usize) -> bool {
        self.crashes.iter().any(|c| c.replica == replica && c.recover.is_none())
    }

    pub fn is_correct(&self, replica: usize) -> bool {
        !self.is_byzantine(replica) && !self.is_crash_stop(replica)
    }

    pub fn is_down(&self, replica: usize, tick: u64) -> bool {
        self.crashes
            .iter()
            .any(|c| c.replica == replica && c.at <= tick && c.recover.map_or(true, |r| tick < r))
    }
}

/// Has `replica` sign two events with the same sequence number and sends
/// the first to `a`, the second to `b`.
#[allow(clippy::too_many_arguments)]
pub fn equivocate<R: Rng + ?Sized>(
    net: &mut Network,
    tick: u64,
    index: usize,
    replica: &mut Replica,
    base: &EventPayload,
    subsets: (&[usize], &[usize]),
    cap: usize,
    rng: &mut R,
) -> Result<(SignedEnvelope, SignedEnvelope), GraphError> {
    let mut a = base.clone();
    a.body.extend_from_slice(b"/a");
    let mut b = base.clone();
    b.body.extend_from_slice(b"/b");
    let (e1, e2) = replica.create_equivocation(a, b, cap, rng)?;
    net.broadcast(tick, index, &e1, subsets.0.iter().copied());
    net.broadcast(tick, index, &e2, subsets.1.iter().copied());
    Ok((e1, e2))
}

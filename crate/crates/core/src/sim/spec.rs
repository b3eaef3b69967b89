//! Scenario description and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::DEFAULT_BUFFER_CAP;
use crate::monitor::SignatureScheme;
use crate::net::{AdversarySpec, Behavior, DelayRange, DeliveryGuarantee, NetworkConfig, Partition};
use crate::replica::DEFAULT_BACKFILL_LIMIT;

/// A declarative simulation run. Every key is required in the JSON form
/// and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n: usize,
    pub f: usize,
    pub guarantee: DeliveryGuarantee,
    pub delay: DelayRange,
    pub drop: f64,
    pub duplicate: f64,
    pub partitions: Vec<Partition>,
    pub adversary: AdversarySpec,
    pub rounds: u64,
    pub updates_per_round: u64,
    /// Parent cap for client events.
    pub d: usize,
    /// Emit a dummy when width exceeds this; 0 disables dummies.
    pub dummy_threshold: usize,
    /// Parent cap for dummy events.
    pub dummy_d: usize,
    /// Ticks between extremity gossip; 0 disables gossip.
    pub gossip_period: u64,
    pub horizon: u64,
    pub grace: u64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n: 3,
            f: 0,
            guarantee: DeliveryGuarantee::Reliable,
            delay: DelayRange::default(),
            drop: 0.0,
            duplicate: 0.0,
            partitions: Vec::new(),
            adversary: AdversarySpec::default(),
            rounds: 10,
            updates_per_round: 1,
            d: 10,
            dummy_threshold: 0,
            dummy_d: 10,
            gossip_period: 0,
            horizon: 500,
            grace: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("n must be at least 1")]
    NoReplicas,
    #[error("need n > f, got n = {n}, f = {f}")]
    FaultyBound { n: usize, f: usize },
    #[error("adversary lists {listed} byzantine replicas but f = {f}")]
    ByzantineCount { listed: usize, f: usize },
    #[error("{field} refers to replica {index}, but n = {n}")]
    ReplicaOutOfRange { field: &'static str, index: usize, n: usize },
    #[error("{field} must be at least 2, got {value}")]
    ParentCap { field: &'static str, value: usize },
    #[error("delay range [{min}, {max}] must satisfy 1 <= min <= max")]
    Delay { min: u64, max: u64 },
    #[error("{field} = {value} is not a probability")]
    Probability { field: &'static str, value: f64 },
    #[error("drop = {0} is not allowed under a reliable guarantee")]
    LossyReliable(f64),
    #[error("partition [{from}, {until}) never heals or is empty")]
    Partition { from: u64, until: u64 },
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("round interval must be positive")]
    ZeroInterval,
    #[error("cannot read scenario: {0}")]
    Io(String),
    #[error("malformed scenario: {0}")]
    Parse(String),
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|e| SpecError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            guarantee: self.guarantee,
            delay: self.delay,
            drop: self.drop,
            duplicate: self.duplicate,
            partitions: self.partitions.clone(),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let n = self.n;
        if n == 0 {
            return Err(SpecError::NoReplicas);
        }
        if self.f >= n {
            return Err(SpecError::FaultyBound { n, f: self.f });
        }
        if self.adversary.byzantine.len() != self.f {
            return Err(SpecError::ByzantineCount { listed: self.adversary.byzantine.len(), f: self.f });
        }
        let check = |field: &'static str, index: usize| {
            if index >= n {
                Err(SpecError::ReplicaOutOfRange { field, index, n })
            } else {
                Ok(())
            }
        };
        for &b in &self.adversary.byzantine {
            check("adversary.byzantine", b)?;
        }
        for behavior in &self.adversary.behaviors {
            match behavior {
                Behavior::Equivocate { a, b } => {
                    for &r in a.iter().chain(b) {
                        check("adversary.equivocate", r)?;
                    }
                }
                Behavior::Withhold { targets } => {
                    for &r in targets {
                        check("adversary.withhold", r)?;
                    }
                }
                Behavior::OrphanFlood { .. } => {}
            }
        }
        for c in &self.adversary.crashes {
            check("adversary.crashes", c.replica)?;
        }
        for p in &self.partitions {
            for &r in &p.side {
                check("partitions.side", r)?;
            }
            if p.from >= p.until {
                return Err(SpecError::Partition { from: p.from, until: p.until });
            }
        }
        if self.d < 2 {
            return Err(SpecError::ParentCap { field: "d", value: self.d });
        }
        if self.dummy_threshold > 0 && self.dummy_d < 2 {
            return Err(SpecError::ParentCap { field: "dummy_d", value: self.dummy_d });
        }
        if self.delay.min == 0 || self.delay.min > self.delay.max {
            return Err(SpecError::Delay { min: self.delay.min, max: self.delay.max });
        }
        for (field, value) in [("drop", self.drop), ("duplicate", self.duplicate)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SpecError::Probability { field, value });
            }
        }
        if self.guarantee.is_reliable() && self.drop > 0.0 {
            return Err(SpecError::LossyReliable(self.drop));
        }
        if self.horizon == 0 {
            return Err(SpecError::ZeroHorizon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoundMode {
    /// Rounds start every `round_interval` ticks; messages travel through
    /// the network with its delays, faults and guarantee.
    #[default]
    FreeRunning,
    /// All replicas create their events on the same synchronized state,
    /// then every event reaches every replica before the next round. The
    /// network configuration is ignored.
    Lockstep,
}

/// Run options that are not part of the scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimOptions {
    pub mode: RoundMode,
    pub round_interval: u64,
    /// Width of a fork of root children created and fully synchronized
    /// before the first round. 0 or 1 means no fork.
    pub initial_width: usize,
    pub check_dag_every_op: bool,
    pub buffer_cap: usize,
    pub backfill_batch: usize,
    pub scheme: SignatureScheme,
    pub room_id: String,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            mode: RoundMode::FreeRunning,
            round_interval: 10,
            initial_width: 0,
            check_dag_every_op: true,
            buffer_cap: DEFAULT_BUFFER_CAP,
            backfill_batch: DEFAULT_BACKFILL_LIMIT,
            scheme: SignatureScheme::KeyedHash,
            room_id: "!sim:example.org".to_owned(),
        }
    }
}

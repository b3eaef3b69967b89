//! Discrete-event network between replicas.
//!
//! Messages sit in a queue ordered by `(due tick, sequence number)`. The
//! network knows nothing about replicas beyond what a [`Host`] tells it:
//! whether a receiver is reachable, whether it already knows an event (for
//! causal holdback), and where to hand a delivery.
//!
//! Only `Op` messages enjoy the configured guarantee. Backfill and gossip
//! traffic is always best-effort.

mod adversary;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adversary::{equivocate, AdversarySpec, Behavior, Crash};

use crate::ids::EventId;
use crate::monitor::SignedEnvelope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DeliveryGuarantee {
    /// Reliable plus causal delivery.
    #[serde(rename = "causal")]
    CausalOrderReliable,
    /// Every message reaches every live receiver exactly once, in any order.
    #[default]
    #[serde(rename = "reliable")]
    Reliable,
    #[serde(rename = "best_effort")]
    BestEffort,
}

impl DeliveryGuarantee {
    pub fn is_reliable(self) -> bool {
        !matches!(self, Self::BestEffort)
    }
}

/// Uniform integer delay in `[min, max]` ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayRange {
    pub min: u64,
    pub max: u64,
}

impl Default for DelayRange {
    fn default() -> Self {
        Self { min: 1, max: 10 }
    }
}

/// Splits the replicas into `side` and everyone else for ticks in
/// `[from, until)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub from: u64,
    pub until: u64,
    pub side: Vec<usize>,
}

impl Partition {
    pub fn active(&self, tick: u64) -> bool {
        self.from <= tick && tick < self.until
    }

    pub fn separates(&self, a: usize, b: usize) -> bool {
        self.side.contains(&a) != self.side.contains(&b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub guarantee: DeliveryGuarantee,
    pub delay: DelayRange,
    pub drop: f64,
    pub duplicate: f64,
    pub partitions: Vec<Partition>,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            guarantee: DeliveryGuarantee::Reliable,
            delay: DelayRange::default(),
            drop: 0.0,
            duplicate: 0.0,
            partitions: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Op(SignedEnvelope),
    BackfillRequest { missing: BTreeSet<EventId> },
    BackfillResponse { ops: Vec<SignedEnvelope> },
    Gossip { extremities: BTreeSet<EventId> },
}

impl Message {
    fn label(&self) -> &'static str {
        match self {
            Self::Op(_) => "SEND",
            Self::BackfillRequest { .. } => "BACKFILL_REQ",
            Self::BackfillResponse { .. } => "BACKFILL_RESP",
            Self::Gossip { .. } => "GOSSIP",
        }
    }

    fn trace_id(&self) -> String {
        match self {
            Self::Op(env) => env.op.id().short(),
            Self::BackfillRequest { missing } => missing.first().map_or("-".into(), |id| id.short()),
            Self::BackfillResponse { ops } => ops.first().map_or("-".into(), |e| e.op.id().short()),
            Self::Gossip { .. } => "-".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub from: usize,
    pub to: usize,
    pub msg: Message,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    Up,
    /// Temporarily unreachable (crashed, will recover).
    Down,
    /// Crashed for good.
    Dead,
}

/// The simulator side of the network.
pub trait Host {
    fn link_state(&self, replica: usize) -> LinkState;
    fn knows(&self, replica: usize, id: &EventId) -> bool;
    fn deliver(&mut self, net: &mut Network, tick: u64, delivery: Delivery);
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub rescheduled: u64,
    pub duplicates_suppressed: u64,
    pub held_back: u64,
}

#[derive(Debug, Clone)]
struct InFlight {
    from: usize,
    to: usize,
    msg: Message,
    /// Set for messages under a reliable guarantee.
    link_seq: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Network {
    cfg: NetworkConfig,
    n: usize,
    rng: ChaCha8Rng,
    queue: BTreeMap<(u64, u64), InFlight>,
    next_seq: u64,
    link_sent: Vec<u64>,
    link_expected: Vec<u64>,
    received: HashSet<(usize, usize, u64)>,
    holdback: Vec<Vec<InFlight>>,
    trace: Vec<String>,
    stats: NetStats,
}

impl Network {
    pub fn new(n: usize, cfg: NetworkConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self {
            cfg,
            n,
            rng,
            queue: BTreeMap::new(),
            next_seq: 0,
            link_sent: vec![0; n * n],
            link_expected: vec![0; n * n],
            received: HashSet::new(),
            holdback: vec![Vec::new(); n],
            trace: Vec::new(),
            stats: NetStats::default(),
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn trace(&self) -> &[String] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        std::mem::take(&mut self.trace)
    }

    pub fn stats(&self) -> &NetStats {
        &self.stats
    }

    /// Messages in flight plus messages held back for causal order.
    pub fn pending(&self) -> usize {
        self.queue.len() + self.holdback.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_idle(&self) -> bool {
        self.pending() == 0
    }

    pub fn partitioned(&self, a: usize, b: usize, tick: u64) -> bool {
        self.cfg.partitions.iter().any(|p| p.active(tick) && p.separates(a, b))
    }

    /// Appends a trace line: tick, kind, sender, receiver, id prefix.
    pub fn log(&mut self, tick: u64, kind: &str, from: usize, to: usize, id: &str) {
        self.trace.push(format!("{tick}\t{kind}\t{from}\t{to}\t{id}"));
    }

    fn delay(&mut self) -> u64 {
        let DelayRange { min, max } = self.cfg.delay;
        self.rng.gen_range(min..=max.max(min))
    }

    fn enqueue(&mut self, tick: u64, m: InFlight) {
        let due = tick + self.delay();
        self.queue.insert((due, self.next_seq), m);
        self.next_seq += 1;
    }

    /// Puts one message on the wire.
    pub fn send(&mut self, tick: u64, from: usize, to: usize, msg: Message) {
        let reliable = matches!(msg, Message::Op(_)) && self.cfg.guarantee.is_reliable();
        if !reliable && self.cfg.drop > 0.0 && self.rng.gen_bool(self.cfg.drop) {
            self.stats.dropped += 1;
            let id = msg.trace_id();
            self.log(tick, "DROP", from, to, &id);
            return;
        }
        match &msg {
            Message::BackfillResponse { ops } if !ops.is_empty() => {
                for env in ops {
                    let id = env.op.id().short();
                    self.log(tick, "BACKFILL_RESP", from, to, &id);
                }
            }
            _ => {
                let id = msg.trace_id();
                self.log(tick, msg.label(), from, to, &id);
            }
        }
        self.stats.sent += 1;

        let link_seq = reliable.then(|| {
            let slot = &mut self.link_sent[from * self.n + to];
            *slot += 1;
            *slot - 1
        });
        let copy = self.cfg.duplicate > 0.0 && self.rng.gen_bool(self.cfg.duplicate);
        if copy {
            self.enqueue(tick, InFlight { from, to, msg: msg.clone(), link_seq });
        }
        self.enqueue(tick, InFlight { from, to, msg, link_seq });
    }

    /// Sends `env` to every replica in `to`.
    pub fn broadcast(&mut self, tick: u64, from: usize, env: &SignedEnvelope, to: impl IntoIterator<Item = usize>) {
        for r in to {
            if r != from {
                self.send(tick, from, r, Message::Op(env.clone()));
            }
        }
    }

    /// Discards the unsent best-effort traffic of a crashing replica.
    pub fn crash(&mut self, tick: u64, replica: usize) {
        let lost: Vec<(u64, u64)> = self
            .queue
            .iter()
            .filter(|(_, m)| m.from == replica && m.link_seq.is_none())
            .map(|(k, _)| *k)
            .collect();
        for k in lost {
            let m = self.queue.remove(&k).expect("key listed above");
            self.drop_msg(tick, &m);
        }
    }

    fn drop_msg(&mut self, tick: u64, m: &InFlight) {
        self.stats.dropped += 1;
        let id = m.msg.trace_id();
        self.log(tick, "DROP", m.from, m.to, &id);
    }

    /// Delivers everything due at or before `tick`.
    pub fn step<H: Host + ?Sized>(&mut self, tick: u64, host: &mut H) {
        while let Some((&key, _)) = self.queue.first_key_value() {
            if key.0 > tick {
                break;
            }
            let m = self.queue.remove(&key).expect("key just observed");
            self.dispatch(tick, m, host);
        }
    }

    fn dispatch<H: Host + ?Sized>(&mut self, tick: u64, m: InFlight, host: &mut H) {
        let state = host.link_state(m.to);
        let blocked = self.partitioned(m.from, m.to, tick);
        if state == LinkState::Dead || (m.link_seq.is_none() && (blocked || state == LinkState::Down)) {
            self.drop_msg(tick, &m);
            return;
        }
        if blocked || state == LinkState::Down {
            self.stats.rescheduled += 1;
            self.enqueue(tick, m);
            return;
        }

        if let Some(seq) = m.link_seq {
            if !self.received.insert((m.from, m.to, seq)) {
                self.stats.duplicates_suppressed += 1;
                return;
            }
            if self.cfg.guarantee == DeliveryGuarantee::CausalOrderReliable {
                let to = m.to;
                self.stats.held_back += 1;
                self.holdback[to].push(m);
                self.release(tick, to, host);
                return;
            }
        }

        let to = m.to;
        let causal_followup = self.cfg.guarantee == DeliveryGuarantee::CausalOrderReliable
            && matches!(m.msg, Message::BackfillResponse { .. });
        self.hand_over(tick, m, host);
        if causal_followup {
            self.release(tick, to, host);
        }
    }

    fn hand_over<H: Host + ?Sized>(&mut self, tick: u64, m: InFlight, host: &mut H) {
        if let Message::Op(env) = &m.msg {
            let id = env.op.id().short();
            self.log(tick, "DELIVER", m.from, m.to, &id);
        }
        self.stats.delivered += 1;
        host.deliver(self, tick, Delivery { from: m.from, to: m.to, msg: m.msg });
    }

    /// Releases held ops to `to` whose link predecessor was delivered and
    /// whose parents `to` already knows, until nothing more qualifies.
    fn release<H: Host + ?Sized>(&mut self, tick: u64, to: usize, host: &mut H) {
        loop {
            let pick = self.holdback[to].iter().position(|m| {
                let next = self.link_expected[m.from * self.n + to];
                m.link_seq == Some(next)
                    && match &m.msg {
                        Message::Op(env) => env.op.parents().iter().all(|p| host.knows(to, p)),
                        _ => true,
                    }
            });
            let Some(i) = pick else { break };
            let m = self.holdback[to].swap_remove(i);
            self.link_expected[m.from * self.n + to] += 1;
            self.hand_over(tick, m, host);
        }
    }
}

/// Asks `peer` for the ancestor closure of `missing`.
pub fn request_backfill(net: &mut Network, tick: u64, requester: usize, peer: usize, missing: BTreeSet<EventId>) {
    net.send(tick, requester, peer, Message::BackfillRequest { missing });
}

/// Sends `replica`'s forward extremities to every other replica.
pub fn gossip_extremities(net: &mut Network, tick: u64, replica: usize, extremities: &BTreeSet<EventId>) {
    for to in 0..net.n() {
        if to != replica {
            net.send(tick, replica, to, Message::Gossip { extremities: extremities.clone() });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{AddOperation, EventPayload, MegState, Vertex};
    use crate::ids::ReplicaId;
    use crate::monitor::{sign_envelope, SignatureScheme, SigningKey};

    struct Sink {
        states: Vec<LinkState>,
        known: Vec<BTreeSet<EventId>>,
        got: Vec<(u64, Delivery)>,
    }

    impl Sink {
        fn new(n: usize, root: EventId) -> Self {
            Self { states: vec![LinkState::Up; n], known: vec![BTreeSet::from([root]); n], got: Vec::new() }
        }
    }

    impl Host for Sink {
        fn link_state(&self, r: usize) -> LinkState {
            self.states[r]
        }
        fn knows(&self, r: usize, id: &EventId) -> bool {
            self.known[r].contains(id)
        }
        fn deliver(&mut self, _: &mut Network, tick: u64, d: Delivery) {
            if let Message::Op(env) = &d.msg {
                self.known[d.to].insert(env.op.id());
            }
            self.got.push((tick, d));
        }
    }

    fn chain(len: usize) -> (EventId, Vec<SignedEnvelope>) {
        let key = SigningKey::from_seed(SignatureScheme::KeyedHash, [1; 32]);
        let root = MegState::init("!r").root();
        let mut prev = root;
        let mut out = Vec::new();
        for i in 0..len {
            let v = Vertex::new(EventPayload::new("m", vec![i as u8]).unwrap(), vec![prev], ReplicaId([0; 32]), i as u64);
            prev = v.id;
            out.push(sign_envelope(AddOperation::new(v), &key));
        }
        (root, out)
    }

    fn run(net: &mut Network, host: &mut Sink, until: u64) {
        for t in 0..until {
            net.step(t, host);
        }
    }

    fn cfg(guarantee: DeliveryGuarantee, seed: u64) -> NetworkConfig {
        NetworkConfig { guarantee, delay: DelayRange { min: 1, max: 50 }, seed, ..NetworkConfig::default() }
    }

    #[test]
    fn empty_queue_delivers_nothing() {
        let (root, _) = chain(0);
        let mut net = Network::new(2, NetworkConfig::default());
        let mut host = Sink::new(2, root);
        net.step(0, &mut host);
        assert!(host.got.is_empty());
        assert!(net.is_idle());
    }

    #[test]
    fn reliable_delivers_exactly_once_despite_duplicates() {
        let (root, ops) = chain(20);
        let mut net = Network::new(3, NetworkConfig { duplicate: 0.5, ..cfg(DeliveryGuarantee::Reliable, 4) });
        let mut host = Sink::new(3, root);
        for env in &ops {
            net.broadcast(0, 0, env, 0..3);
        }
        run(&mut net, &mut host, 200);
        assert!(net.is_idle());
        assert_eq!(host.got.len(), 40);
        assert!(net.stats().duplicates_suppressed > 0);
        for r in 1..3 {
            let ids: BTreeSet<_> = host.got.iter().filter(|(_, d)| d.to == r).map(|(_, d)| d.msg.trace_id()).collect();
            assert_eq!(ids.len(), 20);
        }
    }

    #[test]
    fn causal_order_never_delivers_child_first() {
        let (root, ops) = chain(30);
        for seed in 0..5 {
            let mut net = Network::new(2, cfg(DeliveryGuarantee::CausalOrderReliable, seed));
            let mut host = Sink::new(2, root);
            for env in &ops {
                net.broadcast(0, 0, env, [1]);
            }
            run(&mut net, &mut host, 200);
            let order: Vec<_> = host.got.iter().map(|(_, d)| d.msg.trace_id()).collect();
            let expect: Vec<_> = ops.iter().map(|e| e.op.id().short()).collect();
            assert_eq!(order, expect);
        }
    }

    #[test]
    fn reliable_reorders_under_wide_delay() {
        let (root, ops) = chain(30);
        let mut net = Network::new(2, cfg(DeliveryGuarantee::Reliable, 1));
        let mut host = Sink::new(2, root);
        for env in &ops {
            net.broadcast(0, 0, env, [1]);
        }
        run(&mut net, &mut host, 200);
        let order: Vec<_> = host.got.iter().map(|(_, d)| d.msg.trace_id()).collect();
        let expect: Vec<_> = ops.iter().map(|e| e.op.id().short()).collect();
        assert_eq!(order.len(), 30);
        assert_ne!(order, expect);
    }

    #[test]
    fn partition_blocks_then_heals() {
        let (root, ops) = chain(1);
        let part = Partition { from: 0, until: 100, side: vec![0] };
        let mut net = Network::new(2, NetworkConfig { partitions: vec![part], ..NetworkConfig::default() });
        let mut host = Sink::new(2, root);
        net.broadcast(0, 0, &ops[0], [1]);
        run(&mut net, &mut host, 100);
        assert!(host.got.is_empty());
        run(&mut net, &mut host, 120);
        assert_eq!(host.got.len(), 1);
        assert!(host.got[0].0 >= 100);
    }

    #[test]
    fn best_effort_drops_across_partitions_and_on_crash() {
        let (root, ops) = chain(2);
        let part = Partition { from: 0, until: 100, side: vec![0] };
        let mut net = Network::new(
            3,
            NetworkConfig { guarantee: DeliveryGuarantee::BestEffort, partitions: vec![part], ..NetworkConfig::default() },
        );
        let mut host = Sink::new(3, root);
        net.broadcast(0, 0, &ops[0], [1]);
        net.broadcast(0, 1, &ops[1], [2]);
        net.crash(0, 1);
        run(&mut net, &mut host, 200);
        assert!(host.got.is_empty());
        assert_eq!(net.stats().dropped, 2);
        assert!(net.trace().iter().all(|l| l.split('\t').count() == 5));
    }

    #[test]
    fn best_effort_crash_mid_send_reaches_a_strict_subset() {
        let (root, ops) = chain(1);
        let n = 8;
        let mut net = Network::new(n, NetworkConfig { guarantee: DeliveryGuarantee::BestEffort, seed: 3, ..NetworkConfig::default() });
        let mut host = Sink::new(n, root);
        net.broadcast(0, 0, &ops[0], 0..n);
        for t in 0..5 {
            net.step(t, &mut host);
        }
        net.crash(5, 0);
        run(&mut net, &mut host, 50);
        assert!(!host.got.is_empty());
        assert!(host.got.len() < n - 1);
    }

    #[test]
    fn fixed_seed_gives_identical_trace() {
        let (root, ops) = chain(10);
        let go = || {
            let mut net = Network::new(3, NetworkConfig { duplicate: 0.2, ..cfg(DeliveryGuarantee::Reliable, 9) });
            let mut host = Sink::new(3, root);
            for env in &ops {
                net.broadcast(0, 0, env, 0..3);
            }
            run(&mut net, &mut host, 100);
            net.take_trace()
        };
        assert_eq!(go(), go());
    }
}

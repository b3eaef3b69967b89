//! Scenario runner: replicas, reference monitor and network under one clock.
//!
//! Each tick runs, in order: crash and recovery transitions, the client
//! round (if one starts at this tick), extremity gossip, network delivery,
//! and measurement. Everything is driven by ChaCha8 streams derived from the
//! scenario seed, so a `(spec, options)` pair always yields the same trace.

mod metrics;
mod spec;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use metrics::{check_eventual_delivery, check_strong_convergence, width_series_csv, Metrics, RunSummary, Verdict};
pub use spec::{RoundMode, ScenarioSpec, SimOptions, SpecError};

use crate::graph::{EventPayload, GraphError, IngestOutcome, PendingBuffer};
use crate::ids::{EventId, ReplicaId, StateDigest};
use crate::monitor::{DirectoryError, MembershipDirectory, SignedEnvelope, SigningKey};
use crate::net::{gossip_extremities, request_backfill, Behavior, DeliveryGuarantee, Delivery, Host, LinkState, Message, Network};
use crate::replica::Replica;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Directory(#[from] DirectoryError),
}

// The network draws from stream 0 of the seed.
const CONTROL_STREAM: u64 = u64::MAX;
const ADVERSARY_STREAM: u64 = u64::MAX - 1;
const KEY_STREAM: u64 = u64::MAX - 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Emits an empty-payload event when `replica` has more than `threshold`
/// forward extremities. The dummy references up to `cap` of them.
pub fn maybe_emit_dummy<R: Rng + ?Sized>(
    replica: &mut Replica,
    threshold: usize,
    cap: usize,
    rng: &mut R,
) -> Result<Option<SignedEnvelope>, GraphError> {
    if replica.width() <= threshold {
        return Ok(None);
    }
    replica.create_event(EventPayload::dummy(), cap, &BTreeSet::new(), rng).map(Some)
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<(Metrics, Verdict), SimError> {
    run_scenario_with(spec, &SimOptions::default())
}

pub fn run_scenario_with(spec: &ScenarioSpec, opts: &SimOptions) -> Result<(Metrics, Verdict), SimError> {
    spec.validate()?;
    if opts.round_interval == 0 {
        return Err(SpecError::ZeroInterval.into());
    }
    let mut net = Network::new(spec.n, spec.network_config());
    let mut world = World::new(spec, opts)?;
    world.seed_fork(&mut net, opts.initial_width)?;

    let n = spec.n;
    let horizon = spec.horizon;
    let mut width = vec![Vec::with_capacity(horizon as usize); n];
    let mut buffer = vec![Vec::with_capacity(horizon as usize); n];
    let mut round = 0;
    let mut equal_since = None;

    for tick in 0..horizon {
        world.apply_crashes(&mut net, tick);

        if round < spec.rounds && tick % opts.round_interval == 0 {
            world.m.round_widths.push(world.mean_correct_width());
            let outbox = world.client_round(tick, round)?;
            match opts.mode {
                RoundMode::FreeRunning => {
                    for (from, env, to) in outbox {
                        net.broadcast(tick, from, &env, to);
                    }
                }
                RoundMode::Lockstep => world.synchronize(&mut net, tick, outbox),
            }
            round += 1;
        }

        if opts.mode == RoundMode::FreeRunning {
            if spec.gossip_period > 0 && tick > 0 && tick % spec.gossip_period == 0 {
                world.gossip(&mut net, tick);
            }
            net.step(tick, &mut world);
        }

        for (r, rep) in world.replicas.iter().enumerate() {
            width[r].push(rep.width() as u32);
            buffer[r].push(rep.buffer().len() as u32);
        }
        if world.converged_now() {
            equal_since.get_or_insert(tick);
        } else {
            equal_since = None;
        }
    }

    world.m.round_widths.push(world.mean_correct_width());
    world.m.width = width;
    world.m.buffer = buffer;
    world.m.convergence_tick = equal_since;
    world.m.trace = net.take_trace();
    world.m.net = net.stats().clone();
    let quiet = world.m.last_progress + spec.grace;
    world.m.quiescent_at = (round == spec.rounds && quiet < horizon).then_some(quiet);
    Ok(world.finish())
}

struct World {
    spec: ScenarioSpec,
    opts: SimOptions,
    replicas: Vec<Replica>,
    dir: MembershipDirectory,
    correct: Vec<bool>,
    byzantine: Vec<bool>,
    down: Vec<bool>,
    dead: Vec<bool>,
    rngs: Vec<ChaCha8Rng>,
    control: ChaCha8Rng,
    adversary: ChaCha8Rng,
    m: Metrics,
}

type Outbox = Vec<(usize, SignedEnvelope, Vec<usize>)>;

impl World {
    fn new(spec: &ScenarioSpec, opts: &SimOptions) -> Result<Self, SimError> {
        let n = spec.n;
        let mut key_rng = stream(spec.seed, KEY_STREAM);
        let keys: Vec<SigningKey> = (0..n).map(|_| SigningKey::from_seed(opts.scheme, key_rng.gen())).collect();
        let dir = MembershipDirectory::new(keys.iter().map(|k| k.verifying_key()), spec.f)?;
        let replicas: Vec<Replica> = keys
            .into_iter()
            .map(|k| Replica::with_buffer(k, &opts.room_id, PendingBuffer::with_cap(opts.buffer_cap)))
            .collect();
        let correct: Vec<bool> = (0..n).map(|r| spec.adversary.is_correct(r)).collect();
        let byzantine = (0..n).map(|r| spec.adversary.is_byzantine(r)).collect();
        let m = Metrics { n, horizon: spec.horizon, correct: correct.clone(), ..Metrics::default() };
        Ok(Self {
            spec: spec.clone(),
            opts: opts.clone(),
            replicas,
            dir,
            correct,
            byzantine,
            down: vec![false; n],
            dead: vec![false; n],
            rngs: (0..n as u64).map(|r| stream(spec.seed, r + 1)).collect(),
            control: stream(spec.seed, CONTROL_STREAM),
            adversary: stream(spec.seed, ADVERSARY_STREAM),
            m,
        })
    }

    fn reachable(&self, r: usize) -> bool {
        !self.down[r] && !self.dead[r]
    }

    fn others(&self, r: usize) -> Vec<usize> {
        (0..self.spec.n).filter(|&x| x != r).collect()
    }

    fn mean_correct_width(&self) -> f64 {
        let ws: Vec<f64> = (0..self.spec.n).filter(|&r| self.correct[r]).map(|r| self.replicas[r].width() as f64).collect();
        if ws.is_empty() {
            0.0
        } else {
            ws.iter().sum::<f64>() / ws.len() as f64
        }
    }

    fn check_dag(&mut self, r: usize) {
        if self.opts.check_dag_every_op {
            let st = self.replicas[r].state();
            self.m.dag_checks += 1;
            if !st.is_rooted_dag() || st.get_extremities().is_empty() {
                self.m.dag_violations += 1;
            }
        }
    }

    /// Monitor plus ingest at replica `to`, with per-op invariant checks.
    fn receive(&mut self, to: usize, env: SignedEnvelope, tick: u64) -> Option<IngestOutcome> {
        let check = self.opts.check_dag_every_op;
        let (mut checks, mut violations) = (0u64, 0u64);
        let res = self.replicas[to].receive_observed(env, &self.dir, &mut |st, _| {
            if check {
                checks += 1;
                if !st.is_rooted_dag() || st.get_extremities().is_empty() {
                    violations += 1;
                }
            }
        });
        self.m.dag_checks += checks;
        self.m.dag_violations += violations;
        match res {
            Ok(out) => {
                if !out.applied.is_empty() {
                    self.m.last_progress = tick;
                }
                Some(out)
            }
            Err(_) => {
                self.m.rejections += 1;
                None
            }
        }
    }

    fn ask_backfill(&mut self, net: &mut Network, tick: u64, requester: usize, peer: usize) {
        if self.byzantine[requester] || requester == peer {
            return;
        }
        let missing = self.replicas[requester].missing();
        if !missing.is_empty() {
            request_backfill(net, tick, requester, peer, missing);
        }
    }

    fn seed_fork(&mut self, net: &mut Network, w: usize) -> Result<(), SimError> {
        if w < 2 {
            return Ok(());
        }
        let root = self.replicas[0].state().root();
        let mut envs = Vec::with_capacity(w);
        for i in 0..w {
            let payload = EventPayload::new("m.room.message", format!("fork/{i}").into_bytes()).expect("short payload");
            envs.push(self.replicas[0].create_with_parents(payload, vec![root])?);
        }
        self.check_dag(0);
        if self.correct[0] {
            self.m.correct_ops.extend(envs.iter().map(|e| e.op.id()));
        }
        for env in envs {
            for r in 1..self.spec.n {
                let id = env.op.id().short();
                net.log(0, "SEND", 0, r, &id);
                net.log(0, "DELIVER", 0, r, &id);
                self.receive(r, env.clone(), 0);
            }
        }
        Ok(())
    }

    fn apply_crashes(&mut self, net: &mut Network, tick: u64) {
        for c in self.spec.adversary.crashes.clone() {
            if c.at == tick {
                self.down[c.replica] = true;
                self.dead[c.replica] = c.recover.is_none();
                net.crash(tick, c.replica);
            }
            if c.recover == Some(tick) && c.at < tick {
                self.down[c.replica] = false;
            }
        }
    }

    fn message(r: usize, round: u64, i: u64) -> EventPayload {
        EventPayload::new("m.room.message", format!("{r}/{round}/{i}").into_bytes()).expect("short payload")
    }

    fn client_updates(&mut self, r: usize, round: u64, tick: u64, to: Vec<usize>, out: &mut Outbox) -> Result<(), SimError> {
        for i in 0..self.spec.updates_per_round {
            let env = self.replicas[r].create_event(Self::message(r, round, i), self.spec.d, &BTreeSet::new(), &mut self.rngs[r])?;
            if self.correct[r] {
                self.m.correct_ops.insert(env.op.id());
            }
            self.m.last_progress = tick;
            out.push((r, env, to.clone()));
        }
        Ok(())
    }

    fn client_round(&mut self, tick: u64, round: u64) -> Result<Outbox, SimError> {
        let mut out = Outbox::new();
        for r in 0..self.spec.n {
            if !self.reachable(r) {
                continue;
            }
            let behaviors = if self.byzantine[r] { self.spec.adversary.behaviors.clone() } else { Vec::new() };
            if behaviors.is_empty() {
                let to = self.others(r);
                self.client_updates(r, round, tick, to, &mut out)?;
            }
            for b in behaviors {
                match b {
                    Behavior::Equivocate { a, b } => {
                        let pa = EventPayload::new("m.room.message", format!("{r}/{round}/a").into_bytes()).expect("short");
                        let pb = EventPayload::new("m.room.message", format!("{r}/{round}/b").into_bytes()).expect("short");
                        let (e1, e2) = self.replicas[r].create_equivocation(pa, pb, self.spec.d, &mut self.rngs[r])?;
                        self.m.equivocations.push((e1.op.id(), e2.op.id()));
                        self.m.last_progress = tick;
                        out.push((r, e1, a));
                        out.push((r, e2, b));
                    }
                    Behavior::Withhold { targets } => {
                        let to = self.others(r).into_iter().filter(|x| !targets.contains(x)).collect();
                        self.client_updates(r, round, tick, to, &mut out)?;
                    }
                    Behavior::OrphanFlood { rate } => {
                        for i in 0..rate {
                            let ghost = EventId(self.adversary.gen());
                            let payload = EventPayload::new("m.room.message", format!("{r}/{round}/orphan/{i}").into_bytes())
                                .expect("short");
                            let env = self.replicas[r].forge_orphan(payload, vec![ghost]);
                            out.push((r, env, self.others(r)));
                        }
                    }
                }
            }
            self.check_dag(r);

            if self.spec.dummy_threshold > 0 && !self.byzantine[r] {
                let (threshold, cap) = (self.spec.dummy_threshold, self.spec.dummy_d);
                if let Some(env) = maybe_emit_dummy(&mut self.replicas[r], threshold, cap, &mut self.rngs[r])? {
                    self.m.dummies += 1;
                    if self.correct[r] {
                        self.m.correct_ops.insert(env.op.id());
                    }
                    self.m.last_progress = tick;
                    self.check_dag(r);
                    out.push((r, env, self.others(r)));
                }
            }
        }
        Ok(out)
    }

    /// Lockstep delivery: hand every envelope to its recipients, then pull
    /// missing ancestors from correct peers until nothing changes.
    fn synchronize(&mut self, net: &mut Network, tick: u64, outbox: Outbox) {
        for (from, env, to) in outbox {
            for r in to {
                if r == from || !self.reachable(r) {
                    continue;
                }
                let id = env.op.id().short();
                net.log(tick, "SEND", from, r, &id);
                net.log(tick, "DELIVER", from, r, &id);
                self.receive(r, env.clone(), tick);
            }
        }
        loop {
            let mut progressed = false;
            for r in 0..self.spec.n {
                if !self.reachable(r) {
                    continue;
                }
                for p in 0..self.spec.n {
                    let missing = self.replicas[r].missing();
                    if missing.is_empty() {
                        break;
                    }
                    if p == r || !self.reachable(p) || self.byzantine[p] {
                        continue;
                    }
                    for env in self.replicas[p].backfill_closure(&missing, self.opts.backfill_batch) {
                        if self.receive(r, env, tick).is_some_and(|o| !o.applied.is_empty()) {
                            progressed = true;
                        }
                    }
                }
            }
            if !progressed {
                break;
            }
        }
    }

    fn gossip(&mut self, net: &mut Network, tick: u64) {
        for r in 0..self.spec.n {
            if !self.reachable(r) || self.byzantine[r] {
                continue;
            }
            let ext = self.replicas[r].state().get_extremities().clone();
            gossip_extremities(net, tick, r, &ext);
            if self.spec.n > 1 && !self.replicas[r].missing().is_empty() {
                let mut peer = self.control.gen_range(0..self.spec.n - 1);
                if peer >= r {
                    peer += 1;
                }
                self.ask_backfill(net, tick, r, peer);
            }
        }
    }

    fn correct_indices(&self) -> Vec<usize> {
        (0..self.spec.n).filter(|&r| self.correct[r]).collect()
    }

    /// Checks strong convergence among correct replicas for this tick and
    /// reports whether they currently hold identical states.
    fn converged_now(&mut self) -> bool {
        let idx = self.correct_indices();
        let mut digests: Vec<Option<StateDigest>> = vec![None; self.spec.n];
        let mut all_equal = true;
        for (i, &a) in idx.iter().enumerate() {
            for &b in &idx[i + 1..] {
                if self.replicas[a].applied_set() != self.replicas[b].applied_set() {
                    all_equal = false;
                    continue;
                }
                let da = *digests[a].get_or_insert_with(|| self.replicas[a].state().digest());
                let db = *digests[b].get_or_insert_with(|| self.replicas[b].state().digest());
                if da != db {
                    self.m.convergence_violations += 1;
                    all_equal = false;
                }
            }
        }
        all_equal
    }

    fn finish(mut self) -> (Metrics, Verdict) {
        let n = self.spec.n;
        let correct_ids: BTreeSet<ReplicaId> = (0..n).filter(|&r| self.correct[r]).map(|r| self.replicas[r].id()).collect();
        for r in 0..n {
            let rep = &self.replicas[r];
            self.m.applied_counts.push(rep.applied().len());
            self.m.final_applied.push(rep.applied_set().clone());
            self.m.final_digests.push(rep.state().digest());
            self.m.pending_correct.push(rep.buffer().ops().filter(|op| correct_ids.contains(&op.vertex().sender)).count());
            self.m.non_concurrent_parents += rep.stats().non_concurrent_parents;
            self.m.cascade_violations += rep.stats().cascade_bound_violations;
        }

        let final_dag = self.replicas.iter().all(|r| r.state().is_rooted_dag() && !r.state().get_extremities().is_empty());
        let idx = self.correct_indices();
        let pairs: Vec<_> = idx.iter().map(|&r| (&self.m.final_applied[r], self.m.final_digests[r])).collect();
        let verdict = Verdict {
            strong_convergence: self.m.convergence_violations == 0 && check_strong_convergence(&pairs),
            eventual_delivery: check_eventual_delivery(&self.m),
            termination: self.m.cascade_violations == 0,
            dag_invariants: final_dag && self.m.dag_violations == 0,
        };
        (self.m, verdict)
    }
}

impl Host for World {
    fn link_state(&self, r: usize) -> LinkState {
        if self.dead[r] {
            LinkState::Dead
        } else if self.down[r] {
            LinkState::Down
        } else {
            LinkState::Up
        }
    }

    fn knows(&self, r: usize, id: &EventId) -> bool {
        self.replicas[r].state().lookup(id)
    }

    fn deliver(&mut self, net: &mut Network, tick: u64, d: Delivery) {
        let Delivery { from, to, msg } = d;
        match msg {
            Message::Op(env) => {
                if let Some(out) = self.receive(to, env, tick) {
                    if out.buffered {
                        if self.spec.guarantee == DeliveryGuarantee::CausalOrderReliable {
                            self.m.causal_buffered += 1;
                        }
                        self.ask_backfill(net, tick, to, from);
                    }
                }
            }
            Message::BackfillRequest { missing } => {
                if !self.byzantine[to] {
                    let ops = self.replicas[to].backfill_closure(&missing, self.opts.backfill_batch);
                    net.send(tick, to, from, Message::BackfillResponse { ops });
                }
            }
            Message::BackfillResponse { ops } => {
                let mut progressed = false;
                for env in ops {
                    if let Some(out) = self.receive(to, env, tick) {
                        progressed |= !out.applied.is_empty() || out.buffered;
                    }
                }
                if progressed {
                    self.ask_backfill(net, tick, to, from);
                }
            }
            Message::Gossip { extremities } => {
                if self.byzantine[to] {
                    return;
                }
                let unknown = self.replicas[to].unknown_of(&extremities);
                if !unknown.is_empty() {
                    request_backfill(net, tick, to, from, unknown);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{AdversarySpec, Crash, DelayRange, Partition};

    fn happy(n: usize) -> ScenarioSpec {
        ScenarioSpec { n, rounds: 10, updates_per_round: 1, horizon: 400, ..ScenarioSpec::default() }
    }

    #[test]
    fn reliable_happy_path_is_consistent() {
        let (m, v) = run_scenario(&happy(3)).unwrap();
        assert!(v.all(), "{v:?}");
        assert_eq!(m.correct_ops.len(), 30);
        assert_eq!(m.applied_counts, vec![30, 30, 30]);
        assert!(m.convergence_tick.is_some());
        assert_eq!(m.width[0].len(), 400);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let spec = ScenarioSpec { delay: DelayRange { min: 1, max: 40 }, ..happy(4) };
        let (a, _) = run_scenario(&spec).unwrap();
        let (b, _) = run_scenario(&spec).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(width_series_csv(&a), width_series_csv(&b));
        let (c, _) = run_scenario(&ScenarioSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn causal_order_never_buffers() {
        let spec = ScenarioSpec {
            guarantee: DeliveryGuarantee::CausalOrderReliable,
            delay: DelayRange { min: 1, max: 60 },
            updates_per_round: 2,
            ..happy(4)
        };
        let (m, v) = run_scenario(&spec).unwrap();
        assert!(v.all(), "{v:?}");
        assert_eq!(m.causal_buffered, 0);
        assert!(m.buffer.iter().all(|s| s.iter().all(|&b| b == 0)));
    }

    #[test]
    fn best_effort_sender_crash_without_gossip_breaks_delivery() {
        // The sender crashes right after its last broadcast; its outbox is lost.
        let spec = ScenarioSpec {
            n: 2,
            guarantee: DeliveryGuarantee::BestEffort,
            rounds: 1,
            adversary: AdversarySpec { crashes: vec![Crash { replica: 0, at: 1, recover: Some(5) }], ..AdversarySpec::default() },
            horizon: 200,
            ..ScenarioSpec::default()
        };
        let (m, v) = run_scenario(&spec).unwrap();
        assert!(!v.eventual_delivery);
        assert!(v.strong_convergence && v.termination && v.dag_invariants);
        assert_ne!(m.final_applied[0], m.final_applied[1]);
    }

    #[test]
    fn partitions_heal_under_reliable() {
        let spec = ScenarioSpec {
            n: 4,
            partitions: vec![Partition { from: 0, until: 150, side: vec![0, 1] }],
            horizon: 400,
            ..happy(4)
        };
        let (m, v) = run_scenario(&spec).unwrap();
        assert!(v.all(), "{v:?}");
        assert!(m.convergence_tick.unwrap() >= 150);
    }

    #[test]
    fn orphan_flood_does_not_affect_correct_delivery() {
        let spec = ScenarioSpec {
            n: 4,
            f: 1,
            adversary: AdversarySpec {
                byzantine: vec![3],
                behaviors: vec![Behavior::OrphanFlood { rate: 5 }],
                crashes: vec![],
            },
            ..happy(4)
        };
        let (m, v) = run_scenario(&spec).unwrap();
        assert!(v.all(), "{v:?}");
        assert!(m.pending_correct.iter().all(|&p| p == 0));
        assert!(m.buffer[0].last().copied().unwrap() > 0);
    }

    #[test]
    fn dummy_threshold_boundary() {
        let mut rep = Replica::new(SigningKey::from_seed(Default::default(), [1; 32]), "!r");
        let root = rep.state().root();
        for i in 0..10 {
            rep.create_with_parents(EventPayload::new("m", vec![i]).unwrap(), vec![root]).unwrap();
        }
        let mut rng = stream(0, 1);
        assert_eq!(rep.width(), 10);
        assert!(maybe_emit_dummy(&mut rep, 10, 10, &mut rng).unwrap().is_none());
        rep.create_with_parents(EventPayload::new("m", vec![10]).unwrap(), vec![root]).unwrap();
        let env = maybe_emit_dummy(&mut rep, 10, 10, &mut rng).unwrap().unwrap();
        assert!(env.op.parents().len() <= 10);
        assert!(env.op.vertex().payload.body.is_empty());
        assert_eq!(rep.width(), 2);
    }

    #[test]
    fn lockstep_rounds_produce_synchronized_widths() {
        let spec = ScenarioSpec { n: 5, d: 2, rounds: 20, horizon: 250, ..ScenarioSpec::default() };
        let opts = SimOptions { mode: RoundMode::Lockstep, initial_width: 30, ..SimOptions::default() };
        let (m, v) = run_scenario_with(&spec, &opts).unwrap();
        assert!(v.all(), "{v:?}");
        assert_eq!(m.round_widths.len(), 21);
        assert_eq!(m.round_widths[0], 30.0);
        for t in 0..250 {
            let w0 = m.width[0][t];
            assert!(m.width.iter().all(|s| s[t] == w0));
        }
        assert!(m.round_widths.last().unwrap() < &30.0);
    }
}

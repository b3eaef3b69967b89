//! A replica: signing key, event graph, pending buffer and the envelopes it
//! can serve to peers during backfill.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::graph::{generate_add, ingest_observed, AddOperation, EventPayload, GraphError, IngestOutcome, MegState, PendingBuffer, Vertex};
use crate::ids::{EventId, ReplicaId};
use crate::monitor::{sign_envelope, verify_envelope, MembershipDirectory, SignedEnvelope, SigningKey, VerificationError};

/// Default number of envelopes returned for one backfill request.
pub const DEFAULT_BACKFILL_LIMIT: usize = 100;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplicaStats {
    pub rejected: BTreeMap<VerificationError, u64>,
    /// Applied ops whose parents were not pairwise concurrent.
    pub non_concurrent_parents: u64,
    pub duplicates: u64,
    pub evicted: u64,
    /// Longest cascade seen in a single ingest.
    pub max_cascade: usize,
    /// Ingest cascades longer than the buffer size plus one.
    pub cascade_bound_violations: u64,
}

#[derive(Debug, Clone)]
pub struct Replica {
    key: SigningKey,
    id: ReplicaId,
    state: MegState,
    buffer: PendingBuffer,
    envelopes: BTreeMap<EventId, SignedEnvelope>,
    applied: Vec<EventId>,
    applied_set: BTreeSet<EventId>,
    next_seq: u64,
    stats: ReplicaStats,
}

impl Replica {
    pub fn new(key: SigningKey, room_id: &str) -> Self {
        Self::with_buffer(key, room_id, PendingBuffer::new())
    }

    pub fn with_buffer(key: SigningKey, room_id: &str, buffer: PendingBuffer) -> Self {
        let id = key.replica_id();
        Self {
            key,
            id,
            state: MegState::init(room_id),
            buffer,
            envelopes: BTreeMap::new(),
            applied: Vec::new(),
            applied_set: BTreeSet::new(),
            next_seq: 1,
            stats: ReplicaStats::default(),
        }
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn key(&self) -> &SigningKey {
        &self.key
    }

    pub fn state(&self) -> &MegState {
        &self.state
    }

    pub fn buffer(&self) -> &PendingBuffer {
        &self.buffer
    }

    pub fn stats(&self) -> &ReplicaStats {
        &self.stats
    }

    /// Ids in the order they were applied (the root is not included).
    pub fn applied(&self) -> &[EventId] {
        &self.applied
    }

    pub fn applied_set(&self) -> &BTreeSet<EventId> {
        &self.applied_set
    }

    pub fn has_applied(&self, id: &EventId) -> bool {
        self.applied_set.contains(id)
    }

    pub fn envelope(&self, id: &EventId) -> Option<&SignedEnvelope> {
        self.envelopes.get(id)
    }

    pub fn width(&self) -> usize {
        self.state.get_extremities().len()
    }

    fn take_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    /// Generates, signs and locally applies a new event. The returned
    /// envelope is what gets broadcast to the other replicas.
    pub fn create_event<R: Rng + ?Sized>(
        &mut self,
        payload: EventPayload,
        cap: usize,
        required: &BTreeSet<EventId>,
        rng: &mut R,
    ) -> Result<SignedEnvelope, GraphError> {
        let seq = self.next_seq;
        let op = generate_add(&self.state, payload, cap, required, rng, self.id, seq)?;
        self.next_seq += 1;
        let env = sign_envelope(op, &self.key);
        self.ingest_envelope(env.clone(), &mut |_, _| {});
        Ok(env)
    }

    /// Two signed events with the same sequence number and parents but
    /// different payloads. Both are applied locally.
    pub fn create_equivocation<R: Rng + ?Sized>(
        &mut self,
        a: EventPayload,
        b: EventPayload,
        cap: usize,
        rng: &mut R,
    ) -> Result<(SignedEnvelope, SignedEnvelope), GraphError> {
        let seq = self.take_seq();
        let first = generate_add(&self.state, a, cap, &BTreeSet::new(), rng, self.id, seq)?;
        let second = AddOperation::new(Vertex::new(b, first.parents().to_vec(), self.id, seq));
        let e1 = sign_envelope(first, &self.key);
        let e2 = sign_envelope(second, &self.key);
        self.ingest_envelope(e1.clone(), &mut |_, _| {});
        self.ingest_envelope(e2.clone(), &mut |_, _| {});
        Ok((e1, e2))
    }

    /// Signs and applies an event with explicitly chosen parents, all of
    /// which must already be applied.
    pub fn create_with_parents(&mut self, payload: EventPayload, parents: Vec<EventId>) -> Result<SignedEnvelope, GraphError> {
        if let Some(p) = parents.iter().find(|p| !self.state.lookup(p)) {
            return Err(GraphError::UnknownRequiredParent(*p));
        }
        let seq = self.take_seq();
        let env = sign_envelope(AddOperation::new(Vertex::new(payload, parents, self.id, seq)), &self.key);
        self.ingest_envelope(env.clone(), &mut |_, _| {});
        Ok(env)
    }

    /// Signs an event whose parents are arbitrary ids, without applying it.
    /// Used to model orphan floods.
    pub fn forge_orphan(&mut self, payload: EventPayload, parents: Vec<EventId>) -> SignedEnvelope {
        let seq = self.take_seq();
        sign_envelope(AddOperation::new(Vertex::new(payload, parents, self.id, seq)), &self.key)
    }

    /// Entry point for every inbound envelope: reference monitor first,
    /// then ingest.
    pub fn receive(&mut self, env: SignedEnvelope, dir: &MembershipDirectory) -> Result<IngestOutcome, VerificationError> {
        self.receive_observed(env, dir, &mut |_, _| {})
    }

    pub fn receive_observed(
        &mut self,
        env: SignedEnvelope,
        dir: &MembershipDirectory,
        observe: &mut dyn FnMut(&MegState, &EventId),
    ) -> Result<IngestOutcome, VerificationError> {
        if let Err(e) = verify_envelope(&env, dir) {
            *self.stats.rejected.entry(e).or_default() += 1;
            return Err(e);
        }
        Ok(self.ingest_envelope(env, observe))
    }

    fn ingest_envelope(&mut self, env: SignedEnvelope, observe: &mut dyn FnMut(&MegState, &EventId)) -> IngestOutcome {
        let id = env.op.id();
        let op = env.op.clone();
        if !self.envelopes.contains_key(&id) && !self.state.lookup(&id) {
            self.envelopes.insert(id, env);
        }
        let before = self.buffer.len();
        let mut flagged = 0u64;
        let out = ingest_observed(&mut self.state, &mut self.buffer, op, |state, applied| {
            if let Some(v) = state.vertex(applied) {
                if !state.parents_are_concurrent(&v.parents) {
                    flagged += 1;
                }
            }
            observe(state, applied);
        });
        self.stats.non_concurrent_parents += flagged;
        if out.duplicate {
            self.stats.duplicates += 1;
        }
        for e in &out.evicted {
            self.envelopes.remove(e);
        }
        self.stats.evicted += out.evicted.len() as u64;
        self.stats.max_cascade = self.stats.max_cascade.max(out.applied.len());
        if out.applied.len() > before + 1 {
            self.stats.cascade_bound_violations += 1;
        }
        for a in &out.applied {
            self.applied.push(*a);
            self.applied_set.insert(*a);
        }
        out
    }

    /// Parent ids this replica is waiting for.
    pub fn missing(&self) -> BTreeSet<EventId> {
        self.buffer.missing_parents(&self.state)
    }

    /// Envelopes for the ancestor closure of `missing`, oldest first, at
    /// most `limit` of them. Unknown ids are skipped.
    pub fn backfill_closure(&self, missing: &BTreeSet<EventId>, limit: usize) -> Vec<SignedEnvelope> {
        let mut ids = self.state.ancestor_closure(missing, limit);
        ids.reverse();
        ids.iter().filter_map(|id| self.envelopes.get(id).cloned()).collect()
    }

    /// Extremities this replica has not applied and is not holding.
    pub fn unknown_of(&self, ids: &BTreeSet<EventId>) -> BTreeSet<EventId> {
        ids.iter().filter(|id| !self.state.lookup(id) && !self.buffer.contains(id)).copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::monitor::SignatureScheme;

    fn setup(n: u8) -> (Vec<Replica>, MembershipDirectory) {
        let keys: Vec<_> = (0..n).map(|i| SigningKey::from_seed(SignatureScheme::KeyedHash, [i + 1; 32])).collect();
        let dir = MembershipDirectory::new(keys.iter().map(|k| k.verifying_key()), 0).unwrap();
        (keys.into_iter().map(|k| Replica::new(k, "!r")).collect(), dir)
    }

    fn msg(s: &str) -> EventPayload {
        EventPayload::new("m.room.message", s.as_bytes().to_vec()).unwrap()
    }

    #[test]
    fn create_applies_locally_and_peers_accept() {
        let (mut rs, dir) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let env = rs[0].create_event(msg("a"), 10, &BTreeSet::new(), &mut rng).unwrap();
        assert!(rs[0].has_applied(&env.op.id()));
        let out = rs[1].receive(env.clone(), &dir).unwrap();
        assert_eq!(out.applied, vec![env.op.id()]);
        assert_eq!(rs[0].state().digest(), rs[1].state().digest());
        assert!(rs[1].receive(env, &dir).unwrap().duplicate);
    }

    #[test]
    fn rejected_envelopes_never_reach_the_graph() {
        let (mut rs, dir) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut env = rs[0].create_event(msg("a"), 10, &BTreeSet::new(), &mut rng).unwrap();
        env.signature[0] ^= 1;
        assert_eq!(rs[1].receive(env.clone(), &dir), Err(VerificationError::BadSignature));
        assert!(!rs[1].state().lookup(&env.op.id()));
        assert_eq!(rs[1].stats().rejected[&VerificationError::BadSignature], 1);
    }

    #[test]
    fn backfill_delivers_ancestors() {
        let (mut rs, dir) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut last = None;
        for i in 0..5 {
            last = Some(rs[0].create_event(msg(&i.to_string()), 10, &BTreeSet::new(), &mut rng).unwrap());
        }
        let last = last.unwrap();
        assert!(rs[1].receive(last.clone(), &dir).unwrap().buffered);
        let missing = rs[1].missing();
        assert_eq!(missing.len(), 1);
        let resp = rs[0].backfill_closure(&missing, DEFAULT_BACKFILL_LIMIT);
        assert_eq!(resp.len(), 4);
        for env in resp {
            rs[1].receive(env, &dir).unwrap();
        }
        assert!(rs[1].buffer().is_empty());
        assert_eq!(rs[0].state().digest(), rs[1].state().digest());
    }

    #[test]
    fn equivocation_yields_two_valid_envelopes() {
        let (mut rs, dir) = setup(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = rs[0].create_equivocation(msg("a"), msg("b"), 10, &mut rng).unwrap();
        assert_ne!(a.op.id(), b.op.id());
        assert_eq!(a.op.vertex().seq, b.op.vertex().seq);
        rs[1].receive(a.clone(), &dir).unwrap();
        rs[2].receive(b.clone(), &dir).unwrap();
        rs[1].receive(b, &dir).unwrap();
        rs[2].receive(a, &dir).unwrap();
        assert_eq!(rs[1].state().digest(), rs[2].state().digest());
        assert_eq!(rs[0].state().digest(), rs[1].state().digest());
        assert_eq!(rs[1].width(), 2);
    }
}

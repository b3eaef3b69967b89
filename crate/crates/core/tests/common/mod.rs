#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use meg::graph::{ingest_observed, AddOperation, EventPayload, MegState, PendingBuffer};
use meg::ids::{EventId, StateDigest};
use meg::monitor::{MembershipDirectory, SignatureScheme, SignedEnvelope, SigningKey};
use meg::replica::Replica;

pub const ROOM: &str = "!test:example.org";

pub fn keys(n: usize) -> Vec<SigningKey> {
    (0..n).map(|i| SigningKey::from_seed(SignatureScheme::KeyedHash, [i as u8 + 1; 32])).collect()
}

pub fn directory(keys: &[SigningKey], f: usize) -> MembershipDirectory {
    MembershipDirectory::new(keys.iter().map(SigningKey::verifying_key), f).unwrap()
}

/// `count` signed operations from `replicas` replicas that learn about each
/// other's events late and in random order, so the set has real concurrency.
pub fn envelope_set(seed: u64, replicas: usize, count: usize, cap: usize) -> Vec<SignedEnvelope> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys = keys(replicas);
    let dir = directory(&keys, 0);
    let mut reps: Vec<Replica> = keys.into_iter().map(|k| Replica::new(k, ROOM)).collect();
    let mut inbox: Vec<Vec<SignedEnvelope>> = vec![Vec::new(); replicas];
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let r = rng.gen_range(0..replicas);
        let body = format!("{seed}/{}", out.len()).into_bytes();
        let env = reps[r]
            .create_event(EventPayload::new("m.room.message", body).unwrap(), cap, &BTreeSet::new(), &mut rng)
            .unwrap();
        for (i, q) in inbox.iter_mut().enumerate() {
            if i != r {
                q.push(env.clone());
            }
        }
        let t = rng.gen_range(0..replicas);
        while !inbox[t].is_empty() && rng.gen_bool(0.5) {
            let i = rng.gen_range(0..inbox[t].len());
            let e = inbox[t].swap_remove(i);
            reps[t].receive(e, &dir).unwrap();
        }
        out.push(env);
    }
    out
}

pub fn op_set(seed: u64, replicas: usize, count: usize, cap: usize) -> Vec<AddOperation> {
    envelope_set(seed, replicas, count, cap).into_iter().map(|e| e.op).collect()
}

#[derive(Debug)]
pub struct Replayed {
    pub state: MegState,
    pub digest: StateDigest,
    pub pending: usize,
    /// Applications after which the state was not a rooted DAG or had no
    /// extremity.
    pub lemma_failures: usize,
    pub applications: usize,
    /// Ingest calls that applied more ops than the buffer held plus one.
    pub cascade_violations: usize,
}

/// Delivers `ops` in the given order to a fresh state, checking the DAG
/// invariants after every single application.
pub fn replay<'a>(ops: impl IntoIterator<Item = &'a AddOperation>) -> Replayed {
    let mut state = MegState::init(ROOM);
    let mut buf = PendingBuffer::new();
    let mut lemma_failures = 0;
    let mut applications = 0;
    let mut cascade_violations = 0;
    for op in ops {
        let before = buf.len();
        let out = ingest_observed(&mut state, &mut buf, op.clone(), |s, _| {
            applications += 1;
            if !s.is_rooted_dag() || s.get_extremities().is_empty() {
                lemma_failures += 1;
            }
        });
        if out.applied.len() > before + 1 {
            cascade_violations += 1;
        }
    }
    let digest = state.digest();
    Replayed { state, digest, pending: buf.len(), lemma_failures, applications, cascade_violations }
}

/// All orderings of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..left.len() {
            let x = left.remove(i);
            prefix.push(x);
            go(prefix, left, out);
            prefix.pop();
            left.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

/// Ops of `ops` whose parents are all in `state` and which are not applied.
pub fn ready(state: &MegState, ops: &[AddOperation]) -> Vec<AddOperation> {
    ops.iter().filter(|o| !state.lookup(&o.id()) && state.precondition_holds(o)).cloned().collect()
}

pub fn ids(ops: &[AddOperation]) -> BTreeSet<EventId> {
    ops.iter().map(AddOperation::id).collect()
}

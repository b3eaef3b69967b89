//! Quick self checks behind `meg verify`. The acceptance suite in the test
//! tree is the thorough version.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use meg::graph::{ingest, AddOperation, EventPayload, MegState, PendingBuffer};
use meg::monitor::{MembershipDirectory, SignatureScheme, SignedEnvelope, SigningKey};
use meg::net::{DelayRange, DeliveryGuarantee};
use meg::replica::Replica;
use meg::sim::{run_scenario, ScenarioSpec};
use meg::urn::{
    brute_force_pmf, expected_removed, fixed_point, pmf_removed, pmf_removed_exact, variance_removed,
    variance_removed_recursive,
};

type Check = (&'static str, bool);

const ROOM: &str = "!verify:example.org";

pub fn urn() -> Vec<Check> {
    let mut exact = true;
    for u in 3..=6 {
        for d in 2..=3u64.min(u - 1) {
            for k in 1..=3 {
                exact &= pmf_removed_exact(u, d, k).ok() == brute_force_pmf(u, d, k).ok();
            }
        }
    }

    let triples = [(4, 2, 2), (6, 2, 3), (9, 3, 4), (20, 5, 10), (50, 3, 7)];
    let moments = triples.iter().all(|&(u, d, k)| {
        let pmf = pmf_removed(u, d, k).unwrap();
        (pmf.mean() - expected_removed(u, d, k).unwrap()).abs() < 1e-9
            && (pmf.variance() - variance_removed(u, d, k).unwrap()).abs() < 1e-9
    });
    let recursion = triples
        .iter()
        .all(|&(u, d, k)| (variance_removed(u, d, k).unwrap() - variance_removed_recursive(u, d, k).unwrap()).abs() < 1e-12);
    let fixed = [(10, 11), (15, 16), (20, 21)].iter().all(|&(k, want)| fixed_point(5, k) == Ok(want));

    vec![
        ("urn: recursive pmf equals enumeration", exact),
        ("urn: pmf moments equal closed forms", moments),
        ("urn: variance closed form equals recursion", recursion),
        ("urn: fixed points for d = 5", fixed),
    ]
}

/// Operations from three replicas that see each other's events late and in
/// random order.
fn interleaved_ops(count: usize, rng: &mut ChaCha8Rng) -> Vec<AddOperation> {
    let keys: Vec<SigningKey> = (0..3u8).map(|i| SigningKey::from_seed(SignatureScheme::KeyedHash, [i + 1; 32])).collect();
    let dir = MembershipDirectory::new(keys.iter().map(SigningKey::verifying_key), 0).unwrap();
    let mut replicas: Vec<Replica> = keys.into_iter().map(|k| Replica::new(k, ROOM)).collect();
    let mut inbox: Vec<Vec<SignedEnvelope>> = vec![Vec::new(); replicas.len()];
    let mut ops = Vec::new();
    while ops.len() < count {
        let r = rng.gen_range(0..replicas.len());
        let body = format!("op{}", ops.len()).into_bytes();
        let payload = EventPayload::new("m.room.message", body).unwrap();
        let env = replicas[r].create_event(payload, 3, &BTreeSet::new(), rng).unwrap();
        for (i, q) in inbox.iter_mut().enumerate() {
            if i != r {
                q.push(env.clone());
            }
        }
        let target = rng.gen_range(0..replicas.len());
        let q = &mut inbox[target];
        while !q.is_empty() && rng.gen_bool(0.6) {
            let env = q.swap_remove(rng.gen_range(0..q.len()));
            let _ = replicas[target].receive(env, &dir);
        }
        ops.push(env.op);
    }
    ops
}

fn replay(ops: &[AddOperation]) -> Option<MegState> {
    let mut state = MegState::init(ROOM);
    let mut buf = PendingBuffer::new();
    for op in ops {
        ingest(&mut state, &mut buf, op.clone());
        if !state.is_rooted_dag() || state.get_extremities().is_empty() {
            return None;
        }
    }
    buf.is_empty().then_some(state)
}

pub fn crdt() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ops = interleaved_ops(20, &mut rng);
    let reference = replay(&ops).map(|s| s.digest());
    let mut converge = reference.is_some();
    for _ in 0..200 {
        let mut shuffled = ops.clone();
        shuffled.shuffle(&mut rng);
        converge &= replay(&shuffled).map(|s| s.digest()) == reference;
    }
    let doubled: Vec<AddOperation> = ops.iter().flat_map(|op| [op.clone(), op.clone()]).collect();
    let idempotent = replay(&doubled).map(|s| s.digest()) == reference;
    vec![("crdt: every delivery order gives the same digest", converge), ("crdt: double delivery is harmless", idempotent)]
}

pub fn sim() -> Vec<Check> {
    let happy = ScenarioSpec { seed: 7, ..ScenarioSpec::default() };
    let reorder = ScenarioSpec {
        n: 4,
        delay: DelayRange { min: 1, max: 100 },
        guarantee: DeliveryGuarantee::Reliable,
        horizon: 1000,
        seed: 3,
        ..ScenarioSpec::default()
    };
    let passes = |spec: &ScenarioSpec| run_scenario(spec).map(|(_, v)| v.all()).unwrap_or(false);
    vec![("sim: reliable three-replica run", passes(&happy)), ("sim: heavy reordering", passes(&reorder))]
}

//! Parent selection and the side-effect free generator.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;

use super::{AddOperation, EventPayload, GraphError, MegState, Vertex};
use crate::ids::{EventId, ReplicaId};

/// Picks the parents of a new event.
///
/// Every id in `required` is kept even when that exceeds `cap`; the cap
/// only limits how many further extremities are added. Required ids come
/// first in ascending order, followed by the sampled extremities in
/// ascending order.
pub fn select_parents<R: Rng + ?Sized>(
    extremities: &BTreeSet<EventId>,
    cap: usize,
    required: &BTreeSet<EventId>,
    rng: &mut R,
) -> Result<Vec<EventId>, GraphError> {
    if extremities.is_empty() {
        return Err(GraphError::EmptyExtremities);
    }
    if cap < 2 {
        return Err(GraphError::InvalidCap(cap));
    }

    let mut out: Vec<EventId> = required.iter().copied().collect();
    let rest: Vec<EventId> = extremities.difference(required).copied().collect();
    let room = cap.saturating_sub(out.len());
    if rest.len() <= room {
        out.extend(rest);
        return Ok(out);
    }
    let mut picked: Vec<EventId> = sample(rng, rest.len(), room).into_iter().map(|i| rest[i]).collect();
    picked.sort();
    out.extend(picked);
    Ok(out)
}

/// Builds an add operation on top of the current extremities without
/// touching `state`.
pub fn generate_add<R: Rng + ?Sized>(
    state: &MegState,
    payload: EventPayload,
    cap: usize,
    required: &BTreeSet<EventId>,
    rng: &mut R,
    sender: ReplicaId,
    seq: u64,
) -> Result<AddOperation, GraphError> {
    if let Some(unknown) = required.iter().find(|id| !state.lookup(id)) {
        return Err(GraphError::UnknownRequiredParent(*unknown));
    }
    let parents = select_parents(state.get_extremities(), cap, required, rng)?;
    Ok(AddOperation::new(Vertex::new(payload, parents, sender, seq)))
}

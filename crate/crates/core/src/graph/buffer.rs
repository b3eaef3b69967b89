//! Holding area for operations whose parents have not arrived yet.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{AddOperation, GraphError, MegState};
use crate::ids::EventId;

/// Default number of operations a buffer holds before evicting the oldest.
pub const DEFAULT_BUFFER_CAP: usize = 10_000;

#[derive(Debug, Clone)]
pub struct PendingBuffer {
    ops: BTreeMap<EventId, AddOperation>,
    /// missing parent -> ids of buffered ops that reference it
    waiting: BTreeMap<EventId, BTreeSet<EventId>>,
    arrival: VecDeque<EventId>,
    cap: usize,
}

impl Default for PendingBuffer {
    fn default() -> Self {
        Self::with_cap(DEFAULT_BUFFER_CAP)
    }
}

impl PendingBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// A buffer that evicts its oldest entry once it holds more than `cap`
    /// operations. `cap` is clamped to at least 1.
    pub fn with_cap(cap: usize) -> Self {
        Self { ops: BTreeMap::new(), waiting: BTreeMap::new(), arrival: VecDeque::new(), cap: cap.max(1) }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn contains(&self, id: &EventId) -> bool {
        self.ops.contains_key(id)
    }

    pub fn get(&self, id: &EventId) -> Option<&AddOperation> {
        self.ops.get(id)
    }

    pub fn ops(&self) -> impl Iterator<Item = &AddOperation> {
        self.ops.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &EventId> {
        self.ops.keys()
    }

    /// Parent ids referenced by buffered ops that are neither applied in
    /// `state` nor buffered themselves. These are what backfill must fetch.
    pub fn missing_parents(&self, state: &MegState) -> BTreeSet<EventId> {
        self.waiting
            .keys()
            .filter(|id| !state.lookup(id) && !self.ops.contains_key(id))
            .copied()
            .collect()
    }

    fn insert(&mut self, op: AddOperation, missing: &[EventId]) -> Vec<EventId> {
        let id = op.id();
        for m in missing {
            self.waiting.entry(*m).or_default().insert(id);
        }
        self.ops.insert(id, op);
        self.arrival.push_back(id);

        let mut evicted = Vec::new();
        while self.ops.len() > self.cap {
            let Some(old) = self.arrival.pop_front() else { break };
            if let Some(op) = self.ops.remove(&old) {
                self.unlink(&op);
                evicted.push(old);
            }
        }
        evicted
    }

    fn unlink(&mut self, op: &AddOperation) {
        for p in op.parents() {
            if let Some(set) = self.waiting.get_mut(p) {
                set.remove(&op.id());
                if set.is_empty() {
                    self.waiting.remove(p);
                }
            }
        }
    }

    /// Removes and returns the buffered ops that were waiting on `parent`
    /// and now satisfy the precondition.
    fn wake(&mut self, parent: &EventId, state: &MegState) -> Vec<EventId> {
        let Some(waiters) = self.waiting.remove(parent) else { return Vec::new() };
        waiters
            .into_iter()
            .filter(|id| self.ops.get(id).is_some_and(|op| state.precondition_holds(op)))
            .collect()
    }

    fn take(&mut self, id: &EventId) -> Option<AddOperation> {
        let op = self.ops.remove(id)?;
        self.unlink(&op);
        Some(op)
    }
}

/// Result of a single [`ingest`] call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestOutcome {
    /// Ids applied during this call, in application order.
    pub applied: Vec<EventId>,
    /// The op could not be applied yet and is now buffered.
    pub buffered: bool,
    /// Ops dropped from the buffer to respect its cap.
    pub evicted: Vec<EventId>,
    /// The op was already applied or already buffered.
    pub duplicate: bool,
    /// The effector refused the op outright.
    pub rejected: Option<GraphError>,
}

/// Applies `op` if its parents are present, then drains every buffered op
/// that became applicable, smallest id first. Otherwise buffers `op` under
/// its missing parents.
pub fn ingest(state: &mut MegState, buffer: &mut PendingBuffer, op: AddOperation) -> IngestOutcome {
    ingest_observed(state, buffer, op, |_, _| {})
}

/// [`ingest`] with a callback invoked after every single application.
pub fn ingest_observed<F>(state: &mut MegState, buffer: &mut PendingBuffer, op: AddOperation, mut observe: F) -> IngestOutcome
where
    F: FnMut(&MegState, &EventId),
{
    let mut out = IngestOutcome::default();
    let id = op.id();
    if state.lookup(&id) || buffer.contains(&id) {
        out.duplicate = true;
        return out;
    }
    if op.parents().is_empty() {
        out.rejected = Some(GraphError::EmptyParents(id));
        return out;
    }
    let missing = state.missing_parents(&op);
    if !missing.is_empty() {
        out.buffered = true;
        out.evicted = buffer.insert(op, &missing);
        return out;
    }

    let mut ready = BTreeSet::new();
    match state.apply_add(&op) {
        Ok(_) => {
            out.applied.push(id);
            observe(state, &id);
            ready.extend(buffer.wake(&id, state));
        }
        Err(e) => {
            out.rejected = Some(e);
            return out;
        }
    }

    while let Some(next) = ready.pop_first() {
        let Some(op) = buffer.take(&next) else { continue };
        match state.apply_add(&op) {
            Ok(true) => {
                out.applied.push(next);
                observe(state, &next);
                ready.extend(buffer.wake(&next, state));
            }
            Ok(false) => {}
            Err(e) => out.rejected = Some(e),
        }
    }
    out
}

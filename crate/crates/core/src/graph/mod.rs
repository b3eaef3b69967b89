//! The event graph: a rooted DAG replicated as an operation-based CRDT.
//!
//! Every replica holds a [`MegState`]. New events are produced by the side-effect
//! free generator [`generate_add`], which references the current forward
//! extremities as parents; the resulting [`AddOperation`] is broadcast and
//! applied everywhere by the effector [`MegState::apply_add`] once all of
//! its parents are present locally. Operations that arrive early wait in a
//! [`PendingBuffer`] until [`ingest`] can apply them.

mod buffer;
mod encoding;
mod select;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

pub use buffer::{ingest, ingest_observed, IngestOutcome, PendingBuffer, DEFAULT_BUFFER_CAP};
pub use encoding::{canonical_encoding, compute_event_id, decode_canonical, DecodeError};
pub(crate) use encoding::{decode_vertex, Reader};
pub use select::{generate_add, select_parents};

use crate::ids::{sha256, EventId, ReplicaId, StateDigest};

/// Default upper bound on an event body.
pub const DEFAULT_MAX_BODY: usize = 64 * 1024;

pub const ROOT_KIND: &str = "m.room.create";
pub const DUMMY_KIND: &str = "org.matrix.dummy_event";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("event kind must not be empty")]
    EmptyKind,
    #[error("event body of {len} bytes exceeds the {max} byte limit")]
    Oversized { len: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown vertex {0:?}")]
    UnknownVertex(EventId),
    #[error("delivery precondition violated for {id:?}: missing parents {missing:?}")]
    PreconditionViolated { id: EventId, missing: Vec<EventId> },
    #[error("operation {0:?} has no parents")]
    EmptyParents(EventId),
    #[error("no forward extremities: the state is corrupted")]
    EmptyExtremities,
    #[error("parent cap must be at least 2, got {0}")]
    InvalidCap(usize),
    #[error("required parent {0:?} is not a known vertex")]
    UnknownRequiredParent(EventId),
    #[error(transparent)]
    Payload(#[from] PayloadError),
}

/// The application event carried by a vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventPayload {
    pub kind: String,
    pub body: Vec<u8>,
}

impl EventPayload {
    pub fn new(kind: impl Into<String>, body: Vec<u8>) -> Result<Self, PayloadError> {
        Self::with_limit(kind, body, DEFAULT_MAX_BODY)
    }

    pub fn with_limit(kind: impl Into<String>, body: Vec<u8>, max_body: usize) -> Result<Self, PayloadError> {
        let kind = kind.into();
        if kind.is_empty() {
            return Err(PayloadError::EmptyKind);
        }
        if body.len() > max_body {
            return Err(PayloadError::Oversized { len: body.len(), max: max_body });
        }
        Ok(Self { kind, body })
    }

    /// Empty-bodied event used only to merge forward extremities.
    pub fn dummy() -> Self {
        Self { kind: DUMMY_KIND.to_owned(), body: Vec::new() }
    }

    /// Builds a payload without validation, as decoded from the wire.
    /// The reference monitor enforces the limits on such payloads.
    pub(crate) fn unchecked(kind: String, body: Vec<u8>) -> Self {
        Self { kind, body }
    }
}

/// A vertex of the event graph. Parents are kept in ascending id order,
/// matching the canonical encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Vertex {
    pub payload: EventPayload,
    pub id: EventId,
    pub parents: Vec<EventId>,
    pub sender: ReplicaId,
    pub seq: u64,
}

impl Vertex {
    pub fn new(payload: EventPayload, mut parents: Vec<EventId>, sender: ReplicaId, seq: u64) -> Self {
        parents.sort();
        let id = compute_event_id(&payload, &sender, seq, &parents);
        Self { payload, id, parents, sender, seq }
    }

    /// The root vertex for a room. Every replica derives the same root from
    /// the room identifier, so the initial state needs no coordination.
    pub fn root(room_id: &str) -> Self {
        let payload = EventPayload::unchecked(ROOT_KIND.to_owned(), room_id.as_bytes().to_vec());
        Self::new(payload, Vec::new(), ReplicaId::default(), 0)
    }

    pub fn canonical_encoding(&self) -> Vec<u8> {
        canonical_encoding(&self.payload, &self.sender, self.seq, &self.parents)
    }

    pub fn recompute_id(&self) -> EventId {
        compute_event_id(&self.payload, &self.sender, self.seq, &self.parents)
    }

    pub fn id_is_valid(&self) -> bool {
        self.recompute_id() == self.id
    }
}

/// The broadcast effector payload: the new vertex with its parent ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AddOperation {
    vertex: Vertex,
}

impl AddOperation {
    pub fn new(vertex: Vertex) -> Self {
        Self { vertex }
    }

    pub fn vertex(&self) -> &Vertex {
        &self.vertex
    }

    pub fn id(&self) -> EventId {
        self.vertex.id
    }

    pub fn parents(&self) -> &[EventId] {
        &self.vertex.parents
    }

    pub fn into_vertex(self) -> Vertex {
        self.vertex
    }
}

/// Immutable copy of a state's vertex and edge sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSnapshot {
    pub vertices: BTreeSet<EventId>,
    /// `(child, parent)` pairs.
    pub edges: BTreeSet<(EventId, EventId)>,
}

/// Per-replica event graph.
#[derive(Debug, Clone)]
pub struct MegState {
    root: EventId,
    vertices: BTreeMap<EventId, Vertex>,
    edges: BTreeSet<(EventId, EventId)>,
    extremities: BTreeSet<EventId>,
    depth: BTreeMap<EventId, u64>,
}

impl MegState {
    /// Initial state: the room's root vertex and no edges.
    pub fn init(room_id: &str) -> Self {
        let root = Vertex::root(room_id);
        let id = root.id;
        Self {
            root: id,
            vertices: BTreeMap::from([(id, root)]),
            edges: BTreeSet::new(),
            extremities: BTreeSet::from([id]),
            depth: BTreeMap::from([(id, 0)]),
        }
    }

    /// Assembles a state from arbitrary parts without checking any
    /// invariant. Intended for diagnostics and negative tests of
    /// [`MegState::is_rooted_dag`].
    pub fn from_raw_parts(root: EventId, vertices: Vec<Vertex>, edges: BTreeSet<(EventId, EventId)>) -> Self {
        let vertices: BTreeMap<EventId, Vertex> = vertices.into_iter().map(|v| (v.id, v)).collect();
        let has_child: BTreeSet<EventId> = edges.iter().map(|(_, p)| *p).collect();
        let extremities = vertices.keys().filter(|id| !has_child.contains(id)).copied().collect();
        Self { root, vertices, edges, extremities, depth: BTreeMap::new() }
    }

    pub fn root(&self) -> EventId {
        self.root
    }

    pub fn lookup(&self, id: &EventId) -> bool {
        self.vertices.contains_key(id)
    }

    pub fn vertex(&self, id: &EventId) -> Option<&Vertex> {
        self.vertices.get(id)
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.values()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// True iff some vertex references `id` as a parent.
    pub fn has_child(&self, id: &EventId) -> Result<bool, GraphError> {
        if !self.lookup(id) {
            return Err(GraphError::UnknownVertex(*id));
        }
        Ok(!self.extremities.contains(id))
    }

    /// Forward extremities: vertices without children.
    pub fn get_extremities(&self) -> &BTreeSet<EventId> {
        &self.extremities
    }

    pub fn get_state(&self) -> StateSnapshot {
        StateSnapshot {
            vertices: self.vertices.keys().copied().collect(),
            edges: self.edges.clone(),
        }
    }

    pub fn edges(&self) -> &BTreeSet<(EventId, EventId)> {
        &self.edges
    }

    /// Length of the longest path from the root, if the vertex is known.
    pub fn depth(&self, id: &EventId) -> Option<u64> {
        self.depth.get(id).copied()
    }

    /// Delivery precondition: every parent is present.
    pub fn precondition_holds(&self, op: &AddOperation) -> bool {
        op.parents().iter().all(|p| self.lookup(p))
    }

    pub fn missing_parents(&self, op: &AddOperation) -> Vec<EventId> {
        op.parents().iter().filter(|p| !self.lookup(p)).copied().collect()
    }

    /// Effector. Returns `Ok(false)` when the vertex was already present.
    pub fn apply_add(&mut self, op: &AddOperation) -> Result<bool, GraphError> {
        let v = op.vertex();
        if self.lookup(&v.id) {
            return Ok(false);
        }
        if v.parents.is_empty() {
            return Err(GraphError::EmptyParents(v.id));
        }
        let missing = self.missing_parents(op);
        if !missing.is_empty() {
            return Err(GraphError::PreconditionViolated { id: v.id, missing });
        }

        let mut depth = 0;
        for p in &v.parents {
            self.edges.insert((v.id, *p));
            self.extremities.remove(p);
            depth = depth.max(self.depth.get(p).map_or(0, |d| d + 1));
        }
        self.extremities.insert(v.id);
        self.depth.insert(v.id, depth);
        self.vertices.insert(v.id, v.clone());
        Ok(true)
    }

    /// Whether `ancestor` is reachable from `descendant` by following parent
    /// edges (a vertex is not its own ancestor).
    pub fn is_ancestor(&self, ancestor: &EventId, descendant: &EventId) -> bool {
        let floor = match self.depth(ancestor) {
            Some(d) => d,
            None => return false,
        };
        let mut seen = BTreeSet::new();
        let mut stack = vec![*descendant];
        while let Some(cur) = stack.pop() {
            let Some(v) = self.vertices.get(&cur) else { continue };
            for p in &v.parents {
                if p == ancestor {
                    return true;
                }
                if self.depth(p).is_some_and(|d| d > floor) && seen.insert(*p) {
                    stack.push(*p);
                }
            }
        }
        false
    }

    /// True when no parent is an ancestor of another, i.e. the parents
    /// could all have been forward extremities at the same time.
    pub fn parents_are_concurrent(&self, parents: &[EventId]) -> bool {
        parents.iter().enumerate().all(|(i, a)| {
            parents.iter().enumerate().all(|(j, b)| i == j || !self.is_ancestor(a, b))
        })
    }

    /// Checks the rooted-DAG properties from the vertex and edge sets alone:
    /// every edge endpoint exists, the designated root is the only vertex
    /// without outgoing edges, the edge relation is acyclic, and the graph is
    /// weakly connected.
    pub fn is_rooted_dag(&self) -> bool {
        let ids: BTreeSet<EventId> = self.vertices.keys().copied().collect();
        if !ids.contains(&self.root) {
            return false;
        }
        if !self.edges.iter().all(|(c, p)| ids.contains(c) && ids.contains(p)) {
            return false;
        }

        let mut out_degree: BTreeMap<EventId, usize> = ids.iter().map(|id| (*id, 0)).collect();
        let mut in_degree = out_degree.clone();
        let mut undirected: BTreeMap<EventId, Vec<EventId>> = BTreeMap::new();
        for (c, p) in &self.edges {
            *out_degree.get_mut(c).expect("checked") += 1;
            *in_degree.get_mut(p).expect("checked") += 1;
            undirected.entry(*c).or_default().push(*p);
            undirected.entry(*p).or_default().push(*c);
        }

        let sinks: Vec<&EventId> = out_degree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| id).collect();
        if sinks != [&self.root] {
            return false;
        }

        // Kahn's algorithm on child -> parent edges.
        let mut children_of: BTreeMap<EventId, Vec<EventId>> = BTreeMap::new();
        for (c, p) in &self.edges {
            children_of.entry(*c).or_default().push(*p);
        }
        let mut queue: VecDeque<EventId> = in_degree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
        let mut visited = 0usize;
        while let Some(id) = queue.pop_front() {
            visited += 1;
            for p in children_of.get(&id).into_iter().flatten() {
                let d = in_degree.get_mut(p).expect("checked");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(*p);
                }
            }
        }
        if visited != ids.len() {
            return false;
        }

        let mut seen = BTreeSet::from([self.root]);
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            for n in undirected.get(&id).into_iter().flatten() {
                if seen.insert(*n) {
                    stack.push(*n);
                }
            }
        }
        seen.len() == ids.len()
    }

    /// SHA-256 over sorted vertex ids followed by sorted `(child, parent)` pairs.
    pub fn digest(&self) -> StateDigest {
        let mut buf = Vec::with_capacity((self.vertices.len() + 2 * self.edges.len()) * EventId::LEN);
        for id in self.vertices.keys() {
            buf.extend_from_slice(id.as_bytes());
        }
        for (c, p) in &self.edges {
            buf.extend_from_slice(c.as_bytes());
            buf.extend_from_slice(p.as_bytes());
        }
        StateDigest(sha256(&buf))
    }

    /// Ancestor closure of `from` (inclusive, root excluded), breadth-first
    /// from the requested ids, truncated to `limit` entries.
    pub fn ancestor_closure(&self, from: &BTreeSet<EventId>, limit: usize) -> Vec<EventId> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<EventId> = from.iter().copied().collect();
        while let Some(id) = queue.pop_front() {
            if out.len() >= limit {
                break;
            }
            if id == self.root || !seen.insert(id) {
                continue;
            }
            let Some(v) = self.vertices.get(&id) else { continue };
            out.push(id);
            queue.extend(v.parents.iter().copied());
        }
        out
    }
}

/// Free-function form of [`MegState::digest`].
pub fn state_digest(state: &MegState) -> StateDigest {
    state.digest()
}

//! Replicated event graphs with bounded parent selection.
//!
//! [`graph`] holds the DAG state and its operation-based update rules,
//! [`monitor`] signs and checks operations on the way in, [`replica`] ties
//! both together, [`net`] and [`sim`] run replicas over a simulated network,
//! and [`urn`] analyses how fast the set of forward extremities shrinks.

pub mod graph;
pub mod ids;
pub mod monitor;
pub mod net;
pub mod replica;
pub mod report;
pub mod sim;
pub mod urn;

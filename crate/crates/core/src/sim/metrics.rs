//! Measurements of a run and the consistency verdicts derived from them.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::ids::{EventId, StateDigest};
use crate::net::NetStats;

#[derive(Debug, Clone, Default)]
pub struct Metrics {
    pub n: usize,
    pub horizon: u64,
    pub correct: Vec<bool>,
    /// `width[r][t]`: forward extremities of replica `r` at the end of tick `t`.
    pub width: Vec<Vec<u32>>,
    /// `buffer[r][t]`: pending operations held by replica `r`.
    pub buffer: Vec<Vec<u32>>,
    /// Mean width over correct replicas at each round start, followed by
    /// the value at the end of the run.
    pub round_widths: Vec<f64>,
    pub applied_counts: Vec<usize>,
    pub final_applied: Vec<BTreeSet<EventId>>,
    pub final_digests: Vec<StateDigest>,
    /// Events created by correct replicas.
    pub correct_ops: BTreeSet<EventId>,
    /// Per replica: buffered operations created by correct replicas.
    pub pending_correct: Vec<usize>,
    pub equivocations: Vec<(EventId, EventId)>,
    pub dummies: u64,
    pub rejections: u64,
    pub non_concurrent_parents: u64,
    pub dag_checks: u64,
    pub dag_violations: u64,
    pub cascade_violations: u64,
    /// Operations that had to be buffered although delivery was causal.
    pub causal_buffered: u64,
    pub convergence_violations: u64,
    pub last_progress: u64,
    pub quiescent_at: Option<u64>,
    /// First tick from which all correct replicas have equal digests until
    /// the end of the run.
    pub convergence_tick: Option<u64>,
    pub trace: Vec<String>,
    pub net: NetStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub strong_convergence: bool,
    pub eventual_delivery: bool,
    pub termination: bool,
    pub dag_invariants: bool,
}

impl Verdict {
    pub fn all(&self) -> bool {
        self.strong_convergence && self.eventual_delivery && self.termination && self.dag_invariants
    }
}

/// Replicas that applied the same set of operations must have equal digests.
pub fn check_strong_convergence(replicas: &[(&BTreeSet<EventId>, StateDigest)]) -> bool {
    replicas.iter().enumerate().all(|(i, (a, da))| {
        replicas[i + 1..].iter().all(|(b, db)| a.len() != b.len() || a != b || da == db)
    })
}

/// Every operation created by a correct replica, and every operation any
/// correct replica applied, is applied at every correct replica; no correct
/// replica still buffers operations from correct senders; and the run went
/// quiet before the horizon.
pub fn check_eventual_delivery(m: &Metrics) -> bool {
    let correct: Vec<usize> = (0..m.n).filter(|&r| m.correct[r]).collect();
    let union: BTreeSet<EventId> = correct.iter().flat_map(|&r| m.final_applied[r].iter().copied()).collect();
    let everywhere = |ids: &BTreeSet<EventId>| correct.iter().all(|&r| ids.is_subset(&m.final_applied[r]));
    m.quiescent_at.is_some()
        && everywhere(&m.correct_ops)
        && everywhere(&union)
        && correct.iter().all(|&r| m.pending_correct[r] == 0)
}

/// `tick,replica,width`, one row per tick and replica.
pub fn width_series_csv(m: &Metrics) -> String {
    let mut out = String::from("tick,replica,width\n");
    let ticks = m.width.first().map_or(0, Vec::len);
    for t in 0..ticks {
        for (r, series) in m.width.iter().enumerate() {
            let _ = writeln!(out, "{t},{r},{}", series[t]);
        }
    }
    out
}

/// Compact, serializable view of a run for reports.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub verdict: Verdict,
    pub correct: Vec<bool>,
    pub applied_counts: Vec<usize>,
    pub final_digests: Vec<String>,
    pub final_widths: Vec<u32>,
    pub correct_ops: usize,
    pub equivocations: usize,
    pub dummies: u64,
    pub rejections: u64,
    pub non_concurrent_parents: u64,
    pub dag_checks: u64,
    pub quiescent_at: Option<u64>,
    pub convergence_tick: Option<u64>,
    pub messages_sent: u64,
    pub messages_dropped: u64,
}

impl RunSummary {
    pub fn new(m: &Metrics, verdict: Verdict) -> Self {
        Self {
            verdict,
            correct: m.correct.clone(),
            applied_counts: m.applied_counts.clone(),
            final_digests: m.final_digests.iter().map(|d| d.to_hex()).collect(),
            final_widths: m.width.iter().map(|s| s.last().copied().unwrap_or(0)).collect(),
            correct_ops: m.correct_ops.len(),
            equivocations: m.equivocations.len(),
            dummies: m.dummies,
            rejections: m.rejections,
            non_concurrent_parents: m.non_concurrent_parents,
            dag_checks: m.dag_checks,
            quiescent_at: m.quiescent_at,
            convergence_tick: m.convergence_tick,
            messages_sent: m.net.sent,
            messages_dropped: m.net.dropped,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strong_convergence_checker() {
        let a = BTreeSet::from([EventId([1; 32]), EventId([2; 32])]);
        let b = BTreeSet::from([EventId([1; 32])]);
        let d1 = StateDigest([1; 32]);
        let d2 = StateDigest([2; 32]);
        assert!(check_strong_convergence(&[(&a, d1), (&a, d1)]));
        assert!(check_strong_convergence(&[(&a, d1), (&b, d2)]));
        assert!(!check_strong_convergence(&[(&a, d1), (&b, d2), (&a, d2)]));
    }

    #[test]
    fn eventual_delivery_checker() {
        let x = EventId([1; 32]);
        let y = EventId([2; 32]);
        let mut m = Metrics {
            n: 3,
            correct: vec![true, true, false],
            final_applied: vec![BTreeSet::from([x]), BTreeSet::from([x]), BTreeSet::new()],
            correct_ops: BTreeSet::from([x]),
            pending_correct: vec![0, 0, 5],
            quiescent_at: Some(10),
            ..Metrics::default()
        };
        assert!(check_eventual_delivery(&m));
        m.final_applied[0].insert(y);
        assert!(!check_eventual_delivery(&m));
        m.final_applied[1].insert(y);
        m.pending_correct[1] = 1;
        assert!(!check_eventual_delivery(&m));
        m.pending_correct[1] = 0;
        m.quiescent_at = None;
        assert!(!check_eventual_delivery(&m));
    }

    #[test]
    fn csv_shape() {
        let empty = Metrics::default();
        assert_eq!(width_series_csv(&empty), "tick,replica,width\n");
        let m = Metrics { width: vec![vec![1, 2], vec![3, 4]], ..Metrics::default() };
        assert_eq!(width_series_csv(&m), "tick,replica,width\n0,0,1\n0,1,3\n1,0,2\n1,1,4\n");
    }
}

//! Per-run metrics, computed from the trace alone.

use std::collections::{BTreeMap, BTreeSet};

use cac_core::ProcessId;
use serde::{Deserialize, Serialize};

use crate::scenario::{Scenario, Stack};
use crate::trace::{NoteRec, PairRec, Record, Trace};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    /// Distinct proposed pairs seen by correct processes on the main CAC layer.
    pub d: usize,
    /// Largest final accepted set among correct processes.
    pub ell: usize,
    /// Highest wave any message was sent in.
    pub rounds: u64,
    /// Point-to-point sends; a broadcast counts once per recipient.
    pub messages: u64,
    /// Earliest wave at which a correct process accepted (or registered a
    /// name, on the naming stack).
    pub first_accept_wave: Option<u64>,
    /// Wave by which every correct process had accepted at least once.
    pub all_accept_wave: Option<u64>,
    /// System-wide hops until the last correct process decided.
    pub decide_sys: Option<u64>,
    /// Restrained-consensus hops on the path of that decision.
    pub decide_rc: Option<u64>,
    /// Decision paths taken by correct processes.
    pub decided_via: Vec<String>,
    pub dropped: u64,
    pub steps: u64,
    pub quiescent: bool,
    pub budget_exhausted: bool,
}

/// The layer whose acceptances the stack's latency is measured on.
pub fn main_layer(stack: Stack) -> Option<&'static str> {
    match stack {
        Stack::Cac => Some("cac"),
        Stack::Cc => Some("cac1"),
        Stack::Naming => None,
    }
}

impl RunStats {
    pub fn of(trace: &Trace, s: &Scenario) -> Self {
        let correct: BTreeSet<ProcessId> = trace.correct().into_iter().collect();
        let layer = main_layer(s.stack);
        let mut st = RunStats::default();
        let mut observed: BTreeSet<PairRec> = BTreeSet::new();
        let mut accepted: BTreeMap<ProcessId, BTreeSet<PairRec>> = BTreeMap::new();
        let mut first: BTreeMap<ProcessId, u64> = BTreeMap::new();
        let mut decided: BTreeMap<ProcessId, (u64, u64, String)> = BTreeMap::new();

        for r in &trace.records {
            match r {
                Record::Send { wave, .. } => {
                    st.messages += 1;
                    st.rounds = st.rounds.max(*wave);
                }
                Record::Note {
                    proc,
                    wave,
                    sys,
                    rc,
                    note,
                    ..
                } if correct.contains(&ProcessId(*proc)) => {
                    let p = ProcessId(*proc);
                    let on_main = note.layer().is_some() && note.layer() == layer;
                    match note {
                        NoteRec::Proposed { pair, .. } if on_main => {
                            observed.insert(pair.clone());
                        }
                        NoteRec::Candidates { pairs, .. } if on_main => {
                            observed.extend(pairs.iter().cloned());
                        }
                        NoteRec::Accepted { pair, .. } if on_main => {
                            observed.insert(pair.clone());
                            accepted.entry(p).or_default().insert(pair.clone());
                            first.entry(p).or_insert(*wave);
                        }
                        NoteRec::NameRegistered { .. } if layer.is_none() => {
                            first.entry(p).or_insert(*wave);
                        }
                        NoteRec::Decided { via, .. } => {
                            decided.entry(p).or_insert((*sys, *rc, via.clone()));
                        }
                        _ => {}
                    }
                }
                Record::End {
                    steps,
                    quiescent,
                    budget_exhausted,
                    dropped,
                    ..
                } => {
                    st.steps = *steps;
                    st.quiescent = *quiescent;
                    st.budget_exhausted = *budget_exhausted;
                    st.dropped = *dropped;
                }
                _ => {}
            }
        }

        st.d = observed.len();
        st.ell = accepted.values().map(BTreeSet::len).max().unwrap_or(0);
        st.first_accept_wave = first.values().min().copied();
        if !correct.is_empty() && correct.iter().all(|p| first.contains_key(p)) {
            st.all_accept_wave = first.values().max().copied();
        }
        if !correct.is_empty() && correct.iter().all(|p| decided.contains_key(p)) {
            let last = decided
                .values()
                .max_by_key(|(sys, rc, _)| (*sys, *rc))
                .expect("non-empty");
            st.decide_sys = Some(last.0);
            st.decide_rc = Some(last.1);
        }
        let vias: BTreeSet<String> = decided.values().map(|(_, _, v)| v.clone()).collect();
        st.decided_via = vias.into_iter().collect();
        st
    }
}

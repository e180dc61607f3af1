//! Brute-force ground truth, independent of the simulator's scheduler.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use cac_core::process::CacProcess;
use cac_core::{Action, AnyCac, CacEngine, Dest, Layer, OptimalCac, Pair, Process, ProcessId, SimpleCac};
use thiserror::Error;

use crate::scenario::{Algorithm, BehaviorKind, Scenario, ScenarioError, Stack};
use crate::sim::{cac_config, keypair, roster};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("more than {0} deliveries on one interleaving")]
    BoundExceeded(usize),
    #[error("more than {0} distinct states")]
    StateLimit(usize),
    #[error("unsupported scenario: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Returns an element present in at least `2t + 1` of `sets`, the smallest
/// such element if there are several.
///
/// Requires `c >= 3t + 1`, exactly `c` sets over a universe of at most `c`
/// elements, and every set of size at least `c - t`.
pub fn pigeonhole_oracle<T: Ord + Clone>(c: usize, t: usize, sets: &[BTreeSet<T>]) -> Result<Option<T>, OracleError> {
    if c < 3 * t + 1 {
        return Err(OracleError::Precondition(format!("c = {c} < 3t + 1 = {}", 3 * t + 1)));
    }
    if sets.len() != c {
        return Err(OracleError::Precondition(format!("{} sets, expected {c}", sets.len())));
    }
    if let Some((i, s)) = sets.iter().enumerate().find(|(_, s)| s.len() < c - t) {
        return Err(OracleError::Precondition(format!(
            "set {i} has {} < c - t = {} elements",
            s.len(),
            c - t
        )));
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for s in sets {
        for x in s {
            *counts.entry(x).or_default() += 1;
        }
    }
    if counts.len() > c {
        return Err(OracleError::Precondition(format!(
            "universe has {} > c = {c} elements",
            counts.len()
        )));
    }
    Ok(counts
        .into_iter()
        .find(|(_, k)| *k >= 2 * t + 1)
        .map(|(x, _)| x.clone()))
}

/// Accepted pairs of every correct process at quiescence.
pub type Outcome = BTreeMap<ProcessId, BTreeSet<Pair>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Enumeration {
    pub outcomes: BTreeSet<Outcome>,
    /// Distinct global states visited.
    pub states: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct Bounds {
    /// Deliveries allowed on a single interleaving.
    pub deliveries: usize,
    pub states: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            deliveries: 200,
            states: 2_000_000,
        }
    }
}

#[derive(Clone)]
struct Msg {
    from: ProcessId,
    to: ProcessId,
    bytes: Arc<Vec<u8>>,
    key: u64,
}

#[derive(Clone)]
struct State {
    procs: Vec<Option<CacProcess>>,
    pending: Vec<Msg>,
    delivered: usize,
}

impl State {
    fn send(&mut self, n: usize, me: ProcessId, actions: Vec<Action>) {
        for a in actions {
            let Action::Send {
                layer: Layer::Cac,
                dest,
                bytes,
                ..
            } = a
            else {
                continue;
            };
            let targets: Vec<ProcessId> = match dest {
                Dest::All => ProcessId::all(n).collect(),
                Dest::To(v) => v,
            };
            let bytes = Arc::new(bytes);
            for to in targets {
                let mut h = DefaultHasher::new();
                (me, to, bytes.as_slice()).hash(&mut h);
                self.pending.push(Msg {
                    from: me,
                    to,
                    bytes: bytes.clone(),
                    key: h.finish(),
                });
            }
        }
    }

    fn deliver(&mut self, n: usize, i: usize) {
        let m = self.pending.swap_remove(i);
        self.delivered += 1;
        let mut out = Vec::new();
        if let Some(p) = self.procs[m.to.index()].as_mut() {
            p.on_message(m.from, Layer::Cac, &m.bytes, &mut out);
        }
        self.send(n, m.to, out);
    }

    fn fingerprint(&self) -> u64 {
        let mut keys: Vec<u64> = self.pending.iter().map(|m| m.key).collect();
        keys.sort_unstable();
        let mut h = DefaultHasher::new();
        for p in &self.procs {
            p.as_ref().map(|p| p.fingerprint()).hash(&mut h);
        }
        keys.hash(&mut h);
        h.finish()
    }

    fn outcome(&self) -> Outcome {
        self.procs
            .iter()
            .flatten()
            .map(|p| (p.id(), p.engine().accepted().iter().map(|e| e.pair.clone()).collect()))
            .collect()
    }
}

/// Every outcome reachable under any delivery order of a small bare-CAC
/// scenario. The scenario's schedule is ignored. Byzantine processes must
/// be silent.
pub fn enumerate_small(s: &Scenario, bounds: Bounds) -> Result<Enumeration, OracleError> {
    s.validate()?;
    if s.n > 4 {
        return Err(OracleError::Unsupported(format!("n = {} > 4", s.n)));
    }
    if s.stack != Stack::Cac {
        return Err(OracleError::Unsupported(format!("stack {}", s.stack.name())));
    }
    if let Some((p, b)) = s.byzantine.iter().find(|(_, b)| b.kind != BehaviorKind::Silent) {
        return Err(OracleError::Unsupported(format!("p{} behaves {}", p.0, b.kind.name())));
    }

    let r = roster(s);
    let mut init = State {
        procs: Vec::new(),
        pending: Vec::new(),
        delivered: 0,
    };
    for p in ProcessId::all(s.n) {
        if !s.is_correct(p) {
            init.procs.push(None);
            continue;
        }
        let cfg = cac_config(s, p, &r);
        let kp = keypair(s, p);
        let engine = match s.algorithm {
            Algorithm::Simple => AnyCac::Simple(SimpleCac::new(cfg, kp).expect("validated scenario")),
            Algorithm::Optimal => AnyCac::Optimal(OptimalCac::new(cfg, kp).expect("validated scenario")),
        };
        init.procs
            .push(Some(CacProcess::new(p, engine, s.proposers.get(&p).cloned())));
    }
    for i in 0..s.n {
        let mut out = Vec::new();
        if let Some(p) = init.procs[i].as_mut() {
            p.start(&mut out);
        }
        init.send(s.n, ProcessId(i as u32 + 1), out);
    }

    let mut seen = HashSet::new();
    let mut outcomes = BTreeSet::new();
    let mut stack = vec![init];
    while let Some(st) = stack.pop() {
        if !seen.insert(st.fingerprint()) {
            continue;
        }
        if seen.len() > bounds.states {
            return Err(OracleError::StateLimit(bounds.states));
        }
        if st.pending.is_empty() {
            outcomes.insert(st.outcome());
            continue;
        }
        if st.delivered >= bounds.deliveries {
            return Err(OracleError::BoundExceeded(bounds.deliveries));
        }
        let mut tried = HashSet::new();
        for i in 0..st.pending.len() {
            if !tried.insert(st.pending[i].key) {
                continue;
            }
            let mut next = st.clone();
            next.deliver(s.n, i);
            stack.push(next);
        }
    }
    Ok(Enumeration {
        outcomes,
        states: seen.len(),
    })
}

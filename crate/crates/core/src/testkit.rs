//! Minimal FIFO network used by unit tests.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::crypto::{KeyPair, Provider};
use crate::engine::{CacConfig, CacEngine, CacEvent};
use crate::optimal::OptimalCac;
use crate::process::{Action, DecidePath, Dest, Layer, Note, Process};
use crate::simple::SimpleCac;
use crate::statement::{AcceptanceProof, CacMessage, MessageKind, Roster, Statement};
use crate::types::{Pair, ProcessId};

pub struct Net<E> {
    pub roster: Arc<Roster>,
    pub keys: Vec<KeyPair>,
    pub domain: Vec<u8>,
    pub engines: Vec<E>,
    pub queue: VecDeque<(ProcessId, Vec<u8>)>,
}

pub fn keys(n: usize) -> (Arc<Roster>, Vec<KeyPair>) {
    let keys: Vec<KeyPair> = (0..n as u64).map(|i| Provider::Digest.keygen(100 + i)).collect();
    let roster = Roster::new(Provider::Digest, keys.iter().map(KeyPair::public_key).collect());
    (Arc::new(roster), keys)
}

fn build<E>(n: usize, t: usize, k: usize, mk: impl Fn(CacConfig, KeyPair) -> E) -> Net<E> {
    let (roster, keys) = keys(n);
    let domain = b"test".to_vec();
    let engines = (0..n)
        .map(|i| {
            let cfg = CacConfig::new(n, t, k, ProcessId::from_index(i), roster.clone(), domain.clone());
            mk(cfg, keys[i].clone())
        })
        .collect();
    Net {
        roster,
        keys,
        domain,
        engines,
        queue: VecDeque::new(),
    }
}

impl Net<SimpleCac> {
    pub fn simple(n: usize, t: usize) -> Self {
        build(n, t, 1, |c, k| SimpleCac::new(c, k).unwrap())
    }
}

impl Net<OptimalCac> {
    pub fn optimal(n: usize, t: usize, k: usize) -> Self {
        build(n, t, k, |c, kp| OptimalCac::new(c, kp).unwrap())
    }
}

pub fn bytes_of(ev: &[CacEvent]) -> Vec<Vec<u8>> {
    ev.iter()
        .filter_map(|e| match e {
            CacEvent::Broadcast { bytes, .. } => Some(bytes.clone()),
            _ => None,
        })
        .collect()
}

impl<E: CacEngine> Net<E> {
    pub fn propose(&mut self, i: usize, v: &str) {
        let ev = self.engines[i].propose(v.as_bytes().to_vec());
        for b in bytes_of(&ev) {
            self.queue.push_back((ProcessId::from_index(i), b));
        }
    }

    /// Delivers every broadcast to all engines in FIFO order until quiet.
    pub fn run_fifo(&mut self) {
        while let Some((from, bytes)) = self.queue.pop_front() {
            for i in 0..self.engines.len() {
                let ev = self.engines[i].handle(&bytes, from);
                for b in bytes_of(&ev) {
                    self.queue.push_back((ProcessId::from_index(i), b));
                }
            }
        }
    }
}

pub fn msg_of(kind: MessageKind, st: &[Statement]) -> Vec<u8> {
    CacMessage::encode(kind, st.iter())
}

pub fn bundle_of(st: &[Statement]) -> Vec<u8> {
    msg_of(MessageKind::Bundle, st)
}

/// READY statements for `pair` from the first `signers` keys.
pub fn ready_proof(keys: &[KeyPair], domain: &[u8], pair: &Pair, signers: usize) -> AcceptanceProof {
    AcceptanceProof {
        statements: (0..signers)
            .map(|i| Statement::ready(&keys[i], domain, ProcessId::from_index(i), 0, pair.clone()))
            .collect(),
    }
}

/// FIFO driver for whole processes. Timers and oracle proposals are only
/// collected; tests fire them explicitly.
pub struct Driver {
    pub procs: Vec<Box<dyn Process>>,
    pub queue: VecDeque<(ProcessId, ProcessId, Layer, Vec<u8>)>,
    pub notes: Vec<(ProcessId, Note)>,
    pub timers: Vec<(ProcessId, u64)>,
    pub oracle: Vec<(ProcessId, Vec<u8>)>,
}

impl Driver {
    pub fn new(procs: Vec<Box<dyn Process>>) -> Self {
        Driver {
            procs,
            queue: VecDeque::new(),
            notes: Vec::new(),
            timers: Vec::new(),
            oracle: Vec::new(),
        }
    }

    fn apply(&mut self, me: ProcessId, actions: Vec<Action>) {
        let n = self.procs.len();
        for a in actions {
            match a {
                Action::Send { layer, dest, bytes, .. } => {
                    let targets: Vec<ProcessId> = match dest {
                        Dest::All => ProcessId::all(n).collect(),
                        Dest::To(v) => v,
                    };
                    for to in targets {
                        self.queue.push_back((me, to, layer, bytes.clone()));
                    }
                }
                Action::SetTimer { id, .. } => self.timers.push((me, id)),
                Action::Oracle(b) => self.oracle.push((me, b)),
                Action::Note(note) => self.notes.push((me, note)),
            }
        }
    }

    pub fn start(&mut self) {
        for i in 0..self.procs.len() {
            let mut out = Vec::new();
            self.procs[i].start(&mut out);
            self.apply(ProcessId::from_index(i), out);
        }
    }

    pub fn run(&mut self) {
        while let Some((from, to, layer, bytes)) = self.queue.pop_front() {
            let mut out = Vec::new();
            self.procs[to.index()].on_message(from, layer, &bytes, &mut out);
            self.apply(to, out);
        }
    }

    pub fn fire_timers(&mut self) {
        for (p, id) in std::mem::take(&mut self.timers) {
            let mut out = Vec::new();
            self.procs[p.index()].on_timer(id, &mut out);
            self.apply(p, out);
        }
    }

    pub fn deliver_oracle(&mut self, bytes: &[u8]) {
        for i in 0..self.procs.len() {
            let mut out = Vec::new();
            self.procs[i].on_oracle(bytes, &mut out);
            self.apply(ProcessId::from_index(i), out);
        }
    }

    pub fn decisions(&self) -> Vec<(ProcessId, Vec<u8>, DecidePath)> {
        self.notes
            .iter()
            .filter_map(|(p, n)| match n {
                Note::Decided { value, via } => Some((*p, value.clone(), *via)),
                _ => None,
            })
            .collect()
    }
}

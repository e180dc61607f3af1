//! The vocabulary between protocol state machines and whatever drives them.

use std::hash::{DefaultHasher, Hash, Hasher};

use crate::crypto::PublicKey;
use crate::engine::{AcceptedEntry, AnyCac, CacEngine, CacEvent};
use crate::rc::{RcDecision, RcFailure};
use crate::types::{CandidateSet, Pair, ProcessId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Cac,
    Cac1,
    Rc,
    Cac2,
    Naming,
}

impl Layer {
    pub const ALL: [Layer; 5] = [Layer::Cac, Layer::Cac1, Layer::Rc, Layer::Cac2, Layer::Naming];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Cac => "cac",
            Layer::Cac1 => "cac1",
            Layer::Rc => "rc",
            Layer::Cac2 => "cac2",
            Layer::Naming => "naming",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Layer::ALL.into_iter().find(|l| l.name() == s)
    }

    /// Layers whose traffic goes to the whole system.
    pub fn system_wide(self) -> bool {
        self != Layer::Rc
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Dest {
    All,
    To(Vec<ProcessId>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecidePath {
    Cac1,
    Cac2,
    Gc,
}

impl DecidePath {
    pub fn name(self) -> &'static str {
        match self {
            DecidePath::Cac1 => "cac1",
            DecidePath::Cac2 => "cac2",
            DecidePath::Gc => "gc",
        }
    }
}

/// Observable protocol events, recorded in traces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Note {
    /// A proposal that actually entered the engine.
    Proposed {
        layer: Layer,
        pair: Pair,
    },
    Candidates {
        layer: Layer,
        set: CandidateSet,
    },
    Accepted {
        layer: Layer,
        entry: AcceptedEntry,
    },
    ProofAttached {
        layer: Layer,
        entry: AcceptedEntry,
    },
    RcProposed {
        set: Vec<Pair>,
    },
    RcRetracted,
    RcDecided(RcDecision),
    RcNoDecision(RcFailure),
    Decided {
        value: Vec<u8>,
        via: DecidePath,
    },
    GcProposed {
        pair: Pair,
    },
    ClaimProposed {
        name: String,
        pk: PublicKey,
    },
    ClaimFailed {
        pk: PublicKey,
    },
    NameRegistered {
        name: String,
        claimer: ProcessId,
        pk: PublicKey,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    /// `origin` marks the first message of a fresh proposal.
    Send {
        layer: Layer,
        dest: Dest,
        bytes: Vec<u8>,
        origin: bool,
    },
    SetTimer {
        id: u64,
        after: u64,
    },
    /// A proposal handed to the global-consensus oracle.
    Oracle(Vec<u8>),
    Note(Note),
}

pub trait Process {
    fn id(&self) -> ProcessId;
    fn start(&mut self, out: &mut Vec<Action>);
    fn on_message(&mut self, from: ProcessId, layer: Layer, bytes: &[u8], out: &mut Vec<Action>);
    fn on_timer(&mut self, id: u64, out: &mut Vec<Action>);
    fn on_oracle(&mut self, bytes: &[u8], out: &mut Vec<Action>);
    fn fingerprint(&self) -> u64;
    /// Messages the process discarded as invalid.
    fn dropped(&self) -> u64 {
        0
    }
}

/// Converts engine output into actions on `layer`.
pub fn emit_cac(layer: Layer, events: Vec<CacEvent>, origin: bool, out: &mut Vec<Action>) {
    for ev in events {
        out.push(match ev {
            CacEvent::Broadcast { bytes, .. } => Action::Send {
                layer,
                dest: Dest::All,
                bytes,
                origin,
            },
            CacEvent::Accepted(entry) => Action::Note(Note::Accepted { layer, entry }),
            CacEvent::ProofAttached(entry) => Action::Note(Note::ProofAttached { layer, entry }),
            CacEvent::CandidatesChanged(set) => Action::Note(Note::Candidates { layer, set }),
        });
    }
}

/// Proposes on `engine` and reports the proposal if it took effect.
pub fn propose_cac<E: CacEngine>(
    engine: &mut E,
    layer: Layer,
    me: ProcessId,
    value: Vec<u8>,
    out: &mut Vec<Action>,
) -> bool {
    let events = engine.propose(value.clone());
    if events.is_empty() {
        return false;
    }
    out.push(Action::Note(Note::Proposed {
        layer,
        pair: Pair::new(value, me),
    }));
    emit_cac(layer, events, true, out);
    true
}

/// A bare CAC participant.
#[derive(Clone, Debug)]
pub struct CacProcess {
    me: ProcessId,
    engine: AnyCac,
    proposal: Option<Vec<u8>>,
}

impl CacProcess {
    pub fn new(me: ProcessId, engine: AnyCac, proposal: Option<Vec<u8>>) -> Self {
        CacProcess { me, engine, proposal }
    }

    pub fn engine(&self) -> &AnyCac {
        &self.engine
    }
}

impl Process for CacProcess {
    fn id(&self) -> ProcessId {
        self.me
    }

    fn start(&mut self, out: &mut Vec<Action>) {
        if let Some(v) = self.proposal.clone() {
            propose_cac(&mut self.engine, Layer::Cac, self.me, v, out);
        }
    }

    fn on_message(&mut self, from: ProcessId, layer: Layer, bytes: &[u8], out: &mut Vec<Action>) {
        if layer == Layer::Cac {
            let events = self.engine.handle(bytes, from);
            emit_cac(Layer::Cac, events, false, out);
        }
    }

    fn on_timer(&mut self, _id: u64, _out: &mut Vec<Action>) {}

    fn on_oracle(&mut self, _bytes: &[u8], _out: &mut Vec<Action>) {}

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.engine.fingerprint().hash(&mut h);
        h.finish()
    }

    fn dropped(&self) -> u64 {
        self.engine.dropped()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::CacConfig;
    use crate::optimal::OptimalCac;
    use crate::testkit::keys;

    #[test]
    fn layer_names_round_trip() {
        for l in Layer::ALL {
            assert_eq!(Layer::from_name(l.name()), Some(l));
        }
        assert_eq!(Layer::from_name("nope"), None);
        assert!(!Layer::Rc.system_wide());
    }

    #[test]
    fn start_reports_effective_proposal_once() {
        let (roster, ks) = keys(4);
        let cfg = CacConfig::new(4, 1, 1, ProcessId(1), roster, "d");
        let engine = AnyCac::Optimal(OptimalCac::new(cfg, ks[0].clone()).unwrap());
        let mut p = CacProcess::new(ProcessId(1), engine, Some(b"v".to_vec()));
        let mut out = Vec::new();
        p.start(&mut out);
        assert!(matches!(
            &out[0],
            Action::Note(Note::Proposed { layer: Layer::Cac, .. })
        ));
        assert!(matches!(
            &out[1],
            Action::Send {
                origin: true,
                dest: Dest::All,
                ..
            }
        ));
        let mut again = Vec::new();
        p.start(&mut again);
        assert!(again.is_empty());
    }

    #[test]
    fn other_layers_are_ignored() {
        let (roster, ks) = keys(4);
        let cfg = CacConfig::new(4, 1, 1, ProcessId(2), roster, "d");
        let engine = AnyCac::Optimal(OptimalCac::new(cfg, ks[1].clone()).unwrap());
        let mut p = CacProcess::new(ProcessId(2), engine, None);
        let before = p.fingerprint();
        let mut out = Vec::new();
        p.on_message(ProcessId(1), Layer::Rc, &[1, 2, 3], &mut out);
        assert!(out.is_empty());
        assert_eq!(p.fingerprint(), before);
    }
}

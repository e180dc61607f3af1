//! Run traces as line-delimited JSON.
//!
//! The first record is the header (scenario and correct set), the last one
//! is `end`. Every other record carries the logical tick it happened at.
//! Byte strings are lowercase hex.

use std::fmt;

use cac_core::engine::AcceptPath;
use cac_core::naming::render;
use cac_core::rc::RcDecision;
use cac_core::{AcceptanceProof, AcceptedEntry, Layer, Note, Pair, ProcessId};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scenario::{Scenario, ScenarioError, ScenarioFile};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairRec {
    pub proposer: u32,
    pub value: String,
}

impl PairRec {
    pub fn of(p: &Pair) -> Self {
        PairRec {
            proposer: p.proposer.0,
            value: hex::encode(&p.value),
        }
    }

    pub fn to_pair(&self) -> Option<Pair> {
        Some(Pair::new(hex::decode(&self.value).ok()?, ProcessId(self.proposer)))
    }
}

impl fmt::Display for PairRec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = hex::decode(&self.value).ok().and_then(|b| String::from_utf8(b).ok());
        match v {
            Some(s) if s.len() <= 24 => write!(f, "<{s:?},p{}>", self.proposer),
            _ => write!(f, "<{}..,p{}>", &self.value[..self.value.len().min(8)], self.proposer),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoteRec {
    Proposed {
        layer: String,
        pair: PairRec,
    },
    Candidates {
        layer: String,
        top: bool,
        pairs: Vec<PairRec>,
    },
    Accepted {
        layer: String,
        pair: PairRec,
        path: String,
        proof: Option<String>,
    },
    ProofAttached {
        layer: String,
        pair: PairRec,
        proof: String,
    },
    RcProposed {
        set: Vec<PairRec>,
    },
    RcRetracted,
    RcDecided {
        set: Vec<PairRec>,
        endorsers: Vec<u32>,
        retractors: Vec<u32>,
        endorse_digest: String,
    },
    RcNoDecision {
        reason: String,
    },
    Decided {
        value: String,
        via: String,
    },
    GcProposed {
        pair: PairRec,
    },
    ClaimProposed {
        name: String,
        key: String,
    },
    ClaimFailed {
        key: String,
    },
    NameRegistered {
        name: String,
        claimer: u32,
        key: String,
    },
}

fn proof_hex(pair: &Pair, proof: &AcceptanceProof) -> String {
    hex::encode(proof.compact_for(pair).to_bytes())
}

fn path_name(p: AcceptPath) -> &'static str {
    match p {
        AcceptPath::Quorum => "quorum",
        AcceptPath::Fast => "fast",
    }
}

/// Digest of the endorsement signatures, order independent.
pub fn endorse_digest(d: &RcDecision) -> String {
    let mut sigs: Vec<_> = d.endorse.iter().map(|e| (e.signer, e.sig.0)).collect();
    sigs.sort();
    let mut h = Sha256::new();
    for (signer, sig) in sigs {
        h.update(signer.0.to_be_bytes());
        h.update(sig);
    }
    hex::encode(&h.finalize()[..16])
}

impl NoteRec {
    pub fn from_note(note: &Note) -> Self {
        let entry = |layer: Layer, e: &AcceptedEntry| NoteRec::Accepted {
            layer: layer.name().into(),
            pair: PairRec::of(&e.pair),
            path: path_name(e.path).into(),
            proof: e.proof.as_ref().map(|p| proof_hex(&e.pair, p)),
        };
        let set_rec = |s: &mut dyn Iterator<Item = &Pair>| s.map(PairRec::of).collect::<Vec<_>>();
        match note {
            Note::Proposed { layer, pair } => NoteRec::Proposed {
                layer: layer.name().into(),
                pair: PairRec::of(pair),
            },
            Note::Candidates { layer, set } => NoteRec::Candidates {
                layer: layer.name().into(),
                top: set.is_top(),
                pairs: set.pairs().map(|p| set_rec(&mut p.iter())).unwrap_or_default(),
            },
            Note::Accepted { layer, entry: e } => entry(*layer, e),
            Note::ProofAttached { layer, entry: e } => NoteRec::ProofAttached {
                layer: layer.name().into(),
                pair: PairRec::of(&e.pair),
                proof: e.proof.as_ref().map(|p| proof_hex(&e.pair, p)).unwrap_or_default(),
            },
            Note::RcProposed { set } => NoteRec::RcProposed {
                set: set_rec(&mut set.iter()),
            },
            Note::RcRetracted => NoteRec::RcRetracted,
            Note::RcDecided(d) => NoteRec::RcDecided {
                set: set_rec(&mut d.set.iter()),
                endorsers: {
                    let mut v: Vec<u32> = d.endorse.iter().map(|e| e.signer.0).collect();
                    v.sort_unstable();
                    v.dedup();
                    v
                },
                retractors: {
                    let mut v: Vec<u32> = d.retract.iter().map(|r| r.signer.0).collect();
                    v.sort_unstable();
                    v.dedup();
                    v
                },
                endorse_digest: endorse_digest(d),
            },
            Note::RcNoDecision(f) => NoteRec::RcNoDecision {
                reason: f.name().into(),
            },
            Note::Decided { value, via } => NoteRec::Decided {
                value: hex::encode(value),
                via: via.name().into(),
            },
            Note::GcProposed { pair } => NoteRec::GcProposed {
                pair: PairRec::of(pair),
            },
            Note::ClaimProposed { name, pk } => NoteRec::ClaimProposed {
                name: name.clone(),
                key: render(pk),
            },
            Note::ClaimFailed { pk } => NoteRec::ClaimFailed { key: render(pk) },
            Note::NameRegistered { name, claimer, pk } => NoteRec::NameRegistered {
                name: name.clone(),
                claimer: claimer.0,
                key: render(pk),
            },
        }
    }

    /// Layer of CAC-level notes.
    pub fn layer(&self) -> Option<&str> {
        match self {
            NoteRec::Proposed { layer, .. }
            | NoteRec::Candidates { layer, .. }
            | NoteRec::Accepted { layer, .. }
            | NoteRec::ProofAttached { layer, .. } => Some(layer),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum Record {
    Header {
        scenario: ScenarioFile,
        correct: Vec<u32>,
    },
    Send {
        tick: u64,
        id: u64,
        from: u32,
        to: u32,
        layer: String,
        wave: u64,
        len: usize,
        digest: String,
    },
    Deliver {
        tick: u64,
        id: u64,
        from: u32,
        to: u32,
        layer: String,
        sent_at: u64,
        wave: u64,
    },
    TimerSet {
        tick: u64,
        proc: u32,
        timer: u64,
        fire_at: u64,
    },
    TimerFire {
        tick: u64,
        proc: u32,
        timer: u64,
    },
    /// A proposal handed to the global-consensus oracle.
    OracleIn {
        tick: u64,
        proc: u32,
        admissible: bool,
    },
    OracleOut {
        tick: u64,
        pair: PairRec,
    },
    Note {
        tick: u64,
        proc: u32,
        wave: u64,
        sys: u64,
        rc: u64,
        note: NoteRec,
    },
    End {
        tick: u64,
        steps: u64,
        quiescent: bool,
        budget_exhausted: bool,
        dropped: u64,
    },
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<Record>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace has no header record")]
    NoHeader,
    #[error("trace is truncated: no end record")]
    Truncated,
    #[error("record {0} is out of place")]
    Misplaced(usize),
    #[error("ticks go backwards at record {0}")]
    Unordered(usize),
    #[error("deliver at record {0} has no matching send")]
    Orphan(usize),
    #[error("header scenario: {0}")]
    Scenario(#[from] ScenarioError),
}

impl Record {
    pub fn tick(&self) -> Option<u64> {
        match self {
            Record::Header { .. } => None,
            Record::Send { tick, .. }
            | Record::Deliver { tick, .. }
            | Record::TimerSet { tick, .. }
            | Record::TimerFire { tick, .. }
            | Record::OracleIn { tick, .. }
            | Record::OracleOut { tick, .. }
            | Record::Note { tick, .. }
            | Record::End { tick, .. } => Some(*tick),
        }
    }
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records always serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses and structurally validates a persisted trace.
    pub fn from_jsonl(src: &str) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        for (i, line) in src.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(line).map_err(|e| TraceError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            records.push(r);
        }
        let t = Trace { records };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if !matches!(self.records.first(), Some(Record::Header { .. })) {
            return Err(TraceError::NoHeader);
        }
        if !matches!(self.records.last(), Some(Record::End { .. })) || self.records.len() < 2 {
            return Err(TraceError::Truncated);
        }
        let last = self.records.len() - 1;
        let mut tick = 0;
        let mut sent = std::collections::BTreeSet::new();
        for (i, r) in self.records.iter().enumerate().skip(1) {
            if matches!(r, Record::Header { .. }) || (i != last && matches!(r, Record::End { .. })) {
                return Err(TraceError::Misplaced(i));
            }
            let t = r.tick().expect("not a header");
            if t < tick {
                return Err(TraceError::Unordered(i));
            }
            tick = t;
            match r {
                Record::Send { id, .. } => {
                    sent.insert(*id);
                }
                Record::Deliver { id, .. } if !sent.remove(id) => return Err(TraceError::Orphan(i)),
                _ => {}
            }
        }
        self.scenario()?;
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario, TraceError> {
        match self.records.first() {
            Some(Record::Header { scenario, .. }) => Ok(scenario.clone().into_scenario()?),
            _ => Err(TraceError::NoHeader),
        }
    }

    pub fn correct(&self) -> Vec<ProcessId> {
        match self.records.first() {
            Some(Record::Header { correct, .. }) => correct.iter().map(|&i| ProcessId(i)).collect(),
            _ => Vec::new(),
        }
    }

    pub fn end(&self) -> Option<(u64, bool, bool)> {
        match self.records.last() {
            Some(Record::End {
                steps,
                quiescent,
                budget_exhausted,
                ..
            }) => Some((*steps, *quiescent, *budget_exhausted)),
            _ => None,
        }
    }

    pub fn quiescent(&self) -> bool {
        self.end().is_some_and(|(_, q, _)| q)
    }

    /// `(index, proc, note)` for every note record.
    pub fn notes(&self) -> impl Iterator<Item = (usize, ProcessId, &NoteRec)> {
        self.records.iter().enumerate().filter_map(|(i, r)| match r {
            Record::Note { proc, note, .. } => Some((i, ProcessId(*proc), note)),
            _ => None,
        })
    }
}

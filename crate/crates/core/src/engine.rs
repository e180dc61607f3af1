//! The interface shared by both CAC engines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::crypto::KeyPair;
use crate::optimal::OptimalCac;
use crate::simple::SimpleCac;
use crate::statement::{AcceptanceProof, MessageKind, Roster, VerifyContext};
use crate::types::{CandidateSet, Pair, ProcessId};

/// Extra admission rule on proposed values; statements about a rejected
/// pair invalidate the message carrying them.
pub type ValueValidity = Arc<dyn Fn(&Pair) -> bool + Send + Sync>;

/// Deliberate protocol bugs, used only as negative controls for the checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fault {
    /// Accept once `t + 1` READY signers back a candidate.
    WeakAcceptance,
}

#[derive(Clone)]
pub struct CacConfig {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub me: ProcessId,
    pub roster: Arc<Roster>,
    /// Instance identifier mixed into every signature.
    pub domain: Vec<u8>,
    pub validity: Option<ValueValidity>,
    pub fault: Option<Fault>,
}

impl fmt::Debug for CacConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CacConfig")
            .field("n", &self.n)
            .field("t", &self.t)
            .field("k", &self.k)
            .field("me", &self.me)
            .field("domain", &String::from_utf8_lossy(&self.domain))
            .field("validity", &self.validity.is_some())
            .field("fault", &self.fault)
            .finish()
    }
}

impl CacConfig {
    pub fn new(n: usize, t: usize, k: usize, me: ProcessId, roster: Arc<Roster>, domain: impl Into<Vec<u8>>) -> Self {
        CacConfig {
            n,
            t,
            k,
            me,
            roster,
            domain: domain.into(),
            validity: None,
            fault: None,
        }
    }

    pub fn with_validity(mut self, v: ValueValidity) -> Self {
        self.validity = Some(v);
        self
    }

    pub fn verify_context(&self) -> VerifyContext {
        VerifyContext {
            n: self.n,
            t: self.t,
            roster: self.roster.clone(),
            domain: self.domain.clone(),
        }
    }

    pub(crate) fn check_common(&self, kp: &KeyPair) -> Result<(), ConfigError> {
        if self.roster.n() != self.n {
            return Err(ConfigError::RosterSize {
                expected: self.n,
                got: self.roster.n(),
            });
        }
        if self.me.0 == 0 || self.me.0 as usize > self.n {
            return Err(ConfigError::SelfOutOfRange(self.me.0));
        }
        if self.roster.key(self.me) != Some(&kp.public_key()) {
            return Err(ConfigError::KeyMismatch);
        }
        Ok(())
    }

    pub(crate) fn value_ok(&self, pair: &Pair) -> bool {
        self.validity.as_ref().map_or(true, |f| f(pair))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("bundle engine needs n > 4t (n={n}, t={t})")]
    SimpleResilience { n: usize, t: usize },
    #[error("witness/ready engine needs n >= 3t + k (n={n}, t={t}, k={k})")]
    OptimalResilience { n: usize, t: usize, k: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("roster has {got} keys, expected {expected}")]
    RosterSize { expected: usize, got: usize },
    #[error("process id {0} outside 1..=n")]
    SelfOutOfRange(u32),
    #[error("key pair does not match the roster entry")]
    KeyMismatch,
    #[error("candidate set of {0} pairs exceeds the limit of 12")]
    TooManyCandidates(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    Malformed,
    WrongKind,
    BadSignature,
    InvalidValue,
    SeqnoHole,
    MissingInitiatorWit,
    NoWitnessQuorum,
}

impl DropReason {
    pub fn name(self) -> &'static str {
        match self {
            DropReason::Malformed => "malformed",
            DropReason::WrongKind => "wrong-kind",
            DropReason::BadSignature => "bad-signature",
            DropReason::InvalidValue => "invalid-value",
            DropReason::SeqnoHole => "seqno-hole",
            DropReason::MissingInitiatorWit => "missing-initiator-wit",
            DropReason::NoWitnessQuorum => "no-witness-quorum",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AcceptPath {
    Quorum,
    Fast,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AcceptedEntry {
    pub pair: Pair,
    pub proof: Option<AcceptanceProof>,
    pub path: AcceptPath,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CacEvent {
    Accepted(AcceptedEntry),
    CandidatesChanged(CandidateSet),
    /// A fast-path acceptance obtained its transferable proof.
    ProofAttached(AcceptedEntry),
    Broadcast {
        kind: MessageKind,
        bytes: Vec<u8>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Snapshot {
    pub candidates: CandidateSet,
    pub accepted: BTreeSet<Pair>,
}

pub trait CacEngine {
    /// Single-shot: later calls, or calls after this engine already signed
    /// something, emit nothing.
    fn propose(&mut self, value: Vec<u8>) -> Vec<CacEvent>;
    fn handle(&mut self, bytes: &[u8], sender: ProcessId) -> Vec<CacEvent>;
    fn candidates(&self) -> &CandidateSet;
    /// In acceptance order.
    fn accepted(&self) -> &[AcceptedEntry];
    fn dropped(&self) -> u64;
    fn drop_reasons(&self) -> &BTreeMap<DropReason, u64>;
    /// Stable digest of the full protocol state.
    fn fingerprint(&self) -> u64;

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            candidates: self.candidates().clone(),
            accepted: self.accepted().iter().map(|e| e.pair.clone()).collect(),
        }
    }

    fn has_accepted(&self, pair: &Pair) -> bool {
        self.accepted().iter().any(|e| &e.pair == pair)
    }
}

/// Drop bookkeeping shared by the engines.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub(crate) struct DropCounter {
    pub total: u64,
    pub by_reason: BTreeMap<DropReason, u64>,
}

impl DropCounter {
    pub fn record(&mut self, r: DropReason) {
        self.total += 1;
        *self.by_reason.entry(r).or_default() += 1;
    }
}

/// Either engine behind one cloneable type.
#[derive(Clone, Debug)]
pub enum AnyCac {
    Simple(SimpleCac),
    Optimal(OptimalCac),
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyCac::Simple($e) => $body,
            AnyCac::Optimal($e) => $body,
        }
    };
}

impl CacEngine for AnyCac {
    fn propose(&mut self, value: Vec<u8>) -> Vec<CacEvent> {
        delegate!(self, e => e.propose(value))
    }
    fn handle(&mut self, bytes: &[u8], sender: ProcessId) -> Vec<CacEvent> {
        delegate!(self, e => e.handle(bytes, sender))
    }
    fn candidates(&self) -> &CandidateSet {
        delegate!(self, e => e.candidates())
    }
    fn accepted(&self) -> &[AcceptedEntry] {
        delegate!(self, e => e.accepted())
    }
    fn dropped(&self) -> u64 {
        delegate!(self, e => e.dropped())
    }
    fn drop_reasons(&self) -> &BTreeMap<DropReason, u64> {
        delegate!(self, e => e.drop_reasons())
    }
    fn fingerprint(&self) -> u64 {
        delegate!(self, e => e.fingerprint())
    }
}

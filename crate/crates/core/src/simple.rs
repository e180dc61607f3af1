//! Bundle-based CAC for `n > 4t`.
//!
//! Every message is a BUNDLE carrying the sender's whole signature store.
//! A process witnesses one pair, signs a READY over the witness set it holds
//! once `n - t` processes have witnessed, and accepts a pair once `n - t`
//! READYs are held and the frozen witness sets of `2t + 1` of their signers
//! contain it.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hash, Hasher};

use crate::crypto::KeyPair;
use crate::engine::{
    AcceptPath, AcceptedEntry, CacConfig, CacEngine, CacEvent, ConfigError, DropCounter, DropReason, Fault,
};
use crate::statement::{CacMessage, MessageKind, Payload, SigStore, Statement, StatementKind};
use crate::types::{choice, CandidateSet, Pair, ProcessId};

#[derive(Clone, Debug)]
pub struct SimpleCac {
    cfg: CacConfig,
    kp: KeyPair,
    sigs: SigStore,
    candidates: CandidateSet,
    accepted: Vec<AcceptedEntry>,
    my_m: Option<BTreeSet<Statement>>,
    // Store size at our last broadcast; rebroadcasts only carry news.
    broadcast_len: usize,
    drops: DropCounter,
}

impl SimpleCac {
    pub fn new(cfg: CacConfig, kp: KeyPair) -> Result<Self, ConfigError> {
        if cfg.n <= 4 * cfg.t {
            return Err(ConfigError::SimpleResilience { n: cfg.n, t: cfg.t });
        }
        cfg.check_common(&kp)?;
        Ok(SimpleCac {
            cfg,
            kp,
            sigs: SigStore::new(),
            candidates: CandidateSet::Top,
            accepted: Vec::new(),
            my_m: None,
            broadcast_len: 0,
            drops: DropCounter::default(),
        })
    }

    pub fn sigs(&self) -> &SigStore {
        &self.sigs
    }

    pub fn frozen_witnesses(&self) -> Option<&BTreeSet<Statement>> {
        self.my_m.as_ref()
    }

    fn me(&self) -> ProcessId {
        self.cfg.me
    }

    fn broadcast(&mut self, out: &mut Vec<CacEvent>) {
        self.broadcast_len = self.sigs.len();
        out.push(CacEvent::Broadcast {
            kind: MessageKind::Bundle,
            bytes: CacMessage::encode(MessageKind::Bundle, self.sigs.iter()),
        });
    }

    fn statement_ok(&self, s: &Statement) -> bool {
        if self.sigs.contains(s) {
            return true;
        }
        let values_ok = match &s.payload {
            Payload::Pair(p) => self.cfg.value_ok(p),
            Payload::Witnesses(m) => m.iter().all(|w| w.pair().is_some_and(|p| self.cfg.value_ok(p))),
        };
        let shape_ok = matches!(
            (s.kind, &s.payload),
            (StatementKind::Wit, Payload::Pair(_)) | (StatementKind::Ready, Payload::Witnesses(_))
        );
        shape_ok && values_ok && s.verify(&self.cfg.roster, &self.cfg.domain)
    }

    fn acceptance_threshold(&self) -> usize {
        match self.cfg.fault {
            Some(Fault::WeakAcceptance) => self.cfg.t + 1,
            None => 2 * self.cfg.t + 1,
        }
    }

    fn support(&self, pair: &Pair) -> usize {
        self.sigs
            .ready_sets()
            .values()
            .filter(|sets| sets.iter().any(|m| m.contains(pair)))
            .count()
    }
}

impl CacEngine for SimpleCac {
    fn propose(&mut self, value: Vec<u8>) -> Vec<CacEvent> {
        if self.sigs.signed_by(self.me()) {
            return Vec::new();
        }
        let pair = Pair::new(value, self.me());
        let s = Statement::wit(&self.kp, &self.cfg.domain, self.me(), 0, pair);
        self.sigs.insert(s);
        let mut out = Vec::new();
        self.broadcast(&mut out);
        out
    }

    fn handle(&mut self, bytes: &[u8], _sender: ProcessId) -> Vec<CacEvent> {
        let msg = match CacMessage::decode(bytes) {
            Ok(m) if m.kind == MessageKind::Bundle => m,
            Ok(_) => {
                self.drops.record(DropReason::WrongKind);
                return Vec::new();
            }
            Err(_) => {
                self.drops.record(DropReason::Malformed);
                return Vec::new();
            }
        };

        let valid: Vec<Statement> = msg.statements.into_iter().filter(|s| self.statement_ok(s)).collect();

        // Witnesses at top level and inside READY witness sets.
        let mut wits: Vec<&Statement> = Vec::new();
        for s in &valid {
            match &s.payload {
                Payload::Pair(_) => wits.push(s),
                Payload::Witnesses(m) => wits.extend(m.iter()),
            }
        }
        let initiated: BTreeSet<&Pair> = wits
            .iter()
            .filter_map(|w| w.pair().filter(|p| p.proposer == w.signer))
            .collect();
        if wits.iter().any(|w| w.pair().is_some_and(|p| !initiated.contains(p))) {
            self.drops.record(DropReason::MissingInitiatorWit);
            return Vec::new();
        }

        for s in valid {
            if let Payload::Witnesses(m) = &s.payload {
                for w in m {
                    self.sigs.insert(w.clone());
                }
            }
            self.sigs.insert(s);
        }

        let mut out = Vec::new();
        let me = self.me();
        let (n, t) = (self.cfg.n, self.cfg.t);

        if !self.sigs.signed_by(me) {
            let chosen = {
                let initiated = self
                    .sigs
                    .witnessed_pairs()
                    .map(|(p, _)| p)
                    .filter(|p| self.sigs.has_wit(p.proposer, p));
                choice(initiated).cloned()
            };
            if let Some(pair) = chosen {
                let s = Statement::wit(&self.kp, &self.cfg.domain, me, 0, pair);
                self.sigs.insert(s);
                self.broadcast(&mut out);
            }
        }

        if self.my_m.is_none() && self.sigs.wit_signers().len() >= n - t {
            let m = self.sigs.wit_statements();
            let s = Statement::sign(
                &self.kp,
                &self.cfg.domain,
                me,
                StatementKind::Ready,
                0,
                Payload::Witnesses(m.clone()),
            );
            self.my_m = Some(m);
            self.sigs.insert(s);
            self.broadcast(&mut out);
        }

        if self.sigs.ready_signers().len() >= n - t {
            if self.sigs.len() > self.broadcast_len {
                self.broadcast(&mut out);
            }
            if self.candidates.is_top() {
                let all: BTreeSet<Pair> = self
                    .sigs
                    .ready_sets()
                    .values()
                    .flat_map(|sets| sets.iter().flat_map(|m| m.iter().cloned()))
                    .collect();
                self.candidates = CandidateSet::Finite(all);
                out.push(CacEvent::CandidatesChanged(self.candidates.clone()));
            }
            let threshold = self.acceptance_threshold();
            let pending: Vec<Pair> = self
                .candidates
                .pairs()
                .into_iter()
                .flatten()
                .filter(|p| !self.has_accepted(p))
                .cloned()
                .collect();
            for pair in pending {
                if self.support(&pair) >= threshold {
                    let entry = AcceptedEntry {
                        pair,
                        proof: None,
                        path: AcceptPath::Quorum,
                    };
                    self.accepted.push(entry.clone());
                    out.push(CacEvent::Accepted(entry));
                }
            }
        }
        out
    }

    fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    fn accepted(&self) -> &[AcceptedEntry] {
        &self.accepted
    }

    fn dropped(&self) -> u64 {
        self.drops.total
    }

    fn drop_reasons(&self) -> &BTreeMap<DropReason, u64> {
        &self.drops.by_reason
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.sigs.hash(&mut h);
        self.candidates.hash(&mut h);
        for e in &self.accepted {
            e.pair.hash(&mut h);
        }
        self.my_m.hash(&mut h);
        self.broadcast_len.hash(&mut h);
        h.finish()
    }
}

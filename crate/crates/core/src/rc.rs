//! Restrained consensus among the proposers of conflicting accepted pairs.
//!
//! A participant endorses every subset of its candidate set and sends the
//! endorsements to the other proposers it knows about. Processes that never
//! proposed answer with a signed RETRACT. A participant decides the largest
//! common subset once every proposer in it endorsed exactly that subset and
//! every known participant either endorsed something or retracted.
//!
//! Since the endorsed family is always a powerset, it is stored as its
//! generator set; on the wire every member is listed explicitly.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{KeyPair, Signature};
use crate::engine::ConfigError;
use crate::statement::{verify_acceptance, AcceptanceProof, Roster, VerifyContext};
use crate::types::{Pair, ProcessId};

pub const MAX_RC_CANDIDATES: usize = 12;

pub const TAG_SIG: u8 = 0x10;
pub const TAG_RETRACT: u8 = 0x11;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endorsement {
    pub signer: ProcessId,
    pub set: BTreeSet<Pair>,
    pub sig: Signature,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Retraction {
    pub signer: ProcessId,
    pub sig: Signature,
}

pub fn endorse_bytes(domain: &[u8], set: &BTreeSet<Pair>) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(domain).raw(b"ENDORSE").pair_set(set.iter());
    w.finish()
}

pub fn retract_bytes(domain: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(domain).raw(b"RETRACT");
    w.finish()
}

impl Endorsement {
    pub fn sign(kp: &KeyPair, domain: &[u8], signer: ProcessId, set: BTreeSet<Pair>) -> Self {
        let sig = kp.sign(&endorse_bytes(domain, &set));
        Endorsement { signer, set, sig }
    }

    pub fn verify(&self, roster: &Roster, domain: &[u8]) -> bool {
        roster.verify(self.signer, &endorse_bytes(domain, &self.set), &self.sig)
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.pid(self.signer).pair_set(self.set.iter()).sig(&self.sig);
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Endorsement {
            signer: r.pid()?,
            set: r.pair_set()?,
            sig: r.sig()?,
        })
    }
}

impl Retraction {
    pub fn sign(kp: &KeyPair, domain: &[u8], signer: ProcessId) -> Self {
        Retraction {
            signer,
            sig: kp.sign(&retract_bytes(domain)),
        }
    }

    pub fn verify(&self, roster: &Roster, domain: &[u8]) -> bool {
        roster.verify(self.signer, &retract_bytes(domain), &self.sig)
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.pid(self.signer).sig(&self.sig);
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Retraction {
            signer: r.pid()?,
            sig: r.sig()?,
        })
    }
}

/// All subsets of `set`, smallest first, in a fixed order.
pub fn powerset(set: &BTreeSet<Pair>) -> Vec<BTreeSet<Pair>> {
    let items: Vec<&Pair> = set.iter().collect();
    let mut out: Vec<BTreeSet<Pair>> = (0u32..1 << items.len())
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, p)| (*p).clone())
                .collect()
        })
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Decoded RCONS-SIG contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SigMessage {
    pub family: Vec<BTreeSet<Pair>>,
    pub endorse: Vec<Endorsement>,
    pub proofs: Vec<(Pair, AcceptanceProof)>,
}

impl SigMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(TAG_SIG);
        w.len_of(self.family.len());
        for s in &self.family {
            w.pair_set(s.iter());
        }
        w.len_of(self.endorse.len());
        for e in &self.endorse {
            e.encode_into(&mut w);
        }
        w.len_of(self.proofs.len());
        for (p, pr) in &self.proofs {
            w.pair(p);
            pr.encode_into(&mut w);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tag = r.u8()?;
        if tag != TAG_SIG {
            return Err(DecodeError::UnknownTag(tag));
        }
        let n = r.count()?;
        if n > 1 << MAX_RC_CANDIDATES {
            return Err(DecodeError::TooMany(n as u32));
        }
        let mut family = Vec::with_capacity(n);
        for _ in 0..n {
            family.push(r.pair_set()?);
        }
        let n = r.count()?;
        let mut endorse = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            endorse.push(Endorsement::decode_from(&mut r)?);
        }
        let n = r.count()?;
        let mut proofs = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let p = r.pair()?;
            proofs.push((p, AcceptanceProof::decode_from(&mut r)?));
        }
        r.end()?;
        Ok(SigMessage {
            family,
            endorse,
            proofs,
        })
    }

    /// The generator if `family` is exactly a powerset.
    fn generator(&self) -> Option<BTreeSet<Pair>> {
        let union: BTreeSet<Pair> = self.family.iter().flatten().cloned().collect();
        if union.len() > MAX_RC_CANDIDATES || self.family.len() != 1 << union.len() {
            return None;
        }
        let distinct: BTreeSet<&BTreeSet<Pair>> = self.family.iter().collect();
        (distinct.len() == self.family.len()).then_some(union)
    }
}

pub fn encode_retract(r: &Retraction) -> Vec<u8> {
    let mut w = Writer::with_tag(TAG_RETRACT);
    r.encode_into(&mut w);
    w.finish()
}

pub fn decode_retract(bytes: &[u8]) -> Result<Retraction, DecodeError> {
    let mut r = Reader::new(bytes);
    let tag = r.u8()?;
    if tag != TAG_RETRACT {
        return Err(DecodeError::UnknownTag(tag));
    }
    let out = Retraction::decode_from(&mut r)?;
    r.end()?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RcFailure {
    Malformed,
    InvalidProof,
    UnprovenSigner,
    ForeignProof,
    BadSignature,
    Timeout,
}

impl RcFailure {
    pub fn name(self) -> &'static str {
        match self {
            RcFailure::Malformed => "malformed",
            RcFailure::InvalidProof => "invalid-proof",
            RcFailure::UnprovenSigner => "unproven-signer",
            RcFailure::ForeignProof => "foreign-proof",
            RcFailure::BadSignature => "bad-signature",
            RcFailure::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RcDecision {
    pub set: BTreeSet<Pair>,
    pub endorse: Vec<Endorsement>,
    pub retract: Vec<Retraction>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RcOutput {
    SendSig { to: Vec<ProcessId>, bytes: Vec<u8> },
    SendRetract { to: Vec<ProcessId>, bytes: Vec<u8> },
    StartTimer,
    Decided(RcDecision),
    NoDecision(RcFailure),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RcOutcome {
    Decided(RcDecision),
    NoDecision(RcFailure),
}

#[derive(Clone, Debug)]
pub struct RcConfig {
    pub me: ProcessId,
    pub roster: Arc<Roster>,
    pub domain: Vec<u8>,
    /// Context under which the participants' acceptance proofs are checked.
    pub proofs: VerifyContext,
}

#[derive(Clone, Debug)]
pub struct RestrainedConsensus {
    cfg: RcConfig,
    kp: KeyPair,
    retracted: bool,
    proposed: bool,
    power: Option<BTreeSet<Pair>>,
    endorse: BTreeSet<Endorsement>,
    retracts: BTreeMap<ProcessId, Retraction>,
    proofs: BTreeMap<Pair, AcceptanceProof>,
    known: BTreeSet<ProcessId>,
    timer_started: bool,
    outcome: Option<RcOutcome>,
}

fn proposers(set: &BTreeSet<Pair>) -> BTreeSet<ProcessId> {
    set.iter().map(|p| p.proposer).collect()
}

impl RestrainedConsensus {
    pub fn new(cfg: RcConfig, kp: KeyPair) -> Self {
        RestrainedConsensus {
            cfg,
            kp,
            retracted: false,
            proposed: false,
            power: None,
            endorse: BTreeSet::new(),
            retracts: BTreeMap::new(),
            proofs: BTreeMap::new(),
            known: BTreeSet::new(),
            timer_started: false,
            outcome: None,
        }
    }

    pub fn outcome(&self) -> Option<&RcOutcome> {
        self.outcome.as_ref()
    }

    pub fn has_proposed(&self) -> bool {
        self.proposed
    }

    pub fn has_retracted(&self) -> bool {
        self.retracted
    }

    /// Generator of the current endorsed family, if any.
    pub fn power_generator(&self) -> Option<&BTreeSet<Pair>> {
        self.power.as_ref()
    }

    /// First-instance proofs gathered from participants.
    pub fn proofs(&self) -> &BTreeMap<Pair, AcceptanceProof> {
        &self.proofs
    }

    pub fn known_participants(&self) -> &BTreeSet<ProcessId> {
        &self.known
    }

    fn me(&self) -> ProcessId {
        self.cfg.me
    }

    fn start_timer(&mut self, out: &mut Vec<RcOutput>) {
        if !self.timer_started {
            self.timer_started = true;
            out.push(RcOutput::StartTimer);
        }
    }

    fn fail(&mut self, f: RcFailure, out: &mut Vec<RcOutput>) {
        if self.outcome.is_none() {
            self.outcome = Some(RcOutcome::NoDecision(f));
            out.push(RcOutput::NoDecision(f));
        }
    }

    /// `own` must be accepted with `proof`, be in `set` and be ours.
    pub fn propose(
        &mut self,
        set: &BTreeSet<Pair>,
        own: &Pair,
        proof: &AcceptanceProof,
    ) -> Result<Vec<RcOutput>, ConfigError> {
        if set.len() > MAX_RC_CANDIDATES {
            return Err(ConfigError::TooManyCandidates(set.len()));
        }
        let mut out = Vec::new();
        let legit = own.proposer == self.me() && set.contains(own) && verify_acceptance(own, proof, &self.cfg.proofs);
        if self.retracted || self.proposed || !legit {
            return Ok(out);
        }
        self.proposed = true;
        self.power = Some(set.clone());
        for subset in powerset(set) {
            self.endorse
                .insert(Endorsement::sign(&self.kp, &self.cfg.domain, self.me(), subset));
        }
        self.proofs = BTreeMap::from([(own.clone(), proof.compact_for(own))]);
        self.known.extend(proposers(set));
        self.known.insert(self.me());

        let msg = SigMessage {
            family: powerset(set),
            endorse: self.endorse.iter().cloned().collect(),
            proofs: self.proofs.iter().map(|(p, pr)| (p.clone(), pr.clone())).collect(),
        };
        let to: Vec<ProcessId> = proposers(set).into_iter().filter(|p| *p != self.me()).collect();
        out.push(RcOutput::SendSig {
            to,
            bytes: msg.encode(),
        });
        self.start_timer(&mut out);
        self.check_decision(&mut out);
        Ok(out)
    }

    fn validate_sig(&self, msg: &SigMessage) -> Result<BTreeSet<Pair>, RcFailure> {
        let set = msg.generator().ok_or(RcFailure::Malformed)?;
        for (pair, proof) in &msg.proofs {
            if !verify_acceptance(pair, proof, &self.cfg.proofs) {
                return Err(RcFailure::InvalidProof);
            }
            if !set.contains(pair) {
                return Err(RcFailure::ForeignProof);
            }
        }
        let proven: BTreeSet<ProcessId> = msg
            .proofs
            .iter()
            .map(|(p, _)| p.proposer)
            .chain(self.proofs.keys().map(|p| p.proposer))
            .collect();
        for e in &msg.endorse {
            if !proven.contains(&e.signer) {
                return Err(RcFailure::UnprovenSigner);
            }
        }
        for e in &msg.endorse {
            if !self.endorse.contains(e) && !e.verify(&self.cfg.roster, &self.cfg.domain) {
                return Err(RcFailure::BadSignature);
            }
        }
        Ok(set)
    }

    pub fn on_sig(&mut self, bytes: &[u8]) -> Vec<RcOutput> {
        let mut out = Vec::new();
        let msg = match SigMessage::decode(bytes) {
            Ok(m) => m,
            Err(_) => {
                self.fail(RcFailure::Malformed, &mut out);
                return out;
            }
        };
        let set = match self.validate_sig(&msg) {
            Ok(s) => s,
            Err(f) => {
                self.fail(f, &mut out);
                return out;
            }
        };
        for (p, pr) in msg.proofs {
            self.proofs.entry(p).or_insert(pr);
        }
        self.endorse.extend(msg.endorse);
        self.known.extend(proposers(&set));

        if !self.proposed && !self.retracted {
            self.retracted = true;
            self.power = Some(set.clone());
            let r = Retraction::sign(&self.kp, &self.cfg.domain, self.me());
            self.retracts.insert(self.me(), r.clone());
            let to: Vec<ProcessId> = proposers(&set).into_iter().filter(|p| *p != self.me()).collect();
            out.push(RcOutput::SendRetract {
                to,
                bytes: encode_retract(&r),
            });
            self.start_timer(&mut out);
        }
        if let Some(own) = &self.power {
            self.power = Some(own.intersection(&set).cloned().collect());
        }
        self.check_decision(&mut out);
        out
    }

    pub fn on_retract(&mut self, bytes: &[u8]) -> Vec<RcOutput> {
        let mut out = Vec::new();
        let Ok(r) = decode_retract(bytes) else {
            return out;
        };
        if !r.verify(&self.cfg.roster, &self.cfg.domain) {
            return out;
        }
        let signer = r.signer;
        self.retracts.entry(signer).or_insert(r);
        self.known.insert(signer);
        if let Some(set) = &mut self.power {
            set.retain(|p| p.proposer != signer);
        }
        self.check_decision(&mut out);
        out
    }

    pub fn on_timer(&mut self) -> Vec<RcOutput> {
        let mut out = Vec::new();
        self.fail(RcFailure::Timeout, &mut out);
        out
    }

    fn check_decision(&mut self, out: &mut Vec<RcOutput>) {
        if self.outcome.is_some() {
            return;
        }
        let Some(e) = &self.power else {
            return;
        };
        if e.is_empty() {
            return;
        }
        let endorsed_e = proposers(e)
            .iter()
            .all(|q| self.endorse.iter().any(|en| en.signer == *q && en.set == *e));
        let covered = self
            .known
            .iter()
            .all(|q| self.retracts.contains_key(q) || self.endorse.iter().any(|en| en.signer == *q));
        if endorsed_e && covered {
            let d = RcDecision {
                set: e.clone(),
                endorse: self.endorse.iter().cloned().collect(),
                retract: self.retracts.values().cloned().collect(),
            };
            self.outcome = Some(RcOutcome::Decided(d.clone()));
            out.push(RcOutput::Decided(d));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{keys, ready_proof};
    use crate::types::ProcessId as P;

    struct Fixture {
        keys: Vec<KeyPair>,
        nodes: Vec<RestrainedConsensus>,
        a: Pair,
        b: Pair,
    }

    const CAC_DOMAIN: &[u8] = b"cac1";

    fn fixture() -> Fixture {
        let (roster, keys) = keys(4);
        let proofs = VerifyContext {
            n: 4,
            t: 1,
            roster: roster.clone(),
            domain: CAC_DOMAIN.to_vec(),
        };
        let nodes = (0..4)
            .map(|i| {
                let cfg = RcConfig {
                    me: P::from_index(i),
                    roster: roster.clone(),
                    domain: b"rc".to_vec(),
                    proofs: proofs.clone(),
                };
                RestrainedConsensus::new(cfg, keys[i].clone())
            })
            .collect();
        Fixture {
            keys,
            nodes,
            a: Pair::new("a", P(1)),
            b: Pair::new("b", P(2)),
        }
    }

    impl Fixture {
        fn proof(&self, pair: &Pair) -> AcceptanceProof {
            ready_proof(&self.keys, CAC_DOMAIN, pair, 3)
        }

        fn c(&self) -> BTreeSet<Pair> {
            [self.a.clone(), self.b.clone()].into()
        }

        fn clone_node(&self, i: usize) -> RestrainedConsensus {
            self.nodes[i].clone()
        }
    }

    fn sig_bytes(out: &[RcOutput]) -> Vec<u8> {
        out.iter()
            .find_map(|o| match o {
                RcOutput::SendSig { bytes, .. } => Some(bytes.clone()),
                _ => None,
            })
            .expect("no RCONS-SIG")
    }

    fn decision(out: &[RcOutput]) -> Option<&RcDecision> {
        out.iter().find_map(|o| match o {
            RcOutput::Decided(d) => Some(d),
            _ => None,
        })
    }

    #[test]
    fn propose_endorses_whole_powerset() {
        let mut f = fixture();
        let (c, a, pa) = (f.c(), f.a.clone(), f.proof(&f.a));
        let out = f.nodes[0].propose(&c, &a, &pa).unwrap();
        let msg = SigMessage::decode(&sig_bytes(&out)).unwrap();
        assert_eq!(msg.family.len(), 4);
        assert_eq!(msg.endorse.len(), 4);
        assert_eq!(msg.proofs.len(), 1);
        assert!(out.contains(&RcOutput::StartTimer));
        let RcOutput::SendSig { to, .. } = &out[0] else {
            panic!()
        };
        assert_eq!(to, &vec![P(2)]);
    }

    #[test]
    fn invalid_proof_is_a_noop() {
        let mut f = fixture();
        let (c, a) = (f.c(), f.a.clone());
        let weak = ready_proof(&f.keys, CAC_DOMAIN, &a, 2);
        assert!(f.nodes[0].propose(&c, &a, &weak).unwrap().is_empty());
        assert!(!f.nodes[0].has_proposed());
    }

    #[test]
    fn second_propose_is_a_noop() {
        let mut f = fixture();
        let (c, a, pa) = (f.c(), f.a.clone(), f.proof(&f.a));
        assert!(!f.nodes[0].propose(&c, &a, &pa).unwrap().is_empty());
        assert!(f.nodes[0].propose(&c, &a, &pa).unwrap().is_empty());
    }

    #[test]
    fn too_many_candidates_is_a_config_error() {
        let mut f = fixture();
        let c: BTreeSet<Pair> = (0..13).map(|i| Pair::new(vec![i], P(1))).collect();
        let own = c.iter().next().unwrap().clone();
        let pr = f.proof(&own);
        assert_eq!(
            f.nodes[0].propose(&c, &own, &pr),
            Err(ConfigError::TooManyCandidates(13))
        );
    }

    #[test]
    fn non_proposer_retracts_exactly_once() {
        let mut f = fixture();
        let (c, a, pa) = (f.c(), f.a.clone(), f.proof(&f.a));
        let bytes = sig_bytes(&f.nodes[0].propose(&c, &a, &pa).unwrap());
        let out = f.nodes[1].on_sig(&bytes);
        let retracts: Vec<_> = out
            .iter()
            .filter(|o| matches!(o, RcOutput::SendRetract { .. }))
            .collect();
        assert_eq!(retracts.len(), 1);
        assert!(out.contains(&RcOutput::StartTimer));
        let again = f.nodes[1].on_sig(&bytes);
        assert!(!again
            .iter()
            .any(|o| matches!(o, RcOutput::SendRetract { .. } | RcOutput::StartTimer)));
        assert!(f.nodes[1].has_retracted());
        // Proposing after retracting does nothing.
        let (b, pb) = (f.b.clone(), f.proof(&f.b));
        assert!(f.nodes[1].propose(&c, &b, &pb).unwrap().is_empty());
    }

    #[test]
    fn timer_gives_no_decision_once() {
        let mut f = fixture();
        assert_eq!(f.nodes[0].on_timer(), vec![RcOutput::NoDecision(RcFailure::Timeout)]);
        assert!(f.nodes[0].on_timer().is_empty());
    }

    #[test]
    fn two_participants_decide_the_same_set() {
        let mut f = fixture();
        let c = f.c();
        let (a, b, pa, pb) = (f.a.clone(), f.b.clone(), f.proof(&f.a), f.proof(&f.b));
        let m1 = sig_bytes(&f.nodes[0].propose(&c, &a, &pa).unwrap());
        let m2 = sig_bytes(&f.nodes[1].propose(&c, &b, &pb).unwrap());
        let d1 = decision(&f.nodes[0].on_sig(&m2)).cloned().unwrap();
        let d2 = decision(&f.nodes[1].on_sig(&m1)).cloned().unwrap();
        assert_eq!(d1.set, c);
        assert_eq!(d1, d2);
        let signers: BTreeSet<ProcessId> = d1.endorse.iter().map(|e| e.signer).collect();
        assert_eq!(signers, [P(1), P(2)].into());
        assert!(f.nodes[0].on_timer().is_empty());
    }

    #[test]
    fn retraction_shrinks_the_decided_set() {
        let mut f = fixture();
        let c = f.c();
        let (a, pa) = (f.a.clone(), f.proof(&f.a));
        let m1 = sig_bytes(&f.nodes[0].propose(&c, &a, &pa).unwrap());
        let out = f.nodes[1].on_sig(&m1);
        let r = out
            .iter()
            .find_map(|o| match o {
                RcOutput::SendRetract { bytes, .. } => Some(bytes.clone()),
                _ => None,
            })
            .unwrap();
        let d = decision(&f.nodes[0].on_retract(&r)).cloned().unwrap();
        assert_eq!(d.set, [a].into());
        assert_eq!(d.retract.len(), 1);
        assert_eq!(d.retract[0].signer, P(2));
    }

    #[test]
    fn waits_for_every_known_participant() {
        let mut f = fixture();
        let c3: BTreeSet<Pair> = [f.a.clone(), f.b.clone(), Pair::new("c", P(3))].into();
        let c2 = f.c();
        let (a, b, pa, pb) = (f.a.clone(), f.b.clone(), f.proof(&f.a), f.proof(&f.b));
        f.nodes[0].propose(&c3, &a, &pa).unwrap();
        let m2 = sig_bytes(&f.nodes[1].propose(&c2, &b, &pb).unwrap());
        // p3 is known to p1 but silent, so p1 may not decide yet.
        assert!(decision(&f.nodes[0].on_sig(&m2)).is_none());
        assert_eq!(f.nodes[0].power_generator(), Some(&c2));
        let r3 = encode_retract(&Retraction::sign(&f.keys[2], b"rc", P(3)));
        let d = decision(&f.nodes[0].on_retract(&r3)).cloned().unwrap();
        assert_eq!(d.set, c2);
    }

    #[test]
    fn malformed_sig_ends_in_no_decision() {
        let mut f = fixture();
        let out = f.nodes[0].on_sig(&[0x10, 0, 0]);
        assert_eq!(out, vec![RcOutput::NoDecision(RcFailure::Malformed)]);
    }

    #[test]
    fn rejects_unproven_signer_and_forged_endorsement() {
        let mut f = fixture();
        let c = f.c();
        let (a, pa) = (f.a.clone(), f.proof(&f.a));
        let honest = SigMessage::decode(&sig_bytes(&f.clone_node(0).propose(&c, &a, &pa).unwrap())).unwrap();

        let mut unproven = honest.clone();
        unproven.proofs.clear();
        assert_eq!(
            f.nodes[2].on_sig(&unproven.encode()),
            vec![RcOutput::NoDecision(RcFailure::UnprovenSigner)]
        );

        let mut forged = honest.clone();
        forged.endorse[0].sig.0[0] ^= 1;
        assert_eq!(
            f.nodes[3].on_sig(&forged.encode()),
            vec![RcOutput::NoDecision(RcFailure::BadSignature)]
        );

        let mut foreign = honest.clone();
        let x = Pair::new("x", P(4));
        foreign.proofs.push((x.clone(), f.proof(&x)));
        assert_eq!(
            f.nodes[1].on_sig(&foreign.encode()),
            vec![RcOutput::NoDecision(RcFailure::ForeignProof)]
        );

        let mut bad = honest;
        bad.proofs[0].1 = ready_proof(&f.keys, CAC_DOMAIN, &a, 1);
        let mut g = fixture();
        assert_eq!(
            g.nodes[1].on_sig(&bad.encode()),
            vec![RcOutput::NoDecision(RcFailure::InvalidProof)]
        );
    }

    #[test]
    fn powerset_order_is_fixed() {
        let s: BTreeSet<Pair> = [Pair::new("a", P(1)), Pair::new("b", P(2))].into();
        let ps = powerset(&s);
        assert_eq!(ps.len(), 4);
        assert!(ps[0].is_empty());
        assert_eq!(ps[3], s);
        assert_eq!(powerset(&BTreeSet::new()), vec![BTreeSet::new()]);
    }

    #[test]
    fn sig_message_round_trip_and_non_powerset_rejected() {
        let s: BTreeSet<Pair> = [Pair::new("a", P(1))].into();
        let msg = SigMessage {
            family: powerset(&s),
            endorse: vec![],
            proofs: vec![],
        };
        assert_eq!(SigMessage::decode(&msg.encode()).unwrap(), msg);
        assert!(msg.generator().is_some());
        let broken = SigMessage {
            family: vec![s.clone()],
            ..msg
        };
        assert!(broken.generator().is_none());
    }
}

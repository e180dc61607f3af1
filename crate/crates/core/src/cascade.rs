//! Cascading consensus: a first CAC instance decides when it sees no
//! conflict, conflicting proposers run restrained consensus, a second CAC
//! instance spreads its result, and a global consensus settles the rest.
//!
//! Global consensus is external: proposals leave as [`Action::Oracle`] and
//! decisions come back through [`Process::on_oracle`].

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::KeyPair;
use crate::engine::{AcceptedEntry, CacConfig, CacEngine, CacEvent, ConfigError};
use crate::optimal::OptimalCac;
use crate::process::{emit_cac, propose_cac, Action, DecidePath, Dest, Layer, Note, Process};
use crate::rc::{Endorsement, RcConfig, RcOutput, RestrainedConsensus, Retraction, MAX_RC_CANDIDATES};
use crate::statement::{verify_acceptance, AcceptanceProof, Roster, VerifyContext};
use crate::types::{choice, value_uniform, Pair, ProcessId};

pub const TIMER_RC: u64 = 1;
pub const TIMER_CC: u64 = 2;

/// What a process proposes to the second CAC instance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Cac2Payload {
    pub set: BTreeSet<Pair>,
    pub endorse: Vec<Endorsement>,
    pub retract: Vec<Retraction>,
    pub proofs: Vec<(Pair, AcceptanceProof)>,
}

impl Cac2Payload {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.pair_set(self.set.iter());
        w.len_of(self.endorse.len());
        for e in &self.endorse {
            e.encode_into(&mut w);
        }
        w.len_of(self.retract.len());
        for r in &self.retract {
            r.encode_into(&mut w);
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
        let set = r.pair_set()?;
        let n = r.count()?;
        let endorse = (0..n)
            .map(|_| Endorsement::decode_from(&mut r))
            .collect::<Result<_, _>>()?;
        let n = r.count()?;
        let retract = (0..n)
            .map(|_| Retraction::decode_from(&mut r))
            .collect::<Result<_, _>>()?;
        let n = r.count()?;
        let mut proofs = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let p = r.pair()?;
            proofs.push((p, AcceptanceProof::decode_from(&mut r)?));
        }
        r.end()?;
        Ok(Cac2Payload {
            set,
            endorse,
            retract,
            proofs,
        })
    }
}

/// Everything needed to judge a payload independently of any process state.
#[derive(Clone, Debug)]
pub struct Admission {
    pub cac1: VerifyContext,
    pub rc_roster: Arc<Roster>,
    pub rc_domain: Vec<u8>,
}

impl Admission {
    /// Payload rules for the second CAC instance.
    ///
    /// Every pair of the set needs a valid first-instance proof. A payload
    /// carrying endorsements must also be endorsed, as exactly that set, by
    /// every proposer in it, and every other proven proposer must have
    /// retracted.
    pub fn admits(&self, payload: &Cac2Payload) -> bool {
        if payload.set.is_empty() || payload.set.len() > MAX_RC_CANDIDATES {
            return false;
        }
        let proofs_ok = payload
            .proofs
            .iter()
            .all(|(p, pr)| verify_acceptance(p, pr, &self.cac1));
        let proven: BTreeSet<&Pair> = payload.proofs.iter().map(|(p, _)| p).collect();
        if !proofs_ok || !payload.set.iter().all(|p| proven.contains(p)) {
            return false;
        }
        if payload.endorse.is_empty() && payload.retract.is_empty() {
            return true;
        }
        let sigs_ok = payload
            .endorse
            .iter()
            .all(|e| e.verify(&self.rc_roster, &self.rc_domain))
            && payload
                .retract
                .iter()
                .all(|r| r.verify(&self.rc_roster, &self.rc_domain));
        if !sigs_ok {
            return false;
        }
        let endorsed_by_all = payload.set.iter().all(|p| {
            payload
                .endorse
                .iter()
                .any(|e| e.signer == p.proposer && e.set == payload.set)
        });
        let inside: BTreeSet<ProcessId> = payload.set.iter().map(|p| p.proposer).collect();
        let retracted: BTreeSet<ProcessId> = payload.retract.iter().map(|r| r.signer).collect();
        let others_retracted = proven
            .iter()
            .filter(|p| !inside.contains(&p.proposer))
            .all(|p| retracted.contains(&p.proposer));
        endorsed_by_all && others_retracted
    }

    pub fn admits_bytes(&self, bytes: &[u8]) -> bool {
        Cac2Payload::decode(bytes).is_ok_and(|p| self.admits(&p))
    }
}

pub fn encode_gc(pair: &Pair, proof: &AcceptanceProof) -> Vec<u8> {
    let mut w = Writer::new();
    w.pair(pair);
    proof.encode_into(&mut w);
    w.finish()
}

pub fn decode_gc(bytes: &[u8]) -> Result<(Pair, AcceptanceProof), DecodeError> {
    let mut r = Reader::new(bytes);
    let pair = r.pair()?;
    let proof = AcceptanceProof::decode_from(&mut r)?;
    r.end()?;
    Ok((pair, proof))
}

/// A global-consensus proposal worth deciding: a second-instance pair with a
/// valid proof and an admissible payload.
pub fn gc_admissible(bytes: &[u8], cac2: &VerifyContext, admission: &Admission) -> Option<(Pair, AcceptanceProof)> {
    let (pair, proof) = decode_gc(bytes).ok()?;
    (verify_acceptance(&pair, &proof, cac2) && admission.admits_bytes(&pair.value)).then_some((pair, proof))
}

#[derive(Clone, Debug)]
pub struct CcConfig {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub me: ProcessId,
    pub roster: Arc<Roster>,
    /// Prefix of the per-instance signature domains.
    pub instance: String,
    pub delta_rc: u64,
    pub delta_cc: u64,
}

impl CcConfig {
    pub fn domain(&self, layer: Layer) -> Vec<u8> {
        format!("{}/{}", self.instance, layer.name()).into_bytes()
    }

    fn cac(&self, layer: Layer) -> CacConfig {
        CacConfig::new(self.n, self.t, self.k, self.me, self.roster.clone(), self.domain(layer))
    }

    pub fn admission(&self) -> Admission {
        Admission {
            cac1: self.cac(Layer::Cac1).verify_context(),
            rc_roster: self.roster.clone(),
            rc_domain: self.domain(Layer::Rc),
        }
    }

    pub fn cac2_context(&self) -> VerifyContext {
        self.cac(Layer::Cac2).verify_context()
    }
}

#[derive(Debug)]
pub struct CascadeProcess {
    cfg: CcConfig,
    admission: Admission,
    cac1: OptimalCac,
    rc: RestrainedConsensus,
    cac2: OptimalCac,
    proposal: Option<Vec<u8>>,
    pi: BTreeMap<Pair, AcceptanceProof>,
    decided: Option<Vec<u8>>,
    tcc_started: bool,
    fallback_pending: bool,
    gc_proposed: bool,
}

impl CascadeProcess {
    pub fn new(cfg: CcConfig, kp: KeyPair, proposal: Option<Vec<u8>>) -> Result<Self, ConfigError> {
        let admission = cfg.admission();
        let cac1 = OptimalCac::new(cfg.cac(Layer::Cac1), kp.clone())?;
        let guard = admission.clone();
        let cac2_cfg = cfg
            .cac(Layer::Cac2)
            .with_validity(Arc::new(move |p: &Pair| guard.admits_bytes(&p.value)));
        let cac2 = OptimalCac::new(cac2_cfg, kp.clone())?;
        let rc = RestrainedConsensus::new(
            RcConfig {
                me: cfg.me,
                roster: cfg.roster.clone(),
                domain: cfg.domain(Layer::Rc),
                proofs: admission.cac1.clone(),
            },
            kp,
        );
        Ok(CascadeProcess {
            cfg,
            admission,
            cac1,
            rc,
            cac2,
            proposal,
            pi: BTreeMap::new(),
            decided: None,
            tcc_started: false,
            fallback_pending: false,
            gc_proposed: false,
        })
    }

    pub fn decided(&self) -> Option<&[u8]> {
        self.decided.as_deref()
    }

    pub fn cac1(&self) -> &OptimalCac {
        &self.cac1
    }

    pub fn cac2(&self) -> &OptimalCac {
        &self.cac2
    }

    pub fn rc(&self) -> &RestrainedConsensus {
        &self.rc
    }

    fn me(&self) -> ProcessId {
        self.cfg.me
    }

    fn decide(&mut self, value: Vec<u8>, via: DecidePath, out: &mut Vec<Action>) {
        if self.decided.is_none() {
            self.decided = Some(value.clone());
            out.push(Action::Note(Note::Decided { value, via }));
        }
    }

    fn record_proof(&mut self, entry: &AcceptedEntry) {
        if let Some(pr) = &entry.proof {
            self.pi
                .entry(entry.pair.clone())
                .or_insert_with(|| pr.compact_for(&entry.pair));
        }
    }

    fn cac1_events(&mut self, events: Vec<CacEvent>, origin: bool, out: &mut Vec<Action>) {
        let accepted: Vec<AcceptedEntry> = events
            .iter()
            .filter_map(|e| match e {
                CacEvent::Accepted(a) => Some(a.clone()),
                CacEvent::ProofAttached(a) => {
                    self.record_proof(a);
                    None
                }
                _ => None,
            })
            .collect();
        emit_cac(Layer::Cac1, events, origin, out);
        for entry in accepted {
            self.on_cac1_accept(entry, out);
        }
        if self.fallback_pending {
            self.propose_fallback(out);
        }
    }

    fn on_cac1_accept(&mut self, entry: AcceptedEntry, out: &mut Vec<Action>) {
        self.record_proof(&entry);
        let cands = self.cac1.candidates();
        let no_conflict = cands.singleton().is_some() || cands.pairs().is_some_and(|s| value_uniform(s));
        if no_conflict && self.decided.is_none() {
            self.decide(entry.pair.value.clone(), DecidePath::Cac1, out);
        } else if entry.pair.proposer == self.me() {
            let Some(set) = cands.pairs().cloned() else { return };
            let Some(proof) = entry.proof.clone() else { return };
            match self.rc.propose(&set, &entry.pair, &proof) {
                Ok(rc_out) => {
                    if self.rc.has_proposed() && !rc_out.is_empty() {
                        out.push(Action::Note(Note::RcProposed {
                            set: set.iter().cloned().collect(),
                        }));
                    }
                    self.rc_outputs(rc_out, out);
                }
                Err(_) => self.propose_fallback(out),
            }
        } else if !self.tcc_started {
            self.tcc_started = true;
            out.push(Action::SetTimer {
                id: TIMER_CC,
                after: 2 * self.cfg.delta_rc + self.cfg.delta_cc,
            });
        }
    }

    fn rc_outputs(&mut self, rc_out: Vec<RcOutput>, out: &mut Vec<Action>) {
        for o in rc_out {
            match o {
                RcOutput::SendSig { to, bytes } => out.push(Action::Send {
                    layer: Layer::Rc,
                    dest: Dest::To(to),
                    bytes,
                    origin: false,
                }),
                RcOutput::SendRetract { to, bytes } => {
                    out.push(Action::Note(Note::RcRetracted));
                    out.push(Action::Send {
                        layer: Layer::Rc,
                        dest: Dest::To(to),
                        bytes,
                        origin: false,
                    });
                }
                RcOutput::StartTimer => out.push(Action::SetTimer {
                    id: TIMER_RC,
                    after: 2 * self.cfg.delta_rc,
                }),
                RcOutput::Decided(d) => {
                    out.push(Action::Note(Note::RcDecided(d.clone())));
                    let mut proofs = self.pi.clone();
                    for (p, pr) in self.rc.proofs() {
                        proofs.entry(p.clone()).or_insert_with(|| pr.clone());
                    }
                    let payload = Cac2Payload {
                        set: d.set,
                        endorse: d.endorse,
                        retract: d.retract,
                        proofs: proofs.into_iter().collect(),
                    };
                    if self.admission.admits(&payload) {
                        self.propose_cac2(payload, out);
                    } else {
                        self.propose_fallback(out);
                    }
                }
                RcOutput::NoDecision(f) => {
                    out.push(Action::Note(Note::RcNoDecision(f)));
                    self.propose_fallback(out);
                }
            }
        }
    }

    /// Proposes the locally accepted pairs that carry proofs, or waits until
    /// there is at least one.
    fn propose_fallback(&mut self, out: &mut Vec<Action>) {
        let set: BTreeSet<Pair> = self
            .cac1
            .accepted()
            .iter()
            .map(|e| e.pair.clone())
            .filter(|p| self.pi.contains_key(p))
            .collect();
        if set.is_empty() {
            self.fallback_pending = true;
            return;
        }
        self.fallback_pending = false;
        let payload = Cac2Payload {
            set,
            endorse: Vec::new(),
            retract: Vec::new(),
            proofs: self.pi.iter().map(|(p, pr)| (p.clone(), pr.clone())).collect(),
        };
        self.propose_cac2(payload, out);
    }

    fn propose_cac2(&mut self, payload: Cac2Payload, out: &mut Vec<Action>) {
        let me = self.me();
        propose_cac(&mut self.cac2, Layer::Cac2, me, payload.encode(), out);
    }

    fn cac2_events(&mut self, events: Vec<CacEvent>, out: &mut Vec<Action>) {
        let accepted: Vec<AcceptedEntry> = events
            .iter()
            .filter_map(|e| match e {
                CacEvent::Accepted(a) => Some(a.clone()),
                _ => None,
            })
            .collect();
        emit_cac(Layer::Cac2, events, false, out);
        for entry in accepted {
            self.on_cac2_accept(entry, out);
        }
    }

    fn on_cac2_accept(&mut self, entry: AcceptedEntry, out: &mut Vec<Action>) {
        let Ok(payload) = Cac2Payload::decode(&entry.pair.value) else {
            return;
        };
        let single = self.cac2.candidates().singleton().is_some();
        let uniform = self.cac1.candidates().pairs().is_some_and(|s| value_uniform(s));
        if (single || uniform) && self.decided.is_none() {
            if let Some(c) = choice(&payload.set) {
                self.decide(c.value.clone(), DecidePath::Cac2, out);
            }
        } else if !self.gc_proposed {
            if let Some(proof) = &entry.proof {
                self.gc_proposed = true;
                out.push(Action::Note(Note::GcProposed {
                    pair: entry.pair.clone(),
                }));
                out.push(Action::Oracle(encode_gc(&entry.pair, &proof.compact_for(&entry.pair))));
            }
        }
    }
}

impl Process for CascadeProcess {
    fn id(&self) -> ProcessId {
        self.cfg.me
    }

    fn start(&mut self, out: &mut Vec<Action>) {
        if let Some(v) = self.proposal.clone() {
            let me = self.me();
            propose_cac(&mut self.cac1, Layer::Cac1, me, v, out);
        }
    }

    fn on_message(&mut self, from: ProcessId, layer: Layer, bytes: &[u8], out: &mut Vec<Action>) {
        match layer {
            Layer::Cac1 => {
                let events = self.cac1.handle(bytes, from);
                self.cac1_events(events, false, out);
            }
            Layer::Cac2 => {
                let events = self.cac2.handle(bytes, from);
                self.cac2_events(events, out);
            }
            Layer::Rc => {
                let rc_out = if bytes.first() == Some(&crate::rc::TAG_RETRACT) {
                    self.rc.on_retract(bytes)
                } else {
                    self.rc.on_sig(bytes)
                };
                self.rc_outputs(rc_out, out);
            }
            Layer::Cac | Layer::Naming => {}
        }
    }

    fn on_timer(&mut self, id: u64, out: &mut Vec<Action>) {
        match id {
            TIMER_RC => {
                let rc_out = self.rc.on_timer();
                self.rc_outputs(rc_out, out);
            }
            TIMER_CC => self.propose_fallback(out),
            _ => {}
        }
    }

    fn on_oracle(&mut self, bytes: &[u8], out: &mut Vec<Action>) {
        let ctx = self.cfg.cac2_context();
        if let Some((pair, _)) = gc_admissible(bytes, &ctx, &self.admission) {
            if let Ok(payload) = Cac2Payload::decode(&pair.value) {
                if let Some(c) = choice(&payload.set) {
                    self.decide(c.value.clone(), DecidePath::Gc, out);
                }
            }
        }
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.cac1.fingerprint().hash(&mut h);
        self.cac2.fingerprint().hash(&mut h);
        self.rc.has_proposed().hash(&mut h);
        self.rc.has_retracted().hash(&mut h);
        self.rc.outcome().hash(&mut h);
        self.pi.hash(&mut h);
        self.decided.hash(&mut h);
        (self.tcc_started, self.fallback_pending, self.gc_proposed).hash(&mut h);
        h.finish()
    }

    fn dropped(&self) -> u64 {
        self.cac1.dropped() + self.cac2.dropped()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{keys, ready_proof, Driver};
    use crate::types::ProcessId as P;

    fn config(n: usize, t: usize, i: usize, roster: Arc<Roster>) -> CcConfig {
        CcConfig {
            n,
            t,
            k: 1,
            me: P::from_index(i),
            roster,
            instance: "cc".into(),
            delta_rc: 2,
            delta_cc: 2,
        }
    }

    fn driver(n: usize, t: usize, proposals: &[(usize, &str)]) -> Driver {
        let (roster, ks) = keys(n);
        let procs = (0..n)
            .map(|i| {
                let v = proposals
                    .iter()
                    .find(|(j, _)| *j == i)
                    .map(|(_, v)| v.as_bytes().to_vec());
                Box::new(CascadeProcess::new(config(n, t, i, roster.clone()), ks[i].clone(), v).unwrap())
                    as Box<dyn Process>
            })
            .collect();
        Driver::new(procs)
    }

    #[test]
    fn single_proposer_decides_at_first_instance() {
        let mut d = driver(6, 1, &[(0, "v")]);
        d.start();
        d.run();
        let dec = d.decisions();
        assert_eq!(dec.len(), 6);
        assert!(dec.iter().all(|(_, v, via)| v == b"v" && *via == DecidePath::Cac1));
        assert!(d.timers.is_empty());
    }

    #[test]
    fn equal_values_decide_without_conflict_resolution() {
        let mut d = driver(4, 1, &[(0, "v"), (1, "v")]);
        d.start();
        d.run();
        d.fire_timers();
        d.run();
        let dec = d.decisions();
        assert_eq!(dec.len(), 4);
        assert!(dec.iter().all(|(_, v, _)| v == b"v"));
    }

    #[test]
    fn conflicting_proposers_agree() {
        let mut d = driver(4, 1, &[(0, "a"), (1, "b"), (2, "c")]);
        d.start();
        for _ in 0..4 {
            d.run();
            d.fire_timers();
        }
        d.run();
        if let Some((_, b)) = d.oracle.first().cloned() {
            d.deliver_oracle(&b);
        }
        let dec = d.decisions();
        assert_eq!(dec.len(), 4, "{dec:?}");
        assert!(dec.windows(2).all(|w| w[0].1 == w[1].1));
    }

    fn admission(n: usize) -> (Admission, Vec<KeyPair>) {
        let (roster, ks) = keys(n);
        (config(n, 1, 0, roster).admission(), ks)
    }

    #[test]
    fn admission_rules() {
        let (adm, ks) = admission(4);
        let a = Pair::new("a", P(1));
        let b = Pair::new("b", P(2));
        let pa = ready_proof(&ks, b"cc/cac1", &a, 3);
        let pb = ready_proof(&ks, b"cc/cac1", &b, 3);

        assert!(!adm.admits(&Cac2Payload::default()));

        let plain = Cac2Payload {
            set: [a.clone()].into(),
            proofs: vec![(a.clone(), pa.clone())],
            ..Default::default()
        };
        assert!(adm.admits(&plain));
        assert!(adm.admits_bytes(&plain.encode()));

        let unproven = Cac2Payload {
            set: [a.clone(), b.clone()].into(),
            proofs: vec![(a.clone(), pa.clone())],
            ..Default::default()
        };
        assert!(!adm.admits(&unproven));

        let weak = Cac2Payload {
            proofs: vec![(a.clone(), ready_proof(&ks, b"cc/cac1", &a, 2))],
            ..plain.clone()
        };
        assert!(!adm.admits(&weak));

        let e: BTreeSet<Pair> = [a.clone()].into();
        let endorse = vec![Endorsement::sign(&ks[0], b"cc/rc", P(1), e.clone())];
        let no_retract = Cac2Payload {
            set: e.clone(),
            endorse: endorse.clone(),
            retract: vec![],
            proofs: vec![(a.clone(), pa.clone()), (b.clone(), pb.clone())],
        };
        assert!(!adm.admits(&no_retract));
        let with_retract = Cac2Payload {
            retract: vec![Retraction::sign(&ks[1], b"cc/rc", P(2))],
            ..no_retract.clone()
        };
        assert!(adm.admits(&with_retract));
        let wrong_domain = Cac2Payload {
            retract: vec![Retraction::sign(&ks[1], b"other", P(2))],
            ..no_retract
        };
        assert!(!adm.admits(&wrong_domain));
    }

    #[test]
    fn payload_and_gc_round_trip() {
        let (_, ks) = admission(4);
        let a = Pair::new("a", P(1));
        let p = Cac2Payload {
            set: [a.clone()].into(),
            endorse: vec![Endorsement::sign(&ks[0], b"cc/rc", P(1), [a.clone()].into())],
            retract: vec![Retraction::sign(&ks[1], b"cc/rc", P(2))],
            proofs: vec![(a.clone(), ready_proof(&ks, b"cc/cac1", &a, 3))],
        };
        assert_eq!(Cac2Payload::decode(&p.encode()).unwrap(), p);
        let proof = ready_proof(&ks, b"cc/cac2", &a, 3);
        assert_eq!(decode_gc(&encode_gc(&a, &proof)).unwrap(), (a, proof));
        assert!(decode_gc(&[1, 2]).is_err());
    }

    #[test]
    fn oracle_decision_needs_a_valid_second_instance_proof() {
        let (roster, ks) = keys(4);
        let cfg = config(4, 1, 3, roster);
        let mut p = CascadeProcess::new(cfg, ks[3].clone(), None).unwrap();
        let a = Pair::new("a", P(1));
        let payload = Cac2Payload {
            set: [a.clone()].into(),
            proofs: vec![(a.clone(), ready_proof(&ks, b"cc/cac1", &a, 3))],
            ..Default::default()
        };
        let pair2 = Pair::new(payload.encode(), P(2));
        let mut out = Vec::new();
        p.on_oracle(&encode_gc(&pair2, &ready_proof(&ks, b"cc/cac2", &pair2, 2)), &mut out);
        assert!(out.is_empty());
        p.on_oracle(&encode_gc(&pair2, &ready_proof(&ks, b"cc/cac2", &pair2, 3)), &mut out);
        assert_eq!(
            out,
            vec![Action::Note(Note::Decided {
                value: b"a".to_vec(),
                via: DecidePath::Gc
            })]
        );
        p.on_oracle(&encode_gc(&pair2, &ready_proof(&ks, b"cc/cac2", &pair2, 3)), &mut out);
        assert_eq!(out.len(), 1);
    }
}

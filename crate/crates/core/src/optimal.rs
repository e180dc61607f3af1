//! Witness/ready CAC for `n >= 3t + k`.
//!
//! Statements carry per-signer sequence numbers and every message must be
//! hole free. Besides the quorum path (`n - t` READYs), processes may accept
//! directly once `n - t` processes witnessed a single pair and nothing else
//! when `n > 5t`. Processes stuck without a READY quorum unlock by
//! witnessing more pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hash, Hasher};

use crate::crypto::KeyPair;
use crate::engine::{
    AcceptPath, AcceptedEntry, CacConfig, CacEngine, CacEvent, ConfigError, DropCounter, DropReason, Fault,
};
use crate::statement::{AcceptanceProof, CacMessage, MessageKind, SigStore, Statement, StatementKind};
use crate::types::{choice, CandidateSet, Pair, ProcessId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub reason: Option<DropReason>,
}

#[derive(Clone, Debug)]
pub struct OptimalCac {
    cfg: CacConfig,
    kp: KeyPair,
    sigs: SigStore,
    candidates: CandidateSet,
    accepted: Vec<AcceptedEntry>,
    sigcount: u64,
    sent_any: bool,
    ready_msg_sent: bool,
    drops: DropCounter,
}

impl OptimalCac {
    pub fn new(cfg: CacConfig, kp: KeyPair) -> Result<Self, ConfigError> {
        if cfg.k == 0 {
            return Err(ConfigError::ZeroK);
        }
        if cfg.n < 3 * cfg.t + cfg.k {
            return Err(ConfigError::OptimalResilience {
                n: cfg.n,
                t: cfg.t,
                k: cfg.k,
            });
        }
        cfg.check_common(&kp)?;
        Ok(OptimalCac {
            cfg,
            kp,
            sigs: SigStore::new(),
            candidates: CandidateSet::Top,
            accepted: Vec::new(),
            sigcount: 0,
            sent_any: false,
            ready_msg_sent: false,
            drops: DropCounter::default(),
        })
    }

    pub fn config(&self) -> &CacConfig {
        &self.cfg
    }

    pub fn sigs(&self) -> &SigStore {
        &self.sigs
    }

    pub fn sigcount(&self) -> u64 {
        self.sigcount
    }

    pub fn wit_count(&self, pair: &Pair) -> usize {
        self.sigs.wit_count(pair)
    }

    /// Whether the fast path is structurally available.
    pub fn fast_path_enabled(&self) -> bool {
        self.cfg.n > 5 * self.cfg.t
    }

    pub fn validate(&self, bytes: &[u8]) -> ValidationReport {
        match self.check(bytes) {
            Ok(_) => ValidationReport {
                verdict: Verdict::Accept,
                reason: None,
            },
            Err(r) => ValidationReport {
                verdict: Verdict::Drop,
                reason: Some(r),
            },
        }
    }

    fn me(&self) -> ProcessId {
        self.cfg.me
    }

    fn check(&self, bytes: &[u8]) -> Result<CacMessage, DropReason> {
        let msg = CacMessage::decode(bytes).map_err(|_| DropReason::Malformed)?;
        if msg.kind == MessageKind::Bundle {
            return Err(DropReason::WrongKind);
        }
        let fresh: Vec<&Statement> = msg.statements.iter().filter(|s| !self.sigs.contains(s)).collect();
        if !fresh.iter().all(|s| s.verify(&self.cfg.roster, &self.cfg.domain)) {
            return Err(DropReason::BadSignature);
        }
        let mut seen_values = BTreeSet::new();
        for s in &fresh {
            let p = s.pair().ok_or(DropReason::Malformed)?;
            if self.sigs.wit_count(p) == 0 && seen_values.insert(p) && !self.cfg.value_ok(p) {
                return Err(DropReason::InvalidValue);
            }
        }

        let mut incoming: BTreeMap<ProcessId, BTreeSet<u64>> = BTreeMap::new();
        for s in &msg.statements {
            incoming.entry(s.signer).or_default().insert(s.seqno);
        }
        for (signer, seqs) in &incoming {
            let max = *seqs.iter().next_back().expect("non-empty");
            let held = self.sigs.seqnos(*signer);
            let covered =
                seqs.len() as u64 + held.map_or(0, |h| h.range(..=max).filter(|x| !seqs.contains(x)).count() as u64);
            if covered != max.saturating_add(1) {
                return Err(DropReason::SeqnoHole);
            }
        }

        let initiated: BTreeSet<&Pair> = msg
            .statements
            .iter()
            .filter(|s| s.kind == StatementKind::Wit)
            .filter_map(|s| s.pair().filter(|p| p.proposer == s.signer))
            .collect();
        for s in &msg.statements {
            let p = s.pair().expect("pair payload");
            if !initiated.contains(p) && !self.sigs.has_wit(p.proposer, p) {
                return Err(DropReason::MissingInitiatorWit);
            }
        }
        Ok(msg)
    }

    fn sign(&mut self, kind: StatementKind, pair: Pair) {
        let s = match kind {
            StatementKind::Wit => Statement::wit(&self.kp, &self.cfg.domain, self.me(), self.sigcount, pair),
            StatementKind::Ready => Statement::ready(&self.kp, &self.cfg.domain, self.me(), self.sigcount, pair),
        };
        self.sigcount += 1;
        self.sigs.insert(s);
    }

    fn broadcast(&mut self, kind: MessageKind, out: &mut Vec<CacEvent>) {
        self.sent_any = true;
        if kind == MessageKind::Ready {
            self.ready_msg_sent = true;
        }
        out.push(CacEvent::Broadcast {
            kind,
            bytes: CacMessage::encode(kind, self.sigs.iter()),
        });
    }

    fn ready_quorum(&self) -> usize {
        2 * self.cfg.t + self.cfg.k
    }

    fn send_readies(&mut self, out: &mut Vec<CacEvent>) {
        let me = self.me();
        let due: Vec<Pair> = self
            .sigs
            .witnessed_pairs()
            .filter(|(p, c)| *c >= self.ready_quorum() && !self.sigs.has_ready(me, p))
            .map(|(p, _)| p.clone())
            .collect();
        for pair in due {
            self.sign(StatementKind::Ready, pair);
            self.broadcast(MessageKind::Ready, out);
        }
    }

    fn set_candidates(&mut self, next: CandidateSet, out: &mut Vec<CacEvent>) {
        if next != self.candidates {
            self.candidates = next;
            out.push(CacEvent::CandidatesChanged(self.candidates.clone()));
        }
    }

    fn merge(&mut self, msg: CacMessage) {
        for s in msg.statements {
            self.sigs.insert(s);
        }
    }

    fn on_witness(&mut self, msg: CacMessage) -> Vec<CacEvent> {
        self.merge(msg);
        let mut out = Vec::new();
        let me = self.me();
        let (n, t) = (self.cfg.n, self.cfg.t);

        if self.sigcount == 0 {
            let chosen = choice(self.sigs.witnessed_pairs().map(|(p, _)| p)).cloned();
            if let Some(pair) = chosen {
                self.sign(StatementKind::Wit, pair);
                self.broadcast(MessageKind::Witness, &mut out);
            }
        }

        if self.sigs.wit_signers().len() > (n + t) / 2 {
            self.send_readies(&mut out);
            if self.fast_path_enabled() {
                let only = {
                    let mut pairs = self.sigs.witnessed_pairs();
                    match (pairs.next(), pairs.next()) {
                        (Some((p, c)), None) if c >= n - t => Some(p.clone()),
                        _ => None,
                    }
                };
                if let Some(pair) = only {
                    let next = self.candidates.intersect_with(&BTreeSet::from([pair.clone()]));
                    self.set_candidates(next, &mut out);
                    if self.candidates.contains(&pair) && !self.has_accepted(&pair) {
                        let entry = AcceptedEntry {
                            pair,
                            proof: None,
                            path: AcceptPath::Fast,
                        };
                        self.accepted.push(entry.clone());
                        out.push(CacEvent::Accepted(entry));
                    }
                }
            }
        }

        let p_size = self.sigs.wit_signers().len();
        if p_size >= n - t && !self.ready_msg_sent {
            let detect = if self.fast_path_enabled() {
                choice(
                    self.sigs
                        .witnessed_pairs()
                        .filter(|(_, c)| *c + 2 * t >= p_size)
                        .map(|(p, _)| p),
                )
                .cloned()
            } else {
                None
            };
            match detect {
                Some(pair) => {
                    if !self.sigs.has_wit(me, &pair) {
                        self.sign(StatementKind::Wit, pair);
                        self.broadcast(MessageKind::Witness, &mut out);
                    }
                }
                None => {
                    let m = self.sigs.witnessed_pairs().count();
                    let threshold = (n as i64 - ((m as i64 + 1) * t as i64)).max(1) as usize;
                    let targets: Vec<Pair> = self
                        .sigs
                        .witnessed_pairs()
                        .filter(|(p, c)| *c >= threshold && !self.sigs.has_wit(me, p))
                        .map(|(p, _)| p.clone())
                        .collect();
                    for pair in targets {
                        self.sign(StatementKind::Wit, pair);
                        self.broadcast(MessageKind::Witness, &mut out);
                    }
                }
            }
        }
        out
    }

    fn max_wit_count_with(&self, msg: &CacMessage) -> usize {
        let mut extra: BTreeMap<&Pair, BTreeSet<ProcessId>> = BTreeMap::new();
        for s in &msg.statements {
            if s.kind == StatementKind::Wit {
                extra
                    .entry(s.pair().expect("pair payload"))
                    .or_default()
                    .insert(s.signer);
            }
        }
        let held = self.sigs.witnessed_pairs().map(|(p, c)| match extra.get(p) {
            Some(e) => c + e.iter().filter(|x| !self.sigs.has_wit(**x, p)).count(),
            None => c,
        });
        let fresh = extra
            .iter()
            .filter(|(p, _)| self.sigs.wit_count(p) == 0)
            .map(|(_, e)| e.len());
        held.chain(fresh).max().unwrap_or(0)
    }

    fn on_ready(&mut self, msg: CacMessage) -> Vec<CacEvent> {
        if self.max_wit_count_with(&msg) < self.ready_quorum() {
            self.drops.record(DropReason::NoWitnessQuorum);
            return Vec::new();
        }
        self.merge(msg);
        let mut out = Vec::new();
        self.send_readies(&mut out);

        // Filtering is only sound once n - t signers are locked behind a
        // READY: after that at most 2t more WITs can show up for any pair.
        // Earlier, a pair may still gather its 2t + k witnesses.
        if self.sigs.ready_signers().len() < self.cfg.n - self.cfg.t {
            return out;
        }
        let backed: BTreeSet<Pair> = self
            .sigs
            .witnessed_pairs()
            .filter(|(_, c)| *c >= self.cfg.k)
            .map(|(p, _)| p.clone())
            .collect();
        let next = self.candidates.intersect_with(&backed);
        self.set_candidates(next, &mut out);

        let needed = match self.cfg.fault {
            Some(Fault::WeakAcceptance) => self.cfg.t + 1,
            None => self.cfg.n - self.cfg.t,
        };
        let ready: Vec<Pair> = self
            .candidates
            .pairs()
            .into_iter()
            .flatten()
            .filter(|p| self.sigs.ready_count(p) >= needed)
            .cloned()
            .collect();
        for pair in ready {
            let proof = AcceptanceProof::snapshot(&self.sigs);
            match self.accepted.iter_mut().find(|e| e.pair == pair) {
                None => {
                    let entry = AcceptedEntry {
                        pair,
                        proof: Some(proof),
                        path: AcceptPath::Quorum,
                    };
                    self.accepted.push(entry.clone());
                    out.push(CacEvent::Accepted(entry));
                }
                Some(e) if e.proof.is_none() => {
                    e.proof = Some(proof);
                    out.push(CacEvent::ProofAttached(e.clone()));
                }
                Some(_) => {}
            }
        }
        out
    }
}

impl CacEngine for OptimalCac {
    fn propose(&mut self, value: Vec<u8>) -> Vec<CacEvent> {
        if self.sent_any || self.sigcount > 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        self.sign(StatementKind::Wit, Pair::new(value, self.me()));
        self.broadcast(MessageKind::Witness, &mut out);
        out
    }

    fn handle(&mut self, bytes: &[u8], _sender: ProcessId) -> Vec<CacEvent> {
        match self.check(bytes) {
            Err(r) => {
                self.drops.record(r);
                Vec::new()
            }
            Ok(msg) => match msg.kind {
                MessageKind::Witness => self.on_witness(msg),
                MessageKind::Ready => self.on_ready(msg),
                MessageKind::Bundle => unreachable!("rejected by check"),
            },
        }
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
            e.proof.is_some().hash(&mut h);
        }
        (self.sigcount, self.sent_any, self.ready_msg_sent).hash(&mut h);
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statement::verify_acceptance;
    use crate::testkit::{bytes_of, msg_of, Net};
    use crate::types::ProcessId as P;
    use std::sync::Arc;

    fn pr(v: &str, j: u32) -> Pair {
        Pair::new(v, P(j))
    }

    fn accepted_pairs(ev: &[CacEvent]) -> Vec<Pair> {
        ev.iter()
            .filter_map(|e| match e {
                CacEvent::Accepted(a) => Some(a.pair.clone()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn wit_count_counts_distinct_signers() {
        let net = Net::optimal(4, 1, 1);
        let mut e = net.engines[3].clone();
        assert_eq!(e.wit_count(&pr("v", 1)), 0);
        let mut st: Vec<Statement> = (0..3)
            .map(|i| Statement::wit(&net.keys[i], &net.domain, P::from_index(i), 0, pr("v", 1)))
            .collect();
        st.push(Statement::wit(&net.keys[1], &net.domain, P(2), 1, pr("v", 1)));
        e.handle(&msg_of(MessageKind::Witness, &st), P(2));
        // p4 witnesses the pair itself on receipt.
        assert_eq!(e.wit_count(&pr("v", 1)), 4);

        let mut e = net.engines[3].clone();
        let st = vec![
            Statement::wit(&net.keys[0], &net.domain, P(1), 0, pr("v", 1)),
            Statement::wit(&net.keys[0], &net.domain, P(1), 1, pr("w", 1)),
            Statement::wit(&net.keys[1], &net.domain, P(2), 0, pr("v", 1)),
            Statement::wit(&net.keys[1], &net.domain, P(2), 1, pr("w", 1)),
        ];
        e.handle(&msg_of(MessageKind::Witness, &st), P(2));
        assert_eq!(e.wit_count(&pr("v", 1)), 3);
        assert_eq!(e.wit_count(&pr("w", 1)), 2);
    }

    #[test]
    fn validation_reasons() {
        let net = Net::optimal(4, 1, 1);
        let e = &net.engines[3];
        let w0 = Statement::wit(&net.keys[1], &net.domain, P(2), 0, pr("v", 2));
        let w2 = Statement::ready(&net.keys[1], &net.domain, P(2), 2, pr("v", 2));
        let hole = msg_of(MessageKind::Witness, &[w0.clone(), w2]);
        assert_eq!(e.validate(&hole).reason, Some(DropReason::SeqnoHole));

        let orphan = Statement::wit(&net.keys[0], &net.domain, P(1), 0, pr("v", 4));
        let m = msg_of(MessageKind::Witness, &[orphan]);
        assert_eq!(e.validate(&m).reason, Some(DropReason::MissingInitiatorWit));

        let ok = msg_of(MessageKind::Witness, &[w0.clone()]);
        assert_eq!(e.validate(&ok).verdict, Verdict::Accept);

        let mut bad = w0.clone();
        bad.sig.0[3] ^= 1;
        let m = msg_of(MessageKind::Witness, &[bad]);
        assert_eq!(e.validate(&m).reason, Some(DropReason::BadSignature));

        assert_eq!(e.validate(&[0x02, 0]).reason, Some(DropReason::Malformed));
        let late = Statement::wit(&net.keys[1], &net.domain, P(2), 1, pr("v", 2));
        let m = msg_of(MessageKind::Witness, &[late]);
        assert_eq!(e.validate(&m).reason, Some(DropReason::SeqnoHole));
    }

    #[test]
    fn drop_leaves_state_untouched() {
        let net = Net::optimal(4, 1, 1);
        let mut e = net.engines[0].clone();
        let before = e.fingerprint();
        let w = Statement::wit(&net.keys[1], &net.domain, P(2), 3, pr("v", 2));
        assert!(e.handle(&msg_of(MessageKind::Witness, &[w]), P(2)).is_empty());
        assert_eq!(e.fingerprint(), before);
        assert_eq!(e.dropped(), 1);
    }

    #[test]
    fn propose_is_single_shot() {
        let mut net = Net::optimal(4, 1, 1);
        let ev = net.engines[0].propose(b"v".to_vec());
        assert_eq!(ev.len(), 1);
        assert_eq!(net.engines[0].sigcount(), 1);
        let bytes = bytes_of(&ev);
        assert_eq!(CacMessage::decode(&bytes[0]).unwrap().statements.len(), 1);
        assert!(net.engines[0].propose(b"w".to_vec()).is_empty());
        net.engines[1].handle(&bytes[0], P(1));
        assert!(net.engines[1].propose(b"w".to_vec()).is_empty());
    }

    #[test]
    fn fast_path_with_five_witnesses() {
        let net = Net::optimal(6, 1, 1);
        let mut e = net.engines[5].clone();
        let st: Vec<Statement> = (0..5)
            .map(|i| Statement::wit(&net.keys[i], &net.domain, P::from_index(i), 0, pr("v", 2)))
            .collect();
        let ev = e.handle(&msg_of(MessageKind::Witness, &st), P(2));
        assert_eq!(accepted_pairs(&ev), vec![pr("v", 2)]);
        assert_eq!(e.candidates().singleton(), Some(&pr("v", 2)));
        assert_eq!(e.accepted()[0].path, AcceptPath::Fast);
    }

    #[test]
    fn no_fast_path_at_or_below_five_t() {
        let net = Net::optimal(5, 1, 1);
        let mut e = net.engines[4].clone();
        assert!(!e.fast_path_enabled());
        let st: Vec<Statement> = (0..4)
            .map(|i| Statement::wit(&net.keys[i], &net.domain, P::from_index(i), 0, pr("v", 1)))
            .collect();
        let ev = e.handle(&msg_of(MessageKind::Witness, &st), P(2));
        assert!(accepted_pairs(&ev).is_empty());
    }

    #[test]
    fn unlock_threshold_with_two_pairs() {
        // n=7, t=2: two observed pairs give threshold max(7 - 3*2, 1) = 1.
        let net = Net::optimal(7, 2, 1);
        let mut e = net.engines[6].clone();
        let st = vec![
            Statement::wit(&net.keys[0], &net.domain, P(1), 0, pr("a", 1)),
            Statement::wit(&net.keys[1], &net.domain, P(2), 0, pr("b", 2)),
            Statement::wit(&net.keys[2], &net.domain, P(3), 0, pr("a", 1)),
            Statement::wit(&net.keys[3], &net.domain, P(4), 0, pr("b", 2)),
        ];
        let ev = e.handle(&msg_of(MessageKind::Witness, &st), P(3));
        // Self-witness of the choice pair, then the unlock witnesses the other.
        assert!(e.sigs().has_wit(P(7), &pr("a", 1)));
        assert!(e.sigs().has_wit(P(7), &pr("b", 2)));
        assert_eq!(bytes_of(&ev).len(), 2);
    }

    #[test]
    fn ready_at_three_witnesses_for_n4() {
        let net = Net::optimal(4, 1, 1);
        let mut e = net.engines[3].clone();
        let st: Vec<Statement> = (0..3)
            .map(|i| Statement::wit(&net.keys[i], &net.domain, P::from_index(i), 0, pr("v", 1)))
            .collect();
        let ev = e.handle(&msg_of(MessageKind::Witness, &st), P(2));
        let kinds: Vec<_> = ev
            .iter()
            .filter_map(|x| match x {
                CacEvent::Broadcast { kind, .. } => Some(*kind),
                _ => None,
            })
            .collect();
        assert_eq!(kinds, vec![MessageKind::Witness, MessageKind::Ready]);
        assert!(e.sigs().has_ready(P(4), &pr("v", 1)));
    }

    #[test]
    fn ready_without_witness_quorum_is_dropped() {
        let net = Net::optimal(4, 1, 1);
        let mut e = net.engines[3].clone();
        let st = vec![
            Statement::wit(&net.keys[0], &net.domain, P(1), 0, pr("v", 1)),
            Statement::ready(&net.keys[0], &net.domain, P(1), 1, pr("v", 1)),
        ];
        let before = e.fingerprint();
        assert!(e.handle(&msg_of(MessageKind::Ready, &st), P(1)).is_empty());
        assert_eq!(e.drop_reasons()[&DropReason::NoWitnessQuorum], 1);
        assert_eq!(e.fingerprint(), before);
    }

    #[test]
    fn quorum_acceptance_with_verifying_proof() {
        let mut net = Net::optimal(4, 1, 1);
        net.propose(0, "v");
        net.run_fifo();
        let ctx = net.engines[0].config().verify_context();
        for e in &net.engines {
            assert_eq!(e.accepted().len(), 1);
            let a = &e.accepted()[0];
            assert_eq!(a.pair, pr("v", 1));
            assert_eq!(a.path, AcceptPath::Quorum);
            let proof = a.proof.as_ref().unwrap();
            assert!(verify_acceptance(&a.pair, proof, &ctx));
            assert!(verify_acceptance(&a.pair, &proof.compact_for(&a.pair), &ctx));
        }
    }

    #[test]
    fn candidates_shrink_to_backed_pairs() {
        // k = 2: a pair needs two witnesses to stay a candidate.
        let net = Net::optimal(5, 1, 2);
        let mut e = net.engines[4].clone();
        let mut st: Vec<Statement> = (0..4)
            .map(|i| Statement::wit(&net.keys[i], &net.domain, P::from_index(i), 0, pr("v", 1)))
            .collect();
        st.push(Statement::wit(&net.keys[1], &net.domain, P(2), 1, pr("w", 2)));
        st.push(Statement::wit(&net.keys[0], &net.domain, P(1), 1, pr("w", 2)));
        st.push(Statement::wit(&net.keys[2], &net.domain, P(3), 1, pr("w", 2)));
        st.push(Statement::wit(&net.keys[1], &net.domain, P(2), 2, pr("x", 2)));
        st.push(Statement::ready(&net.keys[0], &net.domain, P(1), 2, pr("v", 1)));
        st.push(Statement::ready(&net.keys[1], &net.domain, P(2), 3, pr("v", 1)));
        st.push(Statement::ready(&net.keys[2], &net.domain, P(3), 2, pr("v", 1)));
        let ev = e.handle(&msg_of(MessageKind::Ready, &st), P(1));
        let changed: Vec<_> = ev
            .iter()
            .filter_map(|x| match x {
                CacEvent::CandidatesChanged(c) => Some(c.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(changed, vec![[pr("v", 1), pr("w", 2)].into_iter().collect()]);
        let acc: Vec<_> = e.accepted().iter().map(|a| a.pair.clone()).collect();
        assert_eq!(acc, vec![pr("v", 1)]);
    }

    #[test]
    fn candidates_wait_for_locked_quorum() {
        // One READY leaves up to n - 1 signers free to witness new pairs.
        let net = Net::optimal(4, 1, 1);
        let mut e = net.engines[3].clone();
        let mut st: Vec<Statement> = (0..3)
            .map(|i| Statement::wit(&net.keys[i], &net.domain, P::from_index(i), 0, pr("v", 1)))
            .collect();
        st.push(Statement::ready(&net.keys[0], &net.domain, P(1), 1, pr("v", 1)));
        let ev = e.handle(&msg_of(MessageKind::Ready, &st), P(1));
        assert!(!ev.iter().any(|x| matches!(x, CacEvent::CandidatesChanged(_))));
        assert!(e.candidates().is_top());
    }

    #[test]
    fn value_hook_drops_message() {
        let net = Net::optimal(4, 1, 1);
        let cfg = net.engines[3]
            .config()
            .clone()
            .with_validity(Arc::new(|p: &Pair| p.value != b"bad"));
        let mut e = OptimalCac::new(cfg, net.keys[3].clone()).unwrap();
        let w = Statement::wit(&net.keys[0], &net.domain, P(1), 0, pr("bad", 1));
        e.handle(&msg_of(MessageKind::Witness, &[w]), P(1));
        assert_eq!(e.drop_reasons()[&DropReason::InvalidValue], 1);
    }

    #[test]
    fn resilience_checks() {
        let net = Net::optimal(4, 1, 1);
        let mk = |n, t, k| CacConfig::new(n, t, k, P(1), net.roster.clone(), "d");
        assert!(matches!(
            OptimalCac::new(mk(4, 1, 2), net.keys[0].clone()),
            Err(ConfigError::OptimalResilience { .. })
        ));
        assert_eq!(
            OptimalCac::new(mk(4, 1, 0), net.keys[0].clone()).unwrap_err(),
            ConfigError::ZeroK
        );
        assert_eq!(
            OptimalCac::new(mk(4, 1, 1), net.keys[1].clone()).unwrap_err(),
            ConfigError::KeyMismatch
        );
    }
}

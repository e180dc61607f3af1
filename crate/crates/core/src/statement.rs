//! Signed statements, the signature store and the CAC message codec.
//!
//! Signed bytes of a statement:
//!
//! ```text
//! u32 len(domain) | domain | u8 kind | u32 signer | u64 seqno | u32 len(payload) | payload
//! ```
//!
//! where a pair payload is `u32 proposer | u32 len(value) | value` and a
//! witness-set payload is `u32 count | statement*` (wire encoding, sorted).
//! The domain is the CAC instance identifier; it is not sent on the wire.
//!
//! Wire encoding of a statement is the signed bytes without the domain,
//! followed by the 64-byte signature. A message is `u8 kind | u32 count |
//! statement*`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{KeyPair, Provider, PublicKey, Signature};
use crate::types::{Pair, ProcessId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StatementKind {
    Wit,
    Ready,
}

impl StatementKind {
    pub fn tag(self) -> u8 {
        match self {
            StatementKind::Wit => 1,
            StatementKind::Ready => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self, DecodeError> {
        match t {
            1 => Ok(StatementKind::Wit),
            2 => Ok(StatementKind::Ready),
            other => Err(DecodeError::UnknownTag(other)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Payload {
    Pair(Pair),
    /// The frozen witness set of a bundle-style READY.
    Witnesses(BTreeSet<Statement>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Statement {
    pub signer: ProcessId,
    pub kind: StatementKind,
    pub seqno: u64,
    pub payload: Payload,
    pub sig: Signature,
}

/// Public keys of all processes, indexed by `ProcessId`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roster {
    provider: Provider,
    keys: Vec<PublicKey>,
}

impl Roster {
    pub fn new(provider: Provider, keys: Vec<PublicKey>) -> Self {
        Roster { provider, keys }
    }

    pub fn n(&self) -> usize {
        self.keys.len()
    }

    pub fn provider(&self) -> Provider {
        self.provider
    }

    pub fn key(&self, p: ProcessId) -> Option<&PublicKey> {
        if p.0 == 0 {
            return None;
        }
        self.keys.get(p.index())
    }

    pub fn verify(&self, signer: ProcessId, msg: &[u8], sig: &Signature) -> bool {
        match self.key(signer) {
            Some(pk) => self.provider.verify(pk, msg, sig),
            None => false,
        }
    }
}

fn payload_bytes(payload: &Payload) -> Vec<u8> {
    let mut w = Writer::new();
    match payload {
        Payload::Pair(p) => {
            w.pair(p);
        }
        Payload::Witnesses(m) => {
            w.len_of(m.len());
            for s in m {
                s.encode_into(&mut w);
            }
        }
    }
    w.finish()
}

fn signed_bytes(domain: &[u8], signer: ProcessId, kind: StatementKind, seqno: u64, payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(domain).u8(kind.tag()).pid(signer).u64(seqno).bytes(payload);
    w.finish()
}

impl Statement {
    pub fn sign(
        kp: &KeyPair,
        domain: &[u8],
        signer: ProcessId,
        kind: StatementKind,
        seqno: u64,
        payload: Payload,
    ) -> Self {
        let pb = payload_bytes(&payload);
        let sig = kp.sign(&signed_bytes(domain, signer, kind, seqno, &pb));
        Statement {
            signer,
            kind,
            seqno,
            payload,
            sig,
        }
    }

    pub fn wit(kp: &KeyPair, domain: &[u8], signer: ProcessId, seqno: u64, pair: Pair) -> Self {
        Self::sign(kp, domain, signer, StatementKind::Wit, seqno, Payload::Pair(pair))
    }

    pub fn ready(kp: &KeyPair, domain: &[u8], signer: ProcessId, seqno: u64, pair: Pair) -> Self {
        Self::sign(kp, domain, signer, StatementKind::Ready, seqno, Payload::Pair(pair))
    }

    pub fn pair(&self) -> Option<&Pair> {
        match &self.payload {
            Payload::Pair(p) => Some(p),
            Payload::Witnesses(_) => None,
        }
    }

    pub fn is_wit_for(&self, pair: &Pair) -> bool {
        self.kind == StatementKind::Wit && self.pair() == Some(pair)
    }

    pub fn signed_bytes(&self, domain: &[u8]) -> Vec<u8> {
        signed_bytes(
            domain,
            self.signer,
            self.kind,
            self.seqno,
            &payload_bytes(&self.payload),
        )
    }

    /// Checks this signature and, for witness-set payloads, every nested one.
    pub fn verify(&self, roster: &Roster, domain: &[u8]) -> bool {
        if let Payload::Witnesses(m) = &self.payload {
            if !m
                .iter()
                .all(|s| s.kind == StatementKind::Wit && s.verify(roster, domain))
            {
                return false;
            }
        }
        roster.verify(self.signer, &self.signed_bytes(domain), &self.sig)
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.u8(self.kind.tag())
            .pid(self.signer)
            .u64(self.seqno)
            .bytes(&payload_bytes(&self.payload))
            .sig(&self.sig);
    }

    fn decode_from(r: &mut Reader<'_>, form: MessageForm) -> Result<Self, DecodeError> {
        let kind = StatementKind::from_tag(r.u8()?)?;
        let signer = r.pid()?;
        let seqno = r.u64()?;
        let raw = r.bytes()?;
        let mut pr = Reader::new(raw);
        let payload = match (form, kind) {
            (MessageForm::Bundle, StatementKind::Ready) => {
                let n = pr.count()?;
                let mut m = BTreeSet::new();
                for _ in 0..n {
                    let s = Statement::decode_from(&mut pr, MessageForm::Pairs)?;
                    if s.kind != StatementKind::Wit {
                        return Err(DecodeError::Invalid("nested statement is not a WIT"));
                    }
                    m.insert(s);
                }
                Payload::Witnesses(m)
            }
            _ => Payload::Pair(pr.pair()?),
        };
        pr.end()?;
        let sig = r.sig()?;
        Ok(Statement {
            signer,
            kind,
            seqno,
            payload,
            sig,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MessageForm {
    Bundle,
    Pairs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    Bundle,
    Witness,
    Ready,
}

impl MessageKind {
    pub fn tag(self) -> u8 {
        match self {
            MessageKind::Bundle => 0x01,
            MessageKind::Witness => 0x02,
            MessageKind::Ready => 0x03,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            0x01 => Some(MessageKind::Bundle),
            0x02 => Some(MessageKind::Witness),
            0x03 => Some(MessageKind::Ready),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Bundle => "BUNDLE",
            MessageKind::Witness => "WITNESS",
            MessageKind::Ready => "READY",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacMessage {
    pub kind: MessageKind,
    pub statements: Vec<Statement>,
}

impl CacMessage {
    pub fn encode<'a>(kind: MessageKind, statements: impl ExactSizeIterator<Item = &'a Statement>) -> Vec<u8> {
        let mut w = Writer::with_tag(kind.tag());
        w.len_of(statements.len());
        for s in statements {
            s.encode_into(&mut w);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tag = r.u8()?;
        let kind = MessageKind::from_tag(tag).ok_or(DecodeError::UnknownTag(tag))?;
        let form = if kind == MessageKind::Bundle {
            MessageForm::Bundle
        } else {
            MessageForm::Pairs
        };
        let n = r.count()?;
        let mut statements = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            statements.push(Statement::decode_from(&mut r, form)?);
        }
        r.end()?;
        Ok(CacMessage { kind, statements })
    }
}

/// Set of verified statements with the indexes the engines query.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SigStore {
    all: BTreeSet<Statement>,
    wit: BTreeMap<Pair, BTreeSet<ProcessId>>,
    ready: BTreeMap<Pair, BTreeSet<ProcessId>>,
    ready_sets: BTreeMap<ProcessId, BTreeSet<BTreeSet<Pair>>>,
    wit_signers: BTreeSet<ProcessId>,
    ready_signers: BTreeSet<ProcessId>,
    seqnos: BTreeMap<ProcessId, BTreeSet<u64>>,
}

impl SigStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Idempotent; returns whether the statement was new.
    pub fn insert(&mut self, s: Statement) -> bool {
        if self.all.contains(&s) {
            return false;
        }
        self.seqnos.entry(s.signer).or_default().insert(s.seqno);
        match (&s.kind, &s.payload) {
            (StatementKind::Wit, Payload::Pair(p)) => {
                self.wit.entry(p.clone()).or_default().insert(s.signer);
                self.wit_signers.insert(s.signer);
            }
            (StatementKind::Ready, Payload::Pair(p)) => {
                self.ready.entry(p.clone()).or_default().insert(s.signer);
                self.ready_signers.insert(s.signer);
            }
            (StatementKind::Ready, Payload::Witnesses(m)) => {
                let pairs = m.iter().filter_map(|w| w.pair().cloned()).collect();
                self.ready_sets.entry(s.signer).or_default().insert(pairs);
                self.ready_signers.insert(s.signer);
            }
            (StatementKind::Wit, Payload::Witnesses(_)) => {}
        }
        self.all.insert(s);
        true
    }

    pub fn contains(&self, s: &Statement) -> bool {
        self.all.contains(s)
    }

    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Statement> {
        self.all.iter()
    }

    /// Distinct signers with a WIT for `pair`.
    pub fn wit_count(&self, pair: &Pair) -> usize {
        self.wit.get(pair).map_or(0, BTreeSet::len)
    }

    pub fn wit_signers_of(&self, pair: &Pair) -> Option<&BTreeSet<ProcessId>> {
        self.wit.get(pair)
    }

    pub fn has_wit(&self, signer: ProcessId, pair: &Pair) -> bool {
        self.wit.get(pair).is_some_and(|s| s.contains(&signer))
    }

    /// Pairs with at least one WIT, in choice order.
    pub fn witnessed_pairs(&self) -> impl Iterator<Item = (&Pair, usize)> {
        self.wit.iter().map(|(p, s)| (p, s.len()))
    }

    pub fn wit_signers(&self) -> &BTreeSet<ProcessId> {
        &self.wit_signers
    }

    pub fn ready_signers(&self) -> &BTreeSet<ProcessId> {
        &self.ready_signers
    }

    pub fn ready_count(&self, pair: &Pair) -> usize {
        self.ready.get(pair).map_or(0, BTreeSet::len)
    }

    pub fn has_ready(&self, signer: ProcessId, pair: &Pair) -> bool {
        self.ready.get(pair).is_some_and(|s| s.contains(&signer))
    }

    /// Witness-set READYs grouped by signer.
    pub fn ready_sets(&self) -> &BTreeMap<ProcessId, BTreeSet<BTreeSet<Pair>>> {
        &self.ready_sets
    }

    pub fn seqnos(&self, signer: ProcessId) -> Option<&BTreeSet<u64>> {
        self.seqnos.get(&signer)
    }

    pub fn signed_by(&self, signer: ProcessId) -> bool {
        self.seqnos.contains_key(&signer)
    }

    pub fn wit_statements(&self) -> BTreeSet<Statement> {
        self.all
            .iter()
            .filter(|s| s.kind == StatementKind::Wit)
            .cloned()
            .collect()
    }
}

/// Transferable evidence that a pair was legitimately accepted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AcceptanceProof {
    pub statements: Vec<Statement>,
}

impl AcceptanceProof {
    pub fn snapshot(store: &SigStore) -> Self {
        AcceptanceProof {
            statements: store.iter().cloned().collect(),
        }
    }

    /// Keeps only the READY statements for `pair`; verification is unaffected.
    pub fn compact_for(&self, pair: &Pair) -> Self {
        AcceptanceProof {
            statements: self
                .statements
                .iter()
                .filter(|s| s.kind == StatementKind::Ready && s.pair() == Some(pair))
                .cloned()
                .collect(),
        }
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.len_of(self.statements.len());
        for s in &self.statements {
            s.encode_into(w);
        }
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = r.count()?;
        let mut statements = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            statements.push(Statement::decode_from(r, MessageForm::Pairs)?);
        }
        Ok(AcceptanceProof { statements })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let p = Self::decode_from(&mut r)?;
        r.end()?;
        Ok(p)
    }
}

/// Everything needed to check statements of one CAC instance.
#[derive(Debug, Clone)]
pub struct VerifyContext {
    pub n: usize,
    pub t: usize,
    pub roster: Arc<Roster>,
    pub domain: Vec<u8>,
}

/// True iff `proof` holds verifying READY statements for `pair` from at
/// least `n - t` distinct signers.
pub fn verify_acceptance(pair: &Pair, proof: &AcceptanceProof, ctx: &VerifyContext) -> bool {
    let mut signers = BTreeSet::new();
    for s in &proof.statements {
        if s.kind == StatementKind::Ready
            && s.pair() == Some(pair)
            && !signers.contains(&s.signer)
            && s.verify(&ctx.roster, &ctx.domain)
        {
            signers.insert(s.signer);
        }
    }
    signers.len() >= ctx.n - ctx.t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster(n: usize) -> (Arc<Roster>, Vec<KeyPair>) {
        let kps: Vec<_> = (0..n as u64).map(|i| Provider::Digest.keygen(i)).collect();
        let r = Roster::new(Provider::Digest, kps.iter().map(KeyPair::public_key).collect());
        (Arc::new(r), kps)
    }

    #[test]
    fn statement_round_trip_and_verify() {
        let (r, kps) = roster(3);
        let s = Statement::wit(&kps[1], b"d", ProcessId(2), 0, Pair::new("v", ProcessId(1)));
        assert!(s.verify(&r, b"d"));
        assert!(!s.verify(&r, b"other-domain"));
        let bytes = CacMessage::encode(MessageKind::Witness, [&s].into_iter());
        let m = CacMessage::decode(&bytes).unwrap();
        assert_eq!(m.statements, vec![s.clone()]);
        let mut forged = s.clone();
        forged.signer = ProcessId(3);
        assert!(!forged.verify(&r, b"d"));
    }

    #[test]
    fn bundle_ready_nests_witnesses() {
        let (r, kps) = roster(2);
        let w = Statement::wit(&kps[0], b"d", ProcessId(1), 0, Pair::new("v", ProcessId(1)));
        let m: BTreeSet<_> = [w.clone()].into();
        let rd = Statement::sign(
            &kps[1],
            b"d",
            ProcessId(2),
            StatementKind::Ready,
            0,
            Payload::Witnesses(m),
        );
        assert!(rd.verify(&r, b"d"));
        let bytes = CacMessage::encode(MessageKind::Bundle, [&w, &rd].into_iter());
        let back = CacMessage::decode(&bytes).unwrap();
        assert_eq!(back.statements, vec![w, rd]);
    }

    #[test]
    fn garbage_never_panics() {
        for len in 0..64 {
            let junk: Vec<u8> = (0..len).map(|i| (i * 37 + 11) as u8).collect();
            let _ = CacMessage::decode(&junk);
        }
        assert!(CacMessage::decode(&[0x02, 0, 0, 0, 1]).is_err());
        assert!(CacMessage::decode(&[0x09, 0, 0, 0, 0]).is_err());
        assert!(CacMessage::decode(&[0x02, 0, 0, 0, 0, 7]).is_err());
    }

    #[test]
    fn store_counts_distinct_signers() {
        let (_, kps) = roster(3);
        let v = Pair::new("v", ProcessId(1));
        let w = Pair::new("w", ProcessId(1));
        let mut st = SigStore::new();
        assert_eq!(st.wit_count(&v), 0);
        for (i, kp) in kps.iter().enumerate() {
            st.insert(Statement::wit(kp, b"d", ProcessId::from_index(i), 0, v.clone()));
        }
        let dup = Statement::wit(&kps[1], b"d", ProcessId(2), 1, v.clone());
        assert!(st.insert(dup.clone()));
        assert!(!st.insert(dup));
        assert_eq!(st.wit_count(&v), 3);
        st.insert(Statement::wit(&kps[1], b"d", ProcessId(2), 2, w.clone()));
        assert_eq!(st.wit_count(&w), 1);
        assert_eq!(st.seqnos(ProcessId(2)).unwrap().len(), 3);
    }

    #[test]
    fn proof_threshold_boundary() {
        let (r, kps) = roster(4);
        let ctx = VerifyContext {
            n: 4,
            t: 1,
            roster: r,
            domain: b"d".to_vec(),
        };
        let v = Pair::new("v", ProcessId(1));
        let readies: Vec<_> = (0..3)
            .map(|i| Statement::ready(&kps[i], b"d", ProcessId::from_index(i), 1, v.clone()))
            .collect();
        let full = AcceptanceProof {
            statements: readies.clone(),
        };
        assert!(verify_acceptance(&v, &full, &ctx));
        assert!(!verify_acceptance(&Pair::new("w", ProcessId(1)), &full, &ctx));
        let short = AcceptanceProof {
            statements: readies[..2].to_vec(),
        };
        assert!(!verify_acceptance(&v, &short, &ctx));
        let doubled = AcceptanceProof {
            statements: vec![readies[0].clone(), readies[1].clone(), readies[1].clone()],
        };
        assert!(!verify_acceptance(&v, &doubled, &ctx));
        let back = AcceptanceProof::from_bytes(&full.to_bytes()).unwrap();
        assert_eq!(back, full);
    }
}

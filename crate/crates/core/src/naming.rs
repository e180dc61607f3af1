//! Short naming: every claimant ends up with the shortest prefix of its key
//! rendering that nobody else contested.
//!
//! Each candidate name has a claim CAC instance. A claimant whose claim is
//! accepted with no competing candidate commits through its own per-name
//! commit instance; otherwise it retries with one more character. Commits are
//! registered once the matching claim is accepted locally.

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{KeyPair, KnowledgeProof, Provider, PublicKey};
use crate::engine::{AcceptedEntry, CacConfig, CacEngine, CacEvent, ConfigError};
use crate::optimal::OptimalCac;
use crate::process::{Action, Dest, Layer, Note, Process};
use crate::statement::Roster;
use crate::types::{Pair, ProcessId};

pub const RENDER_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz234567";
/// Characters in the rendering of a 32-byte key.
pub const RENDER_LEN: usize = 52;

const TAG_CLAIM: u8 = 0;
const TAG_COMMIT: u8 = 1;

pub fn render(pk: &PublicKey) -> String {
    base32::encode(base32::Alphabet::Rfc4648Lower { padding: false }, pk.as_bytes())
}

pub fn max_common_prefix<'a>(a: &'a str, b: &str) -> &'a str {
    let len = a
        .char_indices()
        .zip(b.chars())
        .find(|((_, x), y)| x != y)
        .map_or(a.len().min(b.len()), |((i, _), _)| i);
    &a[..len]
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.len() <= RENDER_LEN && name.chars().all(|c| RENDER_ALPHABET.contains(c))
}

/// A claim or commit value: the public key and its knowledge proof.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NameValue {
    pub pk: PublicKey,
    pub proof: KnowledgeProof,
}

impl NameValue {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(self.pk.as_bytes()).sig(&self.proof.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let pk = r.public_key()?;
        let proof = KnowledgeProof(r.sig()?);
        r.end()?;
        Ok(NameValue { pk, proof })
    }

    /// The proof holds and `name` is a prefix of the key's rendering.
    pub fn valid_for(&self, name: &str, provider: Provider) -> bool {
        provider.verify_knowledge(&self.pk, &self.proof) && render(&self.pk).starts_with(name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Instance {
    Claim(String),
    Commit(String, ProcessId),
}

impl Instance {
    pub fn name(&self) -> &str {
        match self {
            Instance::Claim(n) | Instance::Commit(n, _) => n,
        }
    }

    pub fn domain(&self) -> Vec<u8> {
        match self {
            Instance::Claim(n) => format!("naming/claim/{n}").into_bytes(),
            Instance::Commit(n, j) => format!("naming/commit/{n}/{}", j.0).into_bytes(),
        }
    }
}

pub fn encode_wire(inst: &Instance, inner: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    match inst {
        Instance::Claim(n) => {
            w.u8(TAG_CLAIM).bytes(n.as_bytes());
        }
        Instance::Commit(n, j) => {
            w.u8(TAG_COMMIT).bytes(n.as_bytes()).pid(*j);
        }
    }
    w.raw(inner);
    w.finish()
}

pub fn decode_wire(bytes: &[u8]) -> Result<(Instance, &[u8]), DecodeError> {
    let mut r = Reader::new(bytes);
    let tag = r.u8()?;
    let name = std::str::from_utf8(r.bytes()?)
        .map_err(|_| DecodeError::Invalid("name is not utf-8"))?
        .to_string();
    if !valid_name(&name) {
        return Err(DecodeError::Invalid("name outside the rendering alphabet"));
    }
    let inst = match tag {
        TAG_CLAIM => Instance::Claim(name),
        TAG_COMMIT => Instance::Commit(name, r.pid()?),
        t => return Err(DecodeError::UnknownTag(t)),
    };
    let rest = r.take(r.remaining())?;
    Ok((inst, rest))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NameRecord {
    pub pk: PublicKey,
    pub proof: KnowledgeProof,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct InFlight {
    name: String,
    value: NameValue,
    len: usize,
}

#[derive(Debug)]
pub struct NamingProcess {
    me: ProcessId,
    n: usize,
    t: usize,
    roster: Arc<Roster>,
    kp: KeyPair,
    claim: Option<NameValue>,
    engines: BTreeMap<Instance, OptimalCac>,
    names: BTreeMap<String, NameRecord>,
    prop: Vec<InFlight>,
    deferred: Vec<(String, ProcessId, NameValue)>,
}

impl NamingProcess {
    /// `claim` is the key this process asks a name for, if any.
    pub fn new(
        n: usize,
        t: usize,
        me: ProcessId,
        roster: Arc<Roster>,
        kp: KeyPair,
        claim: Option<NameValue>,
    ) -> Result<Self, ConfigError> {
        // Build one engine up front so configuration errors surface here.
        let probe = Self::engine_config(n, t, me, &roster, &Instance::Claim("a".into()));
        OptimalCac::new(probe, kp.clone())?;
        Ok(NamingProcess {
            me,
            n,
            t,
            roster,
            kp,
            claim,
            engines: BTreeMap::new(),
            names: BTreeMap::new(),
            prop: Vec::new(),
            deferred: Vec::new(),
        })
    }

    fn engine_config(n: usize, t: usize, me: ProcessId, roster: &Arc<Roster>, inst: &Instance) -> CacConfig {
        let provider = roster.provider();
        let name = inst.name().to_string();
        let owner = match inst {
            Instance::Claim(_) => None,
            Instance::Commit(_, j) => Some(*j),
        };
        let hook = move |p: &Pair| {
            owner.map_or(true, |j| p.proposer == j)
                && NameValue::decode(&p.value).is_ok_and(|v| v.valid_for(&name, provider))
        };
        CacConfig::new(n, t, 1, me, roster.clone(), inst.domain()).with_validity(Arc::new(hook))
    }

    fn engine(&mut self, inst: &Instance) -> &mut OptimalCac {
        if !self.engines.contains_key(inst) {
            let cfg = Self::engine_config(self.n, self.t, self.me, &self.roster, inst);
            let e = OptimalCac::new(cfg, self.kp.clone()).expect("checked at construction");
            self.engines.insert(inst.clone(), e);
        }
        self.engines.get_mut(inst).expect("just inserted")
    }

    pub fn names(&self) -> &BTreeMap<String, NameRecord> {
        &self.names
    }

    /// Sorted `name rendering` lines.
    pub fn registry_dump(&self) -> String {
        self.names
            .iter()
            .map(|(n, r)| format!("{n} {}\n", render(&r.pk)))
            .collect()
    }

    pub fn claim(&mut self, value: NameValue, out: &mut Vec<Action>) {
        if !self.roster.provider().verify_knowledge(&value.pk, &value.proof) {
            return;
        }
        self.choose_name(1, value, out);
    }

    fn choose_name(&mut self, mut len: usize, value: NameValue, out: &mut Vec<Action>) {
        let rendering = render(&value.pk);
        while len <= RENDER_LEN && self.names.contains_key(&rendering[..len]) {
            len += 1;
        }
        if len > RENDER_LEN {
            out.push(Action::Note(Note::ClaimFailed { pk: value.pk }));
            return;
        }
        let name = rendering[..len].to_string();
        self.prop.push(InFlight {
            name: name.clone(),
            value: value.clone(),
            len,
        });
        let inst = Instance::Claim(name.clone());
        let events = self.engine(&inst).propose(value.encode());
        if !events.is_empty() {
            out.push(Action::Note(Note::ClaimProposed { name, pk: value.pk }));
        }
        self.emit(&inst, events, true, out);
        // An acceptance that happened before we joined will not repeat.
        let earlier = self.engines[&inst].accepted().first().cloned();
        if let Some(entry) = earlier {
            self.on_claim_accept(inst.name().to_string(), entry, out);
        }
    }

    fn emit(&mut self, inst: &Instance, events: Vec<CacEvent>, origin: bool, out: &mut Vec<Action>) {
        let mut accepted = Vec::new();
        for ev in events {
            match ev {
                CacEvent::Broadcast { bytes, .. } => out.push(Action::Send {
                    layer: Layer::Naming,
                    dest: Dest::All,
                    bytes: encode_wire(inst, &bytes),
                    origin,
                }),
                CacEvent::Accepted(a) => accepted.push(a),
                CacEvent::CandidatesChanged(_) | CacEvent::ProofAttached(_) => {}
            }
        }
        for entry in accepted {
            match inst {
                Instance::Claim(name) => self.on_claim_accept(name.clone(), entry, out),
                Instance::Commit(name, j) => self.on_commit_accept(name.clone(), *j, entry, out),
            }
        }
    }

    fn on_claim_accept(&mut self, name: String, entry: AcceptedEntry, out: &mut Vec<Action>) {
        let provider = self.roster.provider();
        let Some(value) = NameValue::decode(&entry.pair.value)
            .ok()
            .filter(|v| v.valid_for(&name, provider))
        else {
            return;
        };
        if let Some(pos) = self.prop.iter().position(|p| p.name == name) {
            let mine = self.prop.remove(pos);
            let inst = Instance::Claim(name.clone());
            let uncontested = self.engines[&inst].candidates().singleton().is_some();
            if uncontested && mine.value.proof == value.proof {
                let commit = Instance::Commit(name, self.me);
                let events = self.engine(&commit).propose(mine.value.encode());
                self.emit(&commit, events, true, out);
            } else {
                self.choose_name(mine.len + 1, mine.value, out);
            }
        }
        self.retry_deferred(out);
    }

    fn on_commit_accept(&mut self, name: String, claimer: ProcessId, entry: AcceptedEntry, out: &mut Vec<Action>) {
        let provider = self.roster.provider();
        let Some(value) = NameValue::decode(&entry.pair.value)
            .ok()
            .filter(|v| v.valid_for(&name, provider))
        else {
            return;
        };
        self.deferred.push((name, claimer, value));
        self.retry_deferred(out);
    }

    fn retry_deferred(&mut self, out: &mut Vec<Action>) {
        let pending = std::mem::take(&mut self.deferred);
        for (name, claimer, value) in pending {
            let claimed = self
                .engines
                .get(&Instance::Claim(name.clone()))
                .is_some_and(|e| e.accepted().iter().any(|a| a.pair.value == value.encode()));
            if !claimed {
                self.deferred.push((name, claimer, value));
            } else if !self.names.contains_key(&name) {
                out.push(Action::Note(Note::NameRegistered {
                    name: name.clone(),
                    claimer,
                    pk: value.pk,
                }));
                self.names.insert(
                    name,
                    NameRecord {
                        pk: value.pk,
                        proof: value.proof,
                    },
                );
            }
        }
    }
}

impl Process for NamingProcess {
    fn id(&self) -> ProcessId {
        self.me
    }

    fn start(&mut self, out: &mut Vec<Action>) {
        if let Some(v) = self.claim.take() {
            self.claim(v, out);
        }
    }

    fn on_message(&mut self, from: ProcessId, layer: Layer, bytes: &[u8], out: &mut Vec<Action>) {
        if layer != Layer::Naming {
            return;
        }
        let Ok((inst, inner)) = decode_wire(bytes) else { return };
        if let Instance::Commit(_, j) = &inst {
            if j.0 == 0 || j.index() >= self.n {
                return;
            }
        }
        let events = self.engine(&inst).handle(inner, from);
        self.emit(&inst, events, false, out);
    }

    fn on_timer(&mut self, _id: u64, _out: &mut Vec<Action>) {}

    fn on_oracle(&mut self, _bytes: &[u8], _out: &mut Vec<Action>) {}

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (inst, e) in &self.engines {
            inst.hash(&mut h);
            e.fingerprint().hash(&mut h);
        }
        self.names.hash(&mut h);
        self.prop.hash(&mut h);
        self.deferred.hash(&mut h);
        h.finish()
    }

    fn dropped(&self) -> u64 {
        self.engines.values().map(|e| e.dropped()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{keys, Driver};
    use crate::types::ProcessId as P;

    fn value(seed: u64) -> NameValue {
        let kp = Provider::Digest.keygen(seed);
        NameValue {
            pk: kp.public_key(),
            proof: kp.prove_knowledge(),
        }
    }

    /// First seed at or after `from` whose rendering starts with `prefix`.
    fn seed_with_prefix(prefix: &str, from: u64) -> u64 {
        (from..).find(|s| render(&value(*s).pk).starts_with(prefix)).unwrap()
    }

    fn driver(n: usize, t: usize, claims: &[(usize, NameValue)]) -> Driver {
        let (roster, ks) = keys(n);
        let procs = (0..n)
            .map(|i| {
                let c = claims.iter().find(|(j, _)| *j == i).map(|(_, v)| v.clone());
                Box::new(NamingProcess::new(n, t, P::from_index(i), roster.clone(), ks[i].clone(), c).unwrap())
                    as Box<dyn Process>
            })
            .collect();
        Driver::new(procs)
    }

    fn registered(d: &Driver) -> Vec<(ProcessId, String)> {
        d.notes
            .iter()
            .filter_map(|(p, n)| match n {
                Note::NameRegistered { name, .. } => Some((*p, name.clone())),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn max_common_prefix_examples() {
        assert_eq!(max_common_prefix("abcdefg", "abcfed"), "abc");
        assert_eq!(max_common_prefix("xyz", "xyz"), "xyz");
        assert_eq!(max_common_prefix("a", "b"), "");
        assert_eq!(max_common_prefix("ab", "abc"), "ab");
    }

    #[test]
    fn rendering_is_fixed_base32() {
        let pk = PublicKey([0; 32]);
        assert_eq!(render(&pk), "a".repeat(RENDER_LEN));
        let pk = PublicKey([0xff; 32]);
        assert_eq!(render(&pk).len(), RENDER_LEN);
        assert!(render(&pk).starts_with("7777"));
        assert_ne!(render(&value(1).pk), render(&value(2).pk));
    }

    #[test]
    fn wire_round_trip_and_bad_names() {
        let inst = Instance::Commit("ab".into(), P(3));
        let bytes = encode_wire(&inst, &[9, 9]);
        let (i2, rest) = decode_wire(&bytes).unwrap();
        assert_eq!(i2, inst);
        assert_eq!(rest, &[9, 9]);
        assert!(decode_wire(&encode_wire(&Instance::Claim("A!".into()), &[])).is_err());
        assert!(decode_wire(&encode_wire(&Instance::Claim(String::new()), &[])).is_err());
    }

    #[test]
    fn value_validity() {
        let v = value(5);
        let r = render(&v.pk);
        assert!(v.valid_for(&r[..1], Provider::Digest));
        assert!(v.valid_for(&r, Provider::Digest));
        let other = if r.starts_with('a') { "b" } else { "a" };
        assert!(!v.valid_for(other, Provider::Digest));
        let forged = NameValue {
            proof: value(6).proof,
            ..v.clone()
        };
        assert!(!forged.valid_for(&r[..1], Provider::Digest));
        assert_eq!(NameValue::decode(&v.encode()).unwrap(), v);
    }

    #[test]
    fn invalid_proof_emits_nothing() {
        let (roster, ks) = keys(4);
        let mut p = NamingProcess::new(4, 1, P(1), roster, ks[0].clone(), None).unwrap();
        let bad = NameValue {
            proof: value(8).proof,
            ..value(7)
        };
        let mut out = Vec::new();
        p.claim(bad, &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn sole_claimant_gets_one_character() {
        let v = value(11);
        let first = render(&v.pk)[..1].to_string();
        let mut d = driver(4, 1, &[(0, v)]);
        d.start();
        d.run();
        let reg = registered(&d);
        assert_eq!(reg.len(), 4);
        assert!(reg.iter().all(|(_, n)| *n == first));
    }

    #[test]
    fn shared_first_character_backs_off_to_two() {
        let s1 = seed_with_prefix("ab", 0);
        let s2 = (0..)
            .find(|s| {
                let r = render(&value(*s).pk);
                r.starts_with('a') && !r.starts_with("ab")
            })
            .unwrap();
        let (v1, v2) = (value(s1), value(s2));
        let mut d = driver(4, 1, &[(0, v1.clone()), (1, v2.clone())]);
        d.start();
        d.run();
        let claimed: Vec<String> = d
            .notes
            .iter()
            .filter_map(|(_, n)| match n {
                Note::ClaimProposed { name, .. } => Some(name.clone()),
                _ => None,
            })
            .collect();
        assert!(claimed.contains(&"a".to_string()));
        assert!(claimed.contains(&"ab".to_string()));
        let reg = registered(&d);
        assert_eq!(reg.len(), 8);
        assert!(reg.iter().all(|(_, n)| n.len() == 2));
        assert!(reg.iter().any(|(_, n)| n == "ab"));
    }

    #[test]
    fn claim_on_taken_name_skips_ahead() {
        let (roster, ks) = keys(4);
        let v = value(seed_with_prefix("a", 0));
        let mut p = NamingProcess::new(4, 1, P(1), roster, ks[0].clone(), None).unwrap();
        p.names.insert(
            "a".into(),
            NameRecord {
                pk: value(1).pk,
                proof: value(1).proof,
            },
        );
        let mut out = Vec::new();
        p.claim(v.clone(), &mut out);
        let expect = render(&v.pk)[..2].to_string();
        assert!(out.contains(&Action::Note(Note::ClaimProposed { name: expect, pk: v.pk })));
    }
}

//! Scripted Byzantine behaviors.
//!
//! Every behavior except `silent` wraps an honest process and rewrites what
//! it emits. Behaviors only ever sign with the Byzantine process's own key,
//! so anything claiming another signer fails verification.

use std::collections::{BTreeSet, VecDeque};

use cac_core::naming::{decode_wire, encode_wire};
use cac_core::process::CacProcess;
use cac_core::statement::{CacMessage, MessageKind, Payload, StatementKind};
use cac_core::{Action, AnyCac, Dest, KeyPair, Layer, Pair, Process, ProcessId, Statement};

use crate::scenario::{Algorithm, Behavior, BehaviorKind};

/// The honest part a behavior drives.
pub enum Inner {
    /// Bare CAC participant; behaviors may read its signature store.
    Cac(CacProcess),
    Other(Box<dyn Process>),
}

impl Inner {
    fn process(&mut self) -> &mut dyn Process {
        match self {
            Inner::Cac(p) => p,
            Inner::Other(p) => p.as_mut(),
        }
    }

    fn process_ref(&self) -> &dyn Process {
        match self {
            Inner::Cac(p) => p,
            Inner::Other(p) => p.as_ref(),
        }
    }
}

pub struct Byzantine {
    me: ProcessId,
    n: usize,
    t: usize,
    algorithm: Algorithm,
    behavior: Behavior,
    kp: KeyPair,
    /// Signature domain of the bare CAC stack.
    domain: Vec<u8>,
    inner: Option<Inner>,
    received: VecDeque<(Layer, Vec<u8>)>,
    double_ready_done: bool,
}

impl Byzantine {
    /// `inner` is ignored for `silent`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        me: ProcessId,
        n: usize,
        t: usize,
        algorithm: Algorithm,
        behavior: Behavior,
        kp: KeyPair,
        domain: Vec<u8>,
        inner: Inner,
    ) -> Self {
        let inner = (behavior.kind != BehaviorKind::Silent).then_some(inner);
        Byzantine {
            me,
            n,
            t,
            algorithm,
            behavior,
            kp,
            domain,
            inner,
            received: VecDeque::new(),
            double_ready_done: false,
        }
    }

    fn witness_kind(&self) -> MessageKind {
        match self.algorithm {
            Algorithm::Simple => MessageKind::Bundle,
            Algorithm::Optimal => MessageKind::Witness,
        }
    }

    fn send(layer: Layer, dest: Dest, bytes: Vec<u8>, out: &mut Vec<Action>) {
        out.push(Action::Send {
            layer,
            dest,
            bytes,
            origin: false,
        });
    }

    /// Conflicting self-signed WITs at seqno 0, one per half of the system.
    fn equivocate(&self, out: &mut Vec<Action>) {
        let mut values = self.behavior.values.clone();
        values.resize_with(2, Vec::new);
        if values[0].is_empty() {
            values[0] = b"x".to_vec();
        }
        if values[1].is_empty() {
            values[1] = b"y".to_vec();
        }
        let half = self.n / 2;
        let groups = [
            ProcessId::all(self.n).take(half).collect::<Vec<_>>(),
            ProcessId::all(self.n).skip(half).collect(),
        ];
        for (v, to) in values.into_iter().zip(groups) {
            let s = Statement::wit(&self.kp, &self.domain, self.me, 0, Pair::new(v, self.me));
            let bytes = CacMessage::encode(self.witness_kind(), [&s].into_iter());
            out.push(Action::Send {
                layer: Layer::Cac,
                dest: Dest::To(to),
                bytes,
                origin: true,
            });
        }
    }

    /// Own WITs at seqnos 0 and 2, leaving a hole at 1.
    fn inject_hole(&self, out: &mut Vec<Action>) {
        let a = Statement::wit(&self.kp, &self.domain, self.me, 0, Pair::new("h0", self.me));
        let b = Statement::wit(&self.kp, &self.domain, self.me, 2, Pair::new("h2", self.me));
        Self::send(
            Layer::Cac,
            Dest::All,
            CacMessage::encode(self.witness_kind(), [&a, &b].into_iter()),
            out,
        );
    }

    fn victim(&self) -> ProcessId {
        self.behavior
            .victim
            .unwrap_or(ProcessId::from_index((self.me.index() + 1) % self.n))
    }

    /// A copy of a CAC message with one statement that claims the victim as
    /// signer but carries our own signature.
    fn forge_cac(&self, bytes: &[u8]) -> Option<Vec<u8>> {
        let msg = CacMessage::decode(bytes).ok()?;
        let v = self.victim();
        let mut forged = Statement::wit(&self.kp, &self.domain, self.me, 0, Pair::new("forged", v));
        forged.signer = v;
        let mut statements = msg.statements;
        statements.push(forged);
        // Also corrupt a genuine signature.
        if let Some(s) = statements.first_mut() {
            s.sig.0[0] ^= 0x5a;
        }
        Some(CacMessage::encode(msg.kind, statements.iter()))
    }

    fn forge(&self, layer: Layer, bytes: &[u8]) -> Option<Vec<u8>> {
        match layer {
            Layer::Cac | Layer::Cac1 | Layer::Cac2 => self.forge_cac(bytes),
            Layer::Naming => {
                let (inst, inner) = decode_wire(bytes).ok()?;
                Some(encode_wire(&inst, &self.forge_cac(inner)?))
            }
            Layer::Rc => None,
        }
    }

    /// Extra READY statements beyond what the honest engine would sign.
    fn double_ready(&mut self, out: &mut Vec<Action>) {
        let Some(Inner::Cac(p)) = &self.inner else {
            return;
        };
        match p.engine() {
            AnyCac::Optimal(e) => {
                if !e.sigs().ready_signers().contains(&self.me) {
                    return;
                }
                let base = e.sigcount();
                let mut extra = Vec::new();
                let pairs: Vec<Pair> = e
                    .sigs()
                    .witnessed_pairs()
                    .map(|(p, _)| p.clone())
                    .filter(|p| !e.sigs().has_ready(self.me, p))
                    .collect();
                for pair in pairs {
                    let r = Statement::ready(&self.kp, &self.domain, self.me, base, pair);
                    extra.push(vec![r]);
                }
                let bogus = Pair::new("bogus", self.me);
                extra.push(vec![
                    Statement::wit(&self.kp, &self.domain, self.me, base, bogus.clone()),
                    Statement::ready(&self.kp, &self.domain, self.me, base + 1, bogus),
                ]);
                for add in extra {
                    let all: Vec<&Statement> = e.sigs().iter().chain(add.iter()).collect();
                    Self::send(
                        Layer::Cac,
                        Dest::All,
                        CacMessage::encode(MessageKind::Ready, all.into_iter()),
                        out,
                    );
                }
            }
            AnyCac::Simple(e) => {
                let Some(frozen) = e.frozen_witnesses() else {
                    return;
                };
                let mut m = e.sigs().wit_statements();
                if &m == frozen {
                    if frozen.len() <= self.n - self.t {
                        return;
                    }
                    let last = m.iter().next_back().cloned().expect("non-empty");
                    m.remove(&last);
                }
                let r = Statement::sign(
                    &self.kp,
                    &self.domain,
                    self.me,
                    StatementKind::Ready,
                    0,
                    Payload::Witnesses(m),
                );
                let all: Vec<&Statement> = e.sigs().iter().chain([&r]).collect();
                Self::send(
                    Layer::Cac,
                    Dest::All,
                    CacMessage::encode(MessageKind::Bundle, all.into_iter()),
                    out,
                );
            }
        }
        self.double_ready_done = true;
    }

    fn rewrite(&mut self, actions: Vec<Action>, out: &mut Vec<Action>) {
        for a in actions {
            let Action::Send {
                layer,
                dest,
                bytes,
                origin,
            } = a
            else {
                out.push(a);
                continue;
            };
            match self.behavior.kind {
                BehaviorKind::SelectiveSend
                    if self.behavior.layers.is_empty() || self.behavior.layers.contains(&layer) =>
                {
                    let targets = match dest {
                        Dest::All => ProcessId::all(self.n).collect(),
                        Dest::To(v) => v,
                    };
                    let kept: Vec<ProcessId> = if self.behavior.omit.is_empty() {
                        Vec::new()
                    } else {
                        targets
                            .into_iter()
                            .filter(|q| !self.behavior.omit.contains(q))
                            .collect()
                    };
                    if !kept.is_empty() {
                        out.push(Action::Send {
                            layer,
                            dest: Dest::To(kept),
                            bytes,
                            origin,
                        });
                    }
                }
                BehaviorKind::ForgeSignature => {
                    let forged = self.forge(layer, &bytes);
                    out.push(Action::Send {
                        layer,
                        dest,
                        bytes,
                        origin,
                    });
                    if let Some(f) = forged {
                        Self::send(layer, Dest::All, f, out);
                    }
                }
                BehaviorKind::Replay => {
                    out.push(Action::Send {
                        layer,
                        dest,
                        bytes,
                        origin,
                    });
                    if let Some((l, old)) = self.received.pop_front() {
                        Self::send(l, Dest::All, old, out);
                    }
                }
                _ => out.push(Action::Send {
                    layer,
                    dest,
                    bytes,
                    origin,
                }),
            }
        }
    }
}

impl Process for Byzantine {
    fn id(&self) -> ProcessId {
        self.me
    }

    fn start(&mut self, out: &mut Vec<Action>) {
        let Some(inner) = self.inner.as_mut() else {
            return;
        };
        let mut acts = Vec::new();
        inner.process().start(&mut acts);
        match self.behavior.kind {
            BehaviorKind::EquivocateWitness => self.equivocate(out),
            BehaviorKind::HoleInjector => self.inject_hole(out),
            _ => {}
        }
        self.rewrite(acts, out);
    }

    fn on_message(&mut self, from: ProcessId, layer: Layer, bytes: &[u8], out: &mut Vec<Action>) {
        let Some(inner) = self.inner.as_mut() else {
            return;
        };
        let mut acts = Vec::new();
        inner.process().on_message(from, layer, bytes, &mut acts);
        if self.behavior.kind == BehaviorKind::Replay && from != self.me {
            self.received.push_back((layer, bytes.to_vec()));
        }
        self.rewrite(acts, out);
        if self.behavior.kind == BehaviorKind::DoubleReady && !self.double_ready_done {
            self.double_ready(out);
        }
    }

    fn on_timer(&mut self, id: u64, out: &mut Vec<Action>) {
        let Some(inner) = self.inner.as_mut() else {
            return;
        };
        let mut acts = Vec::new();
        inner.process().on_timer(id, &mut acts);
        self.rewrite(acts, out);
    }

    fn on_oracle(&mut self, bytes: &[u8], out: &mut Vec<Action>) {
        let Some(inner) = self.inner.as_mut() else {
            return;
        };
        let mut acts = Vec::new();
        inner.process().on_oracle(bytes, &mut acts);
        self.rewrite(acts, out);
    }

    fn fingerprint(&self) -> u64 {
        self.inner.as_ref().map_or(0, |i| i.process_ref().fingerprint())
    }

    fn dropped(&self) -> u64 {
        self.inner.as_ref().map_or(0, |i| i.process_ref().dropped())
    }
}

/// Signers that appear in a CAC message, for tests and diagnostics.
pub fn signers(bytes: &[u8]) -> BTreeSet<ProcessId> {
    CacMessage::decode(bytes)
        .map(|m| m.statements.iter().map(|s| s.signer).collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use cac_core::{CacConfig, OptimalCac, Provider, Roster, SimpleCac};
    use std::sync::Arc;

    fn setup(n: usize) -> (Arc<Roster>, Vec<KeyPair>) {
        let kps: Vec<KeyPair> = (1..=n as u64).map(|i| Provider::Digest.keygen(i)).collect();
        let roster = Roster::new(Provider::Digest, kps.iter().map(KeyPair::public_key).collect());
        (Arc::new(roster), kps)
    }

    fn optimal(n: usize, me: u32, roster: &Arc<Roster>, kp: &KeyPair, v: Option<&str>) -> CacProcess {
        let cfg = CacConfig::new(n, 1, 1, ProcessId(me), roster.clone(), "cac");
        let e = AnyCac::Optimal(OptimalCac::new(cfg, kp.clone()).unwrap());
        CacProcess::new(ProcessId(me), e, v.map(|s| s.as_bytes().to_vec()))
    }

    fn byz(n: usize, b: Behavior, v: Option<&str>) -> (Byzantine, Arc<Roster>, Vec<KeyPair>) {
        let (roster, kps) = setup(n);
        let inner = Inner::Cac(optimal(n, 2, &roster, &kps[1], v));
        let z = Byzantine::new(
            ProcessId(2),
            n,
            1,
            Algorithm::Optimal,
            b,
            kps[1].clone(),
            b"cac".to_vec(),
            inner,
        );
        (z, roster, kps)
    }

    fn sends(out: &[Action]) -> Vec<(Dest, Vec<u8>)> {
        out.iter()
            .filter_map(|a| match a {
                Action::Send { dest, bytes, .. } => Some((dest.clone(), bytes.clone())),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn silent_never_emits() {
        let (mut z, ..) = byz(4, Behavior::new(BehaviorKind::Silent), Some("v"));
        let mut out = Vec::new();
        z.start(&mut out);
        z.on_message(ProcessId(1), Layer::Cac, b"whatever", &mut out);
        z.on_timer(1, &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn equivocation_splits_the_system() {
        let (mut z, roster, _) = byz(4, Behavior::new(BehaviorKind::EquivocateWitness), None);
        let mut out = Vec::new();
        z.start(&mut out);
        let s = sends(&out);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].0, Dest::To(vec![ProcessId(1), ProcessId(2)]));
        assert_eq!(s[1].0, Dest::To(vec![ProcessId(3), ProcessId(4)]));
        let a = CacMessage::decode(&s[0].1).unwrap().statements.remove(0);
        let b = CacMessage::decode(&s[1].1).unwrap().statements.remove(0);
        assert_eq!((a.seqno, b.seqno), (0, 0));
        assert_ne!(a.pair(), b.pair());
        assert!(a.verify(&roster, b"cac") && b.verify(&roster, b"cac"));
    }

    #[test]
    fn forged_statements_never_verify_and_engines_drop_them() {
        let (mut z, roster, kps) = byz(4, Behavior::new(BehaviorKind::ForgeSignature), Some("v"));
        let mut out = Vec::new();
        z.start(&mut out);
        let s = sends(&out);
        assert_eq!(s.len(), 2, "honest copy plus forged copy");
        let forged = CacMessage::decode(&s[1].1).unwrap();
        assert!(forged
            .statements
            .iter()
            .any(|st| st.signer == ProcessId(3) && !st.verify(&roster, b"cac")));

        let mut honest = optimal(4, 1, &roster, &kps[0], None);
        let before = honest.fingerprint();
        let mut acts = Vec::new();
        honest.on_message(ProcessId(2), Layer::Cac, &s[1].1, &mut acts);
        assert!(acts.is_empty());
        assert_eq!(honest.fingerprint(), before);
        assert_eq!(honest.dropped(), 1);
        honest.on_message(ProcessId(2), Layer::Cac, &s[0].1, &mut acts);
        assert!(!acts.is_empty());
    }

    #[test]
    fn hole_injection_is_dropped() {
        let (mut z, roster, kps) = byz(4, Behavior::new(BehaviorKind::HoleInjector), None);
        let mut out = Vec::new();
        z.start(&mut out);
        let s = sends(&out);
        let mut honest = optimal(4, 1, &roster, &kps[0], None);
        let mut acts = Vec::new();
        honest.on_message(ProcessId(2), Layer::Cac, &s[0].1, &mut acts);
        assert!(acts.is_empty());
        assert_eq!(honest.dropped(), 1);
    }

    #[test]
    fn selective_send_omits_targets_on_chosen_layers() {
        let b = Behavior::new(BehaviorKind::SelectiveSend)
            .omit(&[3])
            .layers(&[Layer::Cac]);
        let (mut z, ..) = byz(4, b, Some("v"));
        let mut out = Vec::new();
        z.start(&mut out);
        assert_eq!(
            sends(&out)[0].0,
            Dest::To(vec![ProcessId(1), ProcessId(2), ProcessId(4)])
        );

        let b = Behavior::new(BehaviorKind::SelectiveSend).layers(&[Layer::Rc]);
        let (mut z, ..) = byz(4, b, Some("v"));
        let mut out = Vec::new();
        z.start(&mut out);
        assert_eq!(sends(&out)[0].0, Dest::All, "other layers untouched");
    }

    #[test]
    fn replay_resends_received_traffic() {
        let (mut z, roster, kps) = byz(4, Behavior::new(BehaviorKind::Replay), None);
        let mut p1 = optimal(4, 1, &roster, &kps[0], Some("a"));
        let mut first = Vec::new();
        p1.start(&mut first);
        let (_, bytes) = sends(&first).remove(0);
        let mut out = Vec::new();
        z.on_message(ProcessId(1), Layer::Cac, &bytes, &mut out);
        let s = sends(&out);
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].1, bytes);
        assert_eq!(signers(&s[1].1), BTreeSet::from([ProcessId(1)]));
    }

    #[test]
    fn simple_double_ready_signs_a_second_witness_set() {
        let n = 6;
        let (roster, kps) = setup(n);
        let mk = |me: u32, v: Option<&str>| {
            let cfg = CacConfig::new(n, 1, 1, ProcessId(me), roster.clone(), "cac");
            let e = AnyCac::Simple(SimpleCac::new(cfg, kps[me as usize - 1].clone()).unwrap());
            CacProcess::new(ProcessId(me), e, v.map(|s| s.as_bytes().to_vec()))
        };
        let mut z = Byzantine::new(
            ProcessId(2),
            n,
            1,
            Algorithm::Simple,
            Behavior::new(BehaviorKind::DoubleReady),
            kps[1].clone(),
            b"cac".to_vec(),
            Inner::Cac(mk(2, None)),
        );
        // Feed WITs from everyone else so the inner process freezes M.
        let mut out = Vec::new();
        for j in [1u32, 3, 4, 5, 6] {
            let mut p = mk(j, Some("v"));
            let mut o = Vec::new();
            p.start(&mut o);
            let (_, b) = sends(&o).remove(0);
            z.on_message(ProcessId(j), Layer::Cac, &b, &mut out);
        }
        let readies: usize = sends(&out)
            .iter()
            .map(|(_, b)| {
                CacMessage::decode(b)
                    .unwrap()
                    .statements
                    .iter()
                    .filter(|s| s.kind == StatementKind::Ready && s.signer == ProcessId(2))
                    .count()
            })
            .max()
            .unwrap();
        assert_eq!(readies, 2);
    }
}

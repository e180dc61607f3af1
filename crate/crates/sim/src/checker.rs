//! Trace-level property verdicts.
//!
//! Safety properties are checked over every record. Liveness ("eventually")
//! is checked at the end of a run, and only when the run was fair: it reached
//! quiescence without hitting the step budget. Otherwise the verdict is
//! reported as skipped.

use std::collections::{BTreeMap, BTreeSet};

use cac_core::naming::max_common_prefix;
use cac_core::{verify_acceptance, AcceptanceProof, Layer, Pair, ProcessId, Signature, VerifyContext};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::{Scenario, Stack};
use crate::sim::verify_context;
use crate::trace::{NoteRec, PairRec, Record, Trace, TraceError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub property: String,
    pub holds: bool,
    /// Liveness not evaluated because the run was not fair.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
    /// Record indices demonstrating a violation. Replaying the trace up to
    /// the largest index reproduces it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witness: Vec<usize>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Verdict {
    fn pass(property: impl Into<String>) -> Self {
        Verdict {
            property: property.into(),
            holds: true,
            skipped: false,
            witness: Vec::new(),
            detail: String::new(),
        }
    }

    fn skip(property: impl Into<String>) -> Self {
        Verdict {
            skipped: true,
            ..Verdict::pass(property)
        }
    }

    fn fail(property: impl Into<String>, mut witness: Vec<usize>, detail: impl Into<String>) -> Self {
        witness.sort_unstable();
        witness.dedup();
        Verdict {
            property: property.into(),
            holds: false,
            skipped: false,
            witness,
            detail: detail.into(),
        }
    }

    /// First violation wins; later ones add nothing to the witness.
    fn first(property: &str, violation: Option<(Vec<usize>, String)>) -> Self {
        match violation {
            None => Verdict::pass(property),
            Some((w, d)) => Verdict::fail(property, w, d),
        }
    }
}

pub fn all_hold(verdicts: &[Verdict]) -> bool {
    verdicts.iter().all(|v| v.holds)
}

/// True when liveness may be judged on this trace.
pub fn fair(trace: &Trace) -> bool {
    matches!(trace.end(), Some((_, true, false)))
}

fn end_index(trace: &Trace) -> usize {
    trace.records.len() - 1
}

fn correct_set(trace: &Trace) -> BTreeSet<ProcessId> {
    trace.correct().into_iter().collect()
}

#[derive(Default)]
struct CacView {
    proposed: Option<(usize, PairRec)>,
    /// Finite candidate snapshots.
    snapshots: Vec<(usize, BTreeSet<PairRec>)>,
    /// `(index, top)` of the most recent snapshot, updated as we scan.
    accepted: Vec<(usize, PairRec, String)>,
    /// Accepts made while candidates was still top (or never reported).
    accepted_at_top: Vec<usize>,
}

fn cac_views(trace: &Trace, layer: &str) -> BTreeMap<ProcessId, CacView> {
    let correct = correct_set(trace);
    let mut views: BTreeMap<ProcessId, CacView> = correct.iter().map(|&p| (p, CacView::default())).collect();
    let mut top: BTreeMap<ProcessId, bool> = BTreeMap::new();
    for (i, p, note) in trace.notes() {
        if note.layer() != Some(layer) {
            continue;
        }
        let Some(v) = views.get_mut(&p) else { continue };
        match note {
            NoteRec::Proposed { pair, .. } => {
                v.proposed.get_or_insert((i, pair.clone()));
            }
            NoteRec::Candidates { top: t, pairs, .. } => {
                top.insert(p, *t);
                if !t {
                    v.snapshots.push((i, pairs.iter().cloned().collect()));
                }
            }
            NoteRec::Accepted { pair, path, .. } => {
                if top.get(&p).copied().unwrap_or(true) {
                    v.accepted_at_top.push(i);
                }
                v.accepted.push((i, pair.clone(), path.clone()));
            }
            _ => {}
        }
    }
    views
}

/// The five CAC properties for one CAC layer of the trace.
pub fn check_cac(trace: &Trace, layer: &str) -> Vec<Verdict> {
    let views = cac_views(trace, layer);
    let name = |p: &str| format!("{p}[{layer}]");
    let proposals: BTreeMap<u32, (usize, &PairRec)> = views
        .iter()
        .filter_map(|(p, v)| v.proposed.as_ref().map(|(i, pr)| (p.0, (*i, pr))))
        .collect();
    let correct = correct_set(trace);

    // Validity: pairs attributed to a correct process are its real proposal.
    let mut validity = None;
    'outer: for (p, v) in &views {
        let finite = v.snapshots.iter().flat_map(|(i, s)| s.iter().map(move |x| (*i, x)));
        let acc = v.accepted.iter().map(|(i, x, _)| (*i, x));
        for (i, pair) in finite.chain(acc) {
            if !correct.contains(&ProcessId(pair.proposer)) {
                continue;
            }
            match proposals.get(&pair.proposer) {
                Some((_, prop)) if prop.value == pair.value => {}
                _ => {
                    validity = Some((
                        vec![i],
                        format!("p{} holds {pair}, which p{} never proposed", p.0, pair.proposer),
                    ));
                    break 'outer;
                }
            }
        }
    }

    // Prediction: an accepted pair is in every finite snapshot, before or after.
    let mut prediction = None;
    'outer: for (p, v) in &views {
        for (ai, pair, _) in &v.accepted {
            if let Some((si, _)) = v.snapshots.iter().find(|(_, s)| !s.contains(pair)) {
                prediction = Some((
                    vec![*si, *ai],
                    format!("p{} accepted {pair} missing from an earlier or later candidates", p.0),
                ));
                break 'outer;
            }
        }
    }

    let mut non_triviality = None;
    for (p, v) in &views {
        if let Some(&i) = v.accepted_at_top.first() {
            non_triviality = Some((vec![i], format!("p{} accepted while candidates was top", p.0)));
            break;
        }
    }

    let mut out = vec![
        Verdict::first(&name("CAC-Validity"), validity),
        Verdict::first(&name("CAC-Prediction"), prediction),
        Verdict::first(&name("CAC-Non-triviality"), non_triviality),
    ];

    if !fair(trace) {
        out.push(Verdict::skip(name("CAC-Local-termination")));
        out.push(Verdict::skip(name("CAC-Global-termination")));
        return out;
    }
    let end = end_index(trace);

    let mut local = None;
    for (p, v) in &views {
        if let (Some((i, _)), true) = (&v.proposed, v.accepted.is_empty()) {
            local = Some((vec![*i, end], format!("p{} proposed but accepted nothing", p.0)));
            break;
        }
    }
    out.push(Verdict::first(&name("CAC-Local-termination"), local));

    let mut global = None;
    'outer: for (p, v) in &views {
        for (i, pair, _) in &v.accepted {
            if let Some(q) = views
                .iter()
                .find(|(_, w)| !w.accepted.iter().any(|(_, x, _)| x == pair))
            {
                global = Some((
                    vec![*i, end],
                    format!("{pair} accepted by p{} never reached p{}", p.0, q.0 .0),
                ));
                break 'outer;
            }
        }
    }
    out.push(Verdict::first(&name("CAC-Global-termination"), global));
    out
}

/// If any correct process took the fast path for a pair, no correct process
/// accepts another pair on that layer.
pub fn check_fast_path_exclusivity(trace: &Trace, layer: &str) -> Verdict {
    let views = cac_views(trace, layer);
    let property = format!("Fast-path-exclusivity[{layer}]");
    let fast = views
        .values()
        .flat_map(|v| v.accepted.iter())
        .find(|(_, _, path)| path == "fast");
    let Some((fi, fpair, _)) = fast else {
        return Verdict::pass(property);
    };
    for (p, v) in &views {
        if let Some((i, pair, _)) = v.accepted.iter().find(|(_, x, _)| x != fpair) {
            return Verdict::fail(
                property,
                vec![*fi, *i],
                format!("p{} accepted {pair} after a fast path on {fpair}", p.0),
            );
        }
    }
    Verdict::pass(property)
}

/// No fast-path acceptance anywhere when n <= 5t.
pub fn check_fast_path_floor(trace: &Trace, s: &Scenario) -> Verdict {
    let property = "Fast-path-floor";
    if s.n > 5 * s.t {
        return Verdict::pass(property);
    }
    for (i, p, note) in trace.notes() {
        if let NoteRec::Accepted { path, .. } = note {
            if path == "fast" {
                return Verdict::fail(
                    property,
                    vec![i],
                    format!("p{} took the fast path with n={} t={}", p.0, s.n, s.t),
                );
            }
        }
    }
    Verdict::pass(property)
}

fn decode_pair(pair: &PairRec) -> Option<Pair> {
    pair.to_pair()
}

fn decode_proof(hex_proof: &str) -> Option<AcceptanceProof> {
    hex::decode(hex_proof)
        .ok()
        .and_then(|b| AcceptanceProof::from_bytes(&b).ok())
}

/// Every proof a correct process exposed verifies, and every quorum
/// acceptance on a proof-producing layer carries one.
pub fn check_proofs(trace: &Trace, s: &Scenario) -> Verdict {
    let property = "Proof-of-acceptance";
    let correct = correct_set(trace);
    let mut ctxs: BTreeMap<String, Option<VerifyContext>> = BTreeMap::new();
    for (i, p, note) in trace.notes() {
        if !correct.contains(&p) {
            continue;
        }
        let (layer, pair, proof, path) = match note {
            NoteRec::Accepted {
                layer,
                pair,
                proof,
                path,
            } => (layer, pair, proof.as_deref(), Some(path)),
            NoteRec::ProofAttached { layer, pair, proof } => (layer, pair, Some(proof.as_str()), None),
            _ => continue,
        };
        let ctx = ctxs
            .entry(layer.clone())
            .or_insert_with(|| Layer::from_name(layer).and_then(|l| verify_context(s, l)));
        let Some(ctx) = ctx else { continue };
        let ok = match proof {
            None => path.is_some_and(|p| p == "fast"),
            Some(h) => match (decode_pair(pair), decode_proof(h)) {
                (Some(pair), Some(proof)) => verify_acceptance(&pair, &proof, ctx),
                _ => false,
            },
        };
        if !ok {
            return Verdict::fail(
                property,
                vec![i],
                format!("p{} exposed an unverifiable proof for {pair} on {layer}", p.0),
            );
        }
    }
    Verdict::pass(property)
}

/// Every `(layer, pair, proof)` a correct process exposed, for mutation tests.
pub fn exposed_proofs(trace: &Trace) -> Vec<(Layer, Pair, AcceptanceProof)> {
    let correct = correct_set(trace);
    trace
        .notes()
        .filter(|(_, p, _)| correct.contains(p))
        .filter_map(|(_, _, note)| match note {
            NoteRec::Accepted {
                layer,
                pair,
                proof: Some(h),
                ..
            }
            | NoteRec::ProofAttached { layer, pair, proof: h } => {
                Some((Layer::from_name(layer)?, decode_pair(pair)?, decode_proof(h)?))
            }
            _ => None,
        })
        .collect()
}

/// Damages enough statements of a valid proof that fewer than `n - t`
/// distinct signers remain intact. Each damaged statement gets one random
/// mutation: a flipped signature bit, a different claimed signer, a bumped
/// sequence number, a changed value or proposer, or removal.
pub fn mutate_proof(proof: &AcceptanceProof, pair: &Pair, ctx: &VerifyContext, rng: &mut impl Rng) -> AcceptanceProof {
    let quorum = ctx.n - ctx.t;
    let mut by_signer: BTreeMap<ProcessId, Vec<usize>> = BTreeMap::new();
    for (i, s) in proof.statements.iter().enumerate() {
        if s.pair() == Some(pair) {
            by_signer.entry(s.signer).or_default().push(i);
        }
    }
    let signers: Vec<ProcessId> = by_signer.keys().copied().collect();
    let excess = signers.len().saturating_sub(quorum) + 1;
    let mut victims = signers;
    for i in (1..victims.len()).rev() {
        victims.swap(i, rng.gen_range(0..=i));
    }
    victims.truncate(excess);

    let mut doomed = BTreeSet::new();
    let mut statements = proof.statements.clone();
    for v in victims {
        for &i in &by_signer[&v] {
            let st = &mut statements[i];
            match rng.gen_range(0..5) {
                0 => {
                    let mut sig = st.sig.0;
                    let bit = rng.gen_range(0..sig.len() * 8);
                    sig[bit / 8] ^= 1 << (bit % 8);
                    st.sig = Signature(sig);
                }
                1 => {
                    let shift = rng.gen_range(1..ctx.n as u32);
                    st.signer = ProcessId((st.signer.0 - 1 + shift) % ctx.n as u32 + 1);
                }
                2 => st.seqno = st.seqno.wrapping_add(rng.gen_range(1..=u64::from(u32::MAX))),
                3 => {
                    if let cac_core::statement::Payload::Pair(p) = &mut st.payload {
                        if rng.gen_bool(0.5) {
                            p.value.push(rng.gen());
                        } else {
                            p.proposer = ProcessId(p.proposer.0 % ctx.n as u32 + 1);
                        }
                    }
                }
                _ => {
                    doomed.insert(i);
                }
            }
        }
    }
    AcceptanceProof {
        statements: statements
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !doomed.contains(i))
            .map(|(_, s)| s)
            .collect(),
    }
}

/// C-Validity, C-Agreement, C-Integrity and C-Termination.
pub fn check_consensus(trace: &Trace, s: &Scenario) -> Vec<Verdict> {
    let correct = correct_set(trace);
    let mut proposed: BTreeSet<String> = s.proposers.values().map(hex::encode).collect();
    let mut decisions: BTreeMap<ProcessId, Vec<(usize, String)>> = BTreeMap::new();
    for (i, p, note) in trace.notes() {
        match note {
            NoteRec::Proposed { layer, pair } if layer == "cac1" => {
                proposed.insert(pair.value.clone());
            }
            NoteRec::Decided { value, .. } if correct.contains(&p) => {
                decisions.entry(p).or_default().push((i, value.clone()));
            }
            _ => {}
        }
    }

    let mut validity = None;
    let mut agreement = None;
    let mut integrity = None;
    let mut first: Option<(usize, ProcessId, &String)> = None;
    for (p, ds) in &decisions {
        for (i, v) in ds {
            if validity.is_none() && !proposed.contains(v) {
                validity = Some((vec![*i], format!("p{} decided {v}, which nobody proposed", p.0)));
            }
        }
        if integrity.is_none() && ds.len() > 1 {
            integrity = Some((vec![ds[0].0, ds[1].0], format!("p{} decided twice", p.0)));
        }
        let (i, v) = &ds[0];
        match first {
            None => first = Some((*i, *p, v)),
            Some((fi, fp, fv)) if fv != v && agreement.is_none() => {
                agreement = Some((vec![fi, *i], format!("p{} decided {fv} but p{} decided {v}", fp.0, p.0)));
            }
            _ => {}
        }
    }
    let mut out = vec![
        Verdict::first("C-Validity", validity),
        Verdict::first("C-Agreement", agreement),
        Verdict::first("C-Integrity", integrity),
    ];
    if !fair(trace) {
        out.push(Verdict::skip("C-Termination"));
        return out;
    }
    let any_correct_proposer = s.proposers.keys().any(|p| correct.contains(p));
    let undecided = correct.iter().find(|p| !decisions.contains_key(p));
    out.push(match (any_correct_proposer, undecided) {
        (true, Some(p)) => Verdict::fail(
            "C-Termination",
            vec![end_index(trace)],
            format!("p{} never decided", p.0),
        ),
        _ => Verdict::pass("C-Termination"),
    });
    out
}

/// Restrained-consensus participants: processes that proposed, or that
/// retracted after hearing of a proposal first, plus anyone (Byzantine
/// included) who sent restrained-consensus traffic.
pub fn rc_participants(trace: &Trace) -> BTreeSet<ProcessId> {
    let mut out = BTreeSet::new();
    for r in &trace.records {
        match r {
            Record::Note {
                proc,
                note: NoteRec::RcProposed { .. } | NoteRec::RcRetracted,
                ..
            } => {
                out.insert(ProcessId(*proc));
            }
            Record::Send { from, layer, .. } if layer == "rc" => {
                out.insert(ProcessId(*from));
            }
            _ => {}
        }
    }
    out
}

/// True when every delivered restrained-consensus message took at most
/// `delta` ticks.
pub fn rc_synchronous(trace: &Trace, delta: u64) -> bool {
    trace.records.iter().all(|r| match r {
        Record::Deliver {
            tick, sent_at, layer, ..
        } if layer == "rc" => tick - sent_at <= delta,
        _ => true,
    })
}

/// RC-Weak-validity, RC-Weak-agreement, RC-Integrity and RC-Termination.
/// The weak properties are skipped unless every participant is correct and
/// the run kept restrained-consensus delays within `delta_rc`.
pub fn check_rc(trace: &Trace, s: &Scenario) -> Vec<Verdict> {
    let correct = correct_set(trace);
    let members = rc_participants(trace);
    let mut proposed_sets: BTreeMap<ProcessId, BTreeSet<PairRec>> = BTreeMap::new();
    let mut outcomes: BTreeMap<ProcessId, Vec<usize>> = BTreeMap::new();
    let mut decided: Vec<(usize, ProcessId, BTreeSet<PairRec>, BTreeSet<u32>, String)> = Vec::new();
    let mut first_proposal = None;
    for (i, p, note) in trace.notes() {
        if !correct.contains(&p) {
            continue;
        }
        match note {
            NoteRec::RcProposed { set } => {
                first_proposal.get_or_insert(i);
                proposed_sets.insert(p, set.iter().cloned().collect());
            }
            NoteRec::RcDecided {
                set,
                endorsers,
                retractors,
                endorse_digest,
            } => {
                outcomes.entry(p).or_default().push(i);
                let signed = endorsers.iter().chain(retractors).copied().collect();
                decided.push((i, p, set.iter().cloned().collect(), signed, endorse_digest.clone()));
            }
            NoteRec::RcNoDecision { .. } => outcomes.entry(p).or_default().push(i),
            _ => {}
        }
    }

    let mut out = Vec::new();
    let weak_applies =
        !members.is_empty() && members.iter().all(|p| correct.contains(p)) && rc_synchronous(trace, s.timers.delta_rc);

    if !weak_applies || !fair(trace) || first_proposal.is_none() {
        out.push(Verdict::skip("RC-Weak-validity"));
    } else {
        let good = decided.iter().any(|(_, p, e, signed, _)| {
            members.iter().all(|m| signed.contains(&m.0)) && proposed_sets.get(p).is_some_and(|own| e.is_subset(own))
        });
        out.push(if good {
            Verdict::pass("RC-Weak-validity")
        } else {
            Verdict::fail(
                "RC-Weak-validity",
                vec![first_proposal.unwrap_or(0), end_index(trace)],
                "no decision covers every participant",
            )
        });
    }

    if !weak_applies {
        out.push(Verdict::skip("RC-Weak-agreement"));
    } else {
        let mut v = None;
        if let Some((i0, p0, e0, _, d0)) = decided.first() {
            if let Some((i, p, ..)) = decided.iter().find(|(_, _, e, _, d)| e != e0 || d != d0) {
                v = Some((vec![*i0, *i], format!("p{} and p{} decided differently", p0.0, p.0)));
            }
        }
        out.push(Verdict::first("RC-Weak-agreement", v));
    }

    let integrity = outcomes
        .iter()
        .find(|(_, is)| is.len() > 1)
        .map(|(p, is)| (is.clone(), format!("p{} produced {} outcomes", p.0, is.len())));
    out.push(Verdict::first("RC-Integrity", integrity));

    if !fair(trace) {
        out.push(Verdict::skip("RC-Termination"));
    } else {
        let stuck = members
            .iter()
            .find(|p| correct.contains(p) && !outcomes.contains_key(p));
        out.push(match stuck {
            Some(p) => Verdict::fail(
                "RC-Termination",
                vec![end_index(trace)],
                format!("p{} never reached an outcome", p.0),
            ),
            None => Verdict::pass("RC-Termination"),
        });
    }
    out
}

/// SN-Unicity, SN-Agreement, SN-Termination and SN-Short-names.
pub fn check_naming(trace: &Trace, s: &Scenario) -> Vec<Verdict> {
    let correct = correct_set(trace);
    // proc -> name -> (index, key, claimer)
    let mut names: BTreeMap<ProcessId, BTreeMap<String, Vec<(usize, String, u32)>>> =
        correct.iter().map(|&p| (p, BTreeMap::new())).collect();
    let mut claims: BTreeMap<ProcessId, (usize, String)> = BTreeMap::new();
    for (i, p, note) in trace.notes() {
        if !correct.contains(&p) {
            continue;
        }
        match note {
            NoteRec::ClaimProposed { key, .. } => {
                claims.entry(p).or_insert((i, key.clone()));
            }
            NoteRec::NameRegistered { name, claimer, key } => {
                names
                    .entry(p)
                    .or_default()
                    .entry(name.clone())
                    .or_default()
                    .push((i, key.clone(), *claimer));
            }
            _ => {}
        }
    }

    let mut unicity = None;
    'outer: for (p, reg) in &names {
        for (name, entries) in reg {
            if let Some((i, ..)) = entries.iter().find(|(_, k, _)| *k != entries[0].1) {
                unicity = Some((
                    vec![entries[0].0, *i],
                    format!("p{} registered {name:?} for two keys", p.0),
                ));
                break 'outer;
            }
        }
    }
    let mut out = vec![Verdict::first("SN-Unicity", unicity)];

    if !fair(trace) {
        out.extend(["SN-Agreement", "SN-Termination", "SN-Short-names"].map(Verdict::skip));
        return out;
    }
    let end = end_index(trace);

    let mut agreement = None;
    'outer: for (p, reg) in &names {
        for (name, entries) in reg {
            for (i, key, claimer) in entries {
                if !correct.contains(&ProcessId(*claimer)) {
                    continue;
                }
                let missing = names
                    .iter()
                    .find(|(_, other)| !other.get(name).is_some_and(|es| es.iter().any(|(_, k, _)| k == key)));
                if let Some((q, _)) = missing {
                    agreement = Some((
                        vec![*i, end],
                        format!("{name:?} registered at p{} is missing at p{}", p.0, q.0),
                    ));
                    break 'outer;
                }
            }
        }
    }
    out.push(Verdict::first("SN-Agreement", agreement));

    let mut termination = None;
    for (p, (i, key)) in &claims {
        let has = names[p].values().flatten().any(|(_, k, _)| k == key);
        if !has {
            termination = Some((vec![*i, end], format!("p{} never registered a name for its key", p.0)));
            break;
        }
    }
    out.push(Verdict::first("SN-Termination", termination));

    if !s.all_correct() {
        out.push(Verdict::skip("SN-Short-names"));
        return out;
    }
    let mut short = None;
    'outer: for (p, reg) in &names {
        let entries: Vec<(&String, &String, usize)> = reg
            .iter()
            .flat_map(|(n, es)| es.iter().map(move |(i, k, _)| (n, k, *i)))
            .collect();
        for (n, k, i) in &entries {
            let nearest = entries
                .iter()
                .filter(|(_, k2, _)| k2 != k)
                .map(|(_, k2, _)| max_common_prefix(k, k2).len())
                .max();
            if let Some(m) = nearest {
                if m + 1 < n.len() {
                    short = Some((
                        vec![*i],
                        format!("p{} registered {n:?} but {} characters would do", p.0, m + 1),
                    ));
                    break 'outer;
                }
            }
        }
    }
    out.push(Verdict::first("SN-Short-names", short));
    out
}

/// Every verdict that applies to the trace's stack.
pub fn check_trace(trace: &Trace) -> Result<Vec<Verdict>, TraceError> {
    trace.validate()?;
    let s = trace.scenario()?;
    let mut out = Vec::new();
    match s.stack {
        Stack::Cac => {
            out.extend(check_cac(trace, "cac"));
            out.push(check_fast_path_exclusivity(trace, "cac"));
            out.push(check_fast_path_floor(trace, &s));
            out.push(check_proofs(trace, &s));
        }
        Stack::Cc => {
            for layer in ["cac1", "cac2"] {
                out.extend(check_cac(trace, layer));
                out.push(check_fast_path_exclusivity(trace, layer));
            }
            out.push(check_fast_path_floor(trace, &s));
            out.push(check_proofs(trace, &s));
            out.extend(check_consensus(trace, &s));
            out.extend(check_rc(trace, &s));
        }
        Stack::Naming => out.extend(check_naming(trace, &s)),
    }
    Ok(out)
}

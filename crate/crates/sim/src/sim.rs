//! The discrete-event simulator.
//!
//! Events are ordered by `(tick, class, sender, target, enqueue order)` where
//! deliveries come before timer fires, which come before oracle decisions.
//! Every message carries its lineage: the wave it belongs to, how many
//! system-wide hops and how many restrained-consensus hops led to it.

use std::collections::BTreeMap;
use std::sync::Arc;

use cac_core::cascade::{encode_gc, gc_admissible, Admission, CascadeProcess, CcConfig};
use cac_core::naming::{NameValue, NamingProcess};
use cac_core::process::CacProcess;
use cac_core::{
    choice, AcceptanceProof, Action, AnyCac, CacConfig, Dest, KeyPair, Layer, OptimalCac, Pair, Process, ProcessId,
    Roster, SimpleCac, VerifyContext,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::byzantine::{Byzantine, Inner};
use crate::scenario::{Algorithm, Scenario, ScenarioError, ScheduleKind, Stack};
use crate::stats::RunStats;
use crate::trace::{digest, NoteRec, PairRec, Record, Trace};

/// Signature domain of the bare CAC stack.
pub const CAC_DOMAIN: &str = "cac";
/// Instance prefix of the cascading stack.
pub const CC_INSTANCE: &str = "cc";

pub fn keypair(s: &Scenario, p: ProcessId) -> KeyPair {
    s.provider.keygen(p.0 as u64)
}

pub fn roster(s: &Scenario) -> Arc<Roster> {
    let keys = ProcessId::all(s.n).map(|p| keypair(s, p).public_key()).collect();
    Arc::new(Roster::new(s.provider, keys))
}

pub fn cac_config(s: &Scenario, me: ProcessId, roster: &Arc<Roster>) -> CacConfig {
    let mut cfg = CacConfig::new(s.n, s.t, s.k, me, roster.clone(), CAC_DOMAIN);
    cfg.fault = s.fault;
    cfg
}

pub fn cc_config(s: &Scenario, me: ProcessId, roster: &Arc<Roster>) -> CcConfig {
    CcConfig {
        n: s.n,
        t: s.t,
        k: s.k,
        me,
        roster: roster.clone(),
        instance: CC_INSTANCE.into(),
        delta_rc: s.timers.delta_rc,
        delta_cc: s.timers.delta_cc,
    }
}

/// What a proof accepted on `layer` must verify against, if that layer
/// produces proofs at all.
pub fn verify_context(s: &Scenario, layer: Layer) -> Option<VerifyContext> {
    let r = roster(s);
    match (s.stack, layer) {
        (Stack::Cac, Layer::Cac) if s.algorithm == Algorithm::Optimal => {
            Some(cac_config(s, ProcessId(1), &r).verify_context())
        }
        (Stack::Cc, Layer::Cac1) => Some(cc_config(s, ProcessId(1), &r).admission().cac1),
        (Stack::Cc, Layer::Cac2) => Some(cc_config(s, ProcessId(1), &r).cac2_context()),
        _ => None,
    }
}

pub fn claim_value(s: &Scenario, key_seed: u64) -> NameValue {
    let kp = s.provider.keygen(key_seed);
    NameValue {
        pk: kp.public_key(),
        proof: kp.prove_knowledge(),
    }
}

fn honest(s: &Scenario, me: ProcessId, roster: &Arc<Roster>, proposal: Option<Vec<u8>>) -> Inner {
    let kp = keypair(s, me);
    match s.stack {
        Stack::Cac => {
            let cfg = cac_config(s, me, roster);
            let engine = match s.algorithm {
                Algorithm::Simple => AnyCac::Simple(SimpleCac::new(cfg, kp).expect("validated scenario")),
                Algorithm::Optimal => AnyCac::Optimal(OptimalCac::new(cfg, kp).expect("validated scenario")),
            };
            Inner::Cac(CacProcess::new(me, engine, proposal))
        }
        Stack::Cc => Inner::Other(Box::new(
            CascadeProcess::new(cc_config(s, me, roster), kp, proposal).expect("validated scenario"),
        )),
        Stack::Naming => {
            let claim = s.claims.get(&me).map(|seed| claim_value(s, *seed));
            Inner::Other(Box::new(
                NamingProcess::new(s.n, s.t, me, roster.clone(), kp, claim).expect("validated scenario"),
            ))
        }
    }
}

/// One process per id, Byzantine ones wrapped in their behavior.
pub fn build_processes(s: &Scenario) -> Vec<Box<dyn Process>> {
    let r = roster(s);
    ProcessId::all(s.n)
        .map(|p| {
            let proposal = s.proposers.get(&p).cloned();
            match s.byzantine.get(&p) {
                None => match honest(s, p, &r, proposal) {
                    Inner::Cac(c) => Box::new(c) as Box<dyn Process>,
                    Inner::Other(o) => o,
                },
                Some(b) => {
                    let proposal = match b.kind {
                        crate::scenario::BehaviorKind::EquivocateWitness => None,
                        _ => proposal,
                    };
                    let inner = honest(s, p, &r, proposal);
                    Box::new(Byzantine::new(
                        p,
                        s.n,
                        s.t,
                        s.algorithm,
                        b.clone(),
                        keypair(s, p),
                        CAC_DOMAIN.as_bytes().to_vec(),
                        inner,
                    ))
                }
            }
        })
        .collect()
}

/// Lineage of a handler invocation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Ctx {
    wave: u64,
    sys: u64,
    rc: u64,
}

#[derive(Debug)]
struct Envelope {
    id: u64,
    from: ProcessId,
    to: ProcessId,
    layer: Layer,
    bytes: Arc<Vec<u8>>,
    sent_at: u64,
    wave: u64,
    sys: u64,
    rc: u64,
    origin: bool,
}

#[derive(Debug)]
enum Event {
    Deliver(Envelope),
    Timer { proc: ProcessId, id: u64, ctx: Ctx },
    Oracle { ctx: Ctx },
}

type Key = (u64, u8, u32, u32, u64);

/// Stand-in for global consensus: decides the least admissible proposal a
/// fixed delay after the first one arrives.
struct GcOracle {
    cac2: VerifyContext,
    admission: Admission,
    proposals: BTreeMap<Pair, AcceptanceProof>,
    scheduled: bool,
}

struct Sim<'a> {
    s: &'a Scenario,
    procs: Vec<Box<dyn Process>>,
    queue: BTreeMap<Key, Event>,
    seq: u64,
    now: u64,
    rng: ChaCha8Rng,
    records: Vec<Record>,
    next_msg: u64,
    gc: Option<GcOracle>,
}

impl<'a> Sim<'a> {
    fn new(s: &'a Scenario) -> Self {
        let gc = (s.stack == Stack::Cc).then(|| {
            let cfg = cc_config(s, ProcessId(1), &roster(s));
            GcOracle {
                cac2: cfg.cac2_context(),
                admission: cfg.admission(),
                proposals: BTreeMap::new(),
                scheduled: false,
            }
        });
        Sim {
            s,
            procs: build_processes(s),
            queue: BTreeMap::new(),
            seq: 0,
            now: 0,
            rng: ChaCha8Rng::seed_from_u64(s.schedule.seed),
            records: vec![Record::Header {
                scenario: s.to_file(),
                correct: s.correct().iter().map(|p| p.0).collect(),
            }],
            next_msg: 0,
            gc,
        }
    }

    fn push(&mut self, tick: u64, class: u8, a: u32, b: u32, ev: Event) {
        self.queue.insert((tick, class, a, b, self.seq), ev);
        self.seq += 1;
    }

    fn delay(&mut self, from: ProcessId, to: ProcessId, layer: Layer) -> u64 {
        let sched = &self.s.schedule;
        if let Some(r) = sched.rules.iter().find(|r| r.matches(from, to, layer)) {
            return r.delay;
        }
        match sched.kind {
            ScheduleKind::Lockstep | ScheduleKind::Script => 1,
            ScheduleKind::Random => self.rng.gen_range(sched.min_delay..=sched.max_delay),
        }
    }

    fn apply(&mut self, me: ProcessId, ctx: Ctx, actions: Vec<Action>) {
        for a in actions {
            match a {
                Action::Send {
                    layer,
                    dest,
                    bytes,
                    origin,
                } => {
                    let targets: Vec<ProcessId> = match dest {
                        Dest::All => ProcessId::all(self.s.n).collect(),
                        Dest::To(v) => v.into_iter().filter(|p| p.0 >= 1 && p.0 as usize <= self.s.n).collect(),
                    };
                    let dg = digest(&bytes);
                    let bytes = Arc::new(bytes);
                    for to in targets {
                        let d = self.delay(me, to, layer);
                        let id = self.next_msg;
                        self.next_msg += 1;
                        self.records.push(Record::Send {
                            tick: self.now,
                            id,
                            from: me.0,
                            to: to.0,
                            layer: layer.name().into(),
                            wave: ctx.wave + 1,
                            len: bytes.len(),
                            digest: dg.clone(),
                        });
                        let env = Envelope {
                            id,
                            from: me,
                            to,
                            layer,
                            bytes: bytes.clone(),
                            sent_at: self.now,
                            wave: ctx.wave + 1,
                            sys: ctx.sys,
                            rc: ctx.rc,
                            origin,
                        };
                        self.push(self.now + d, 0, me.0, to.0, Event::Deliver(env));
                    }
                }
                Action::SetTimer { id, after } => {
                    let fire_at = self.now + after.max(1);
                    self.records.push(Record::TimerSet {
                        tick: self.now,
                        proc: me.0,
                        timer: id,
                        fire_at,
                    });
                    self.push(fire_at, 1, me.0, me.0, Event::Timer { proc: me, id, ctx });
                }
                Action::Oracle(bytes) => {
                    let Some(gc) = self.gc.as_mut() else {
                        continue;
                    };
                    let ok = gc_admissible(&bytes, &gc.cac2, &gc.admission);
                    self.records.push(Record::OracleIn {
                        tick: self.now,
                        proc: me.0,
                        admissible: ok.is_some(),
                    });
                    if let Some((pair, proof)) = ok {
                        gc.proposals.entry(pair).or_insert(proof);
                        if !gc.scheduled {
                            gc.scheduled = true;
                            let at = self.now + self.s.timers.gc_delay;
                            let ctx = Ctx {
                                sys: ctx.sys + 1,
                                ..ctx
                            };
                            self.push(at, 2, 0, 0, Event::Oracle { ctx });
                        }
                    }
                }
                Action::Note(n) => self.records.push(Record::Note {
                    tick: self.now,
                    proc: me.0,
                    wave: ctx.wave,
                    sys: ctx.sys,
                    rc: ctx.rc,
                    note: NoteRec::from_note(&n),
                }),
            }
        }
    }

    fn proc(&mut self, p: ProcessId) -> &mut dyn Process {
        self.procs[p.index()].as_mut()
    }

    fn run(mut self) -> Trace {
        for p in ProcessId::all(self.s.n) {
            let mut out = Vec::new();
            self.proc(p).start(&mut out);
            self.apply(p, Ctx::default(), out);
        }
        let mut steps = 0;
        let mut budget_exhausted = false;
        while let Some(entry) = self.queue.first_entry() {
            if steps >= self.s.max_steps {
                budget_exhausted = true;
                break;
            }
            let (key, ev) = entry.remove_entry();
            steps += 1;
            self.now = key.0;
            match ev {
                Event::Deliver(env) => {
                    self.records.push(Record::Deliver {
                        tick: self.now,
                        id: env.id,
                        from: env.from.0,
                        to: env.to.0,
                        layer: env.layer.name().into(),
                        sent_at: env.sent_at,
                        wave: env.wave,
                    });
                    let ctx = Ctx {
                        wave: env.wave,
                        sys: env.sys + u64::from(env.layer.system_wide() && !env.origin),
                        rc: env.rc + u64::from(env.layer == Layer::Rc),
                    };
                    let mut out = Vec::new();
                    self.proc(env.to).on_message(env.from, env.layer, &env.bytes, &mut out);
                    self.apply(env.to, ctx, out);
                }
                Event::Timer { proc, id, ctx } => {
                    self.records.push(Record::TimerFire {
                        tick: self.now,
                        proc: proc.0,
                        timer: id,
                    });
                    let mut out = Vec::new();
                    self.proc(proc).on_timer(id, &mut out);
                    self.apply(proc, ctx, out);
                }
                Event::Oracle { ctx } => {
                    let gc = self.gc.as_ref().expect("oracle events need an oracle");
                    let pair = choice(gc.proposals.keys())
                        .expect("scheduled on an admissible proposal")
                        .clone();
                    let bytes = encode_gc(&pair, &gc.proposals[&pair]);
                    self.records.push(Record::OracleOut {
                        tick: self.now,
                        pair: PairRec::of(&pair),
                    });
                    for p in ProcessId::all(self.s.n) {
                        let mut out = Vec::new();
                        self.proc(p).on_oracle(&bytes, &mut out);
                        self.apply(p, ctx, out);
                    }
                }
            }
        }
        let dropped = self.s.correct().iter().map(|p| self.procs[p.index()].dropped()).sum();
        self.records.push(Record::End {
            tick: self.now,
            steps,
            quiescent: self.queue.is_empty(),
            budget_exhausted,
            dropped,
        });
        Trace { records: self.records }
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: Trace,
    pub stats: RunStats,
}

/// Runs a scenario to quiescence or until its step budget runs out.
pub fn run(s: &Scenario) -> Result<RunResult, ScenarioError> {
    s.validate()?;
    let trace = Sim::new(s).run();
    let stats = RunStats::of(&trace, s);
    Ok(RunResult { trace, stats })
}

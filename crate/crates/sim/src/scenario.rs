//! Scenario files: a TOML document describing one simulated run.
//!
//! ```toml
//! n = 6
//! t = 1
//! k = 1
//! algorithm = "optimal"   # or "simple"
//! stack = "cac"           # "cac", "cc" or "naming"
//! provider = "digest"     # or "ed25519"
//! max_steps = 200000
//!
//! [proposers]
//! 1 = "a"
//!
//! [byzantine.3]
//! kind = "selective-send"
//! omit = [4]
//! layers = ["rc"]
//!
//! [schedule]
//! kind = "random"         # "lockstep", "random" or "script"
//! seed = 7
//! min_delay = 1
//! max_delay = 4
//!
//! [[schedule.rules]]
//! from = [1]
//! to = [5, 6]
//! layer = "cac1"
//! delay = 3
//!
//! [timers]
//! delta_rc = 4
//! delta_cc = 2
//! gc_delay = 1
//!
//! [naming.claims]
//! 1 = 11                  # key seed of the claimed name
//! ```

use std::collections::BTreeMap;
use std::fmt;

use cac_core::engine::Fault;
use cac_core::{Layer, ProcessId, Provider};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Simple,
    Optimal,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Simple => "simple",
            Algorithm::Optimal => "optimal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stack {
    Cac,
    Cc,
    Naming,
}

impl Stack {
    pub fn name(self) -> &'static str {
        match self {
            Stack::Cac => "cac",
            Stack::Cc => "cc",
            Stack::Naming => "naming",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BehaviorKind {
    Silent,
    EquivocateWitness,
    DoubleReady,
    Replay,
    ForgeSignature,
    HoleInjector,
    SelectiveSend,
}

impl BehaviorKind {
    pub const ALL: [BehaviorKind; 7] = [
        BehaviorKind::Silent,
        BehaviorKind::EquivocateWitness,
        BehaviorKind::DoubleReady,
        BehaviorKind::Replay,
        BehaviorKind::ForgeSignature,
        BehaviorKind::HoleInjector,
        BehaviorKind::SelectiveSend,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BehaviorKind::Silent => "silent",
            BehaviorKind::EquivocateWitness => "equivocate-witness",
            BehaviorKind::DoubleReady => "double-ready",
            BehaviorKind::Replay => "replay",
            BehaviorKind::ForgeSignature => "forge-signature",
            BehaviorKind::HoleInjector => "hole-injector",
            BehaviorKind::SelectiveSend => "selective-send",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Behaviors that forge CAC statements directly and so only make sense
    /// on the bare CAC stack.
    fn cac_only(self) -> bool {
        matches!(
            self,
            BehaviorKind::EquivocateWitness | BehaviorKind::DoubleReady | BehaviorKind::HoleInjector
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Behavior {
    pub kind: BehaviorKind,
    /// selective-send: targets never sent to. Empty means everyone.
    pub omit: Vec<ProcessId>,
    /// selective-send: layers the omission applies to. Empty means all.
    pub layers: Vec<Layer>,
    /// forge-signature: the identity to impersonate.
    pub victim: Option<ProcessId>,
    /// equivocate-witness: the two conflicting values.
    pub values: Vec<Vec<u8>>,
}

impl Behavior {
    pub fn new(kind: BehaviorKind) -> Self {
        Behavior {
            kind,
            omit: Vec::new(),
            layers: Vec::new(),
            victim: None,
            values: Vec::new(),
        }
    }

    pub fn omit(mut self, targets: &[u32]) -> Self {
        self.omit = targets.iter().map(|&i| ProcessId(i)).collect();
        self
    }

    pub fn layers(mut self, layers: &[Layer]) -> Self {
        self.layers = layers.to_vec();
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    /// Every message takes exactly one tick.
    Lockstep,
    /// Seeded uniform delays in `[min_delay, max_delay]`.
    Random,
    /// Lockstep unless a rule says otherwise.
    Script,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Lockstep => "lockstep",
            ScheduleKind::Random => "random",
            ScheduleKind::Script => "script",
        }
    }
}

/// Fixed delay for matching messages. Empty selectors match anything; the
/// first matching rule wins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub from: Vec<ProcessId>,
    pub to: Vec<ProcessId>,
    pub layer: Option<Layer>,
    pub delay: u64,
}

impl Rule {
    pub fn matches(&self, from: ProcessId, to: ProcessId, layer: Layer) -> bool {
        (self.from.is_empty() || self.from.contains(&from))
            && (self.to.is_empty() || self.to.contains(&to))
            && self.layer.map_or(true, |l| l == layer)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub seed: u64,
    pub min_delay: u64,
    pub max_delay: u64,
    pub rules: Vec<Rule>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Timers {
    pub delta_rc: u64,
    pub delta_cc: u64,
    /// Ticks between the first admissible global-consensus proposal and the
    /// oracle's decision.
    pub gc_delay: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub algorithm: Algorithm,
    pub stack: Stack,
    pub provider: Provider,
    pub proposers: BTreeMap<ProcessId, Vec<u8>>,
    pub byzantine: BTreeMap<ProcessId, Behavior>,
    pub schedule: Schedule,
    pub timers: Timers,
    pub max_steps: u64,
    /// Naming stack: process → key seed of the name it claims.
    pub claims: BTreeMap<ProcessId, u64>,
    /// Deliberately broken engines, for checker self-tests.
    pub fault: Option<Fault>,
}

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

impl Scenario {
    /// All-correct lockstep scenario with no proposers.
    pub fn new(n: usize, t: usize, k: usize, algorithm: Algorithm) -> Self {
        Scenario {
            n,
            t,
            k,
            algorithm,
            stack: Stack::Cac,
            provider: Provider::Digest,
            proposers: BTreeMap::new(),
            byzantine: BTreeMap::new(),
            schedule: Schedule {
                kind: ScheduleKind::Lockstep,
                seed: 0,
                min_delay: 1,
                max_delay: 1,
                rules: Vec::new(),
            },
            timers: Timers {
                delta_rc: 4,
                delta_cc: 4,
                gc_delay: 1,
            },
            max_steps: DEFAULT_MAX_STEPS,
            claims: BTreeMap::new(),
            fault: None,
        }
    }

    pub fn stack(mut self, stack: Stack) -> Self {
        self.stack = stack;
        self
    }

    pub fn propose(mut self, id: u32, value: &str) -> Self {
        self.proposers.insert(ProcessId(id), value.as_bytes().to_vec());
        self
    }

    pub fn byzantine(mut self, id: u32, b: Behavior) -> Self {
        self.byzantine.insert(ProcessId(id), b);
        self
    }

    pub fn claim(mut self, id: u32, key_seed: u64) -> Self {
        self.claims.insert(ProcessId(id), key_seed);
        self
    }

    pub fn random(mut self, seed: u64, min_delay: u64, max_delay: u64) -> Self {
        self.schedule.kind = ScheduleKind::Random;
        self.schedule.seed = seed;
        self.schedule.min_delay = min_delay;
        self.schedule.max_delay = max_delay;
        self
    }

    pub fn rule(mut self, rule: Rule) -> Self {
        if self.schedule.kind == ScheduleKind::Lockstep {
            self.schedule.kind = ScheduleKind::Script;
        }
        self.schedule.rules.push(rule);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.schedule.seed = seed;
        self
    }

    pub fn is_correct(&self, p: ProcessId) -> bool {
        !self.byzantine.contains_key(&p)
    }

    pub fn correct(&self) -> Vec<ProcessId> {
        ProcessId::all(self.n).filter(|p| self.is_correct(*p)).collect()
    }

    pub fn all_correct(&self) -> bool {
        self.byzantine.is_empty()
    }

    /// Checks the invariants of a runnable scenario.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |key: &str, msg: String| Err(ScenarioError::semantic(key, msg));
        if self.n == 0 {
            return err("n", "must be at least 1".into());
        }
        match self.algorithm {
            Algorithm::Simple if self.n <= 4 * self.t => {
                return err("n", format!("simple needs n > 4t (n={}, t={})", self.n, self.t));
            }
            Algorithm::Optimal if self.k == 0 => return err("k", "must be at least 1".into()),
            Algorithm::Optimal if self.n < 3 * self.t + self.k => {
                return err(
                    "n",
                    format!("optimal needs n >= 3t + k (n={}, t={}, k={})", self.n, self.t, self.k),
                );
            }
            _ => {}
        }
        if self.stack != Stack::Cac && self.algorithm != Algorithm::Optimal {
            return err("algorithm", format!("stack {} runs on optimal only", self.stack.name()));
        }
        if self.byzantine.len() > self.t {
            return err(
                "byzantine",
                format!("{} Byzantine processes exceed t={}", self.byzantine.len(), self.t),
            );
        }
        let in_range = |p: &ProcessId| p.0 >= 1 && p.0 as usize <= self.n;
        if let Some(p) = self.proposers.keys().find(|p| !in_range(p)) {
            return err("proposers", format!("process {} outside 1..={}", p.0, self.n));
        }
        for (p, b) in &self.byzantine {
            let key = format!("byzantine.{}", p.0);
            if !in_range(p) {
                return err(&key, format!("process {} outside 1..={}", p.0, self.n));
            }
            if b.kind.cac_only() && self.stack != Stack::Cac {
                return err(&key, format!("{} needs stack = \"cac\"", b.kind.name()));
            }
            if let Some(q) = b.omit.iter().chain(b.victim.iter()).find(|q| !in_range(q)) {
                return err(&key, format!("process {} outside 1..={}", q.0, self.n));
            }
            if b.kind == BehaviorKind::EquivocateWitness && b.values.len() == 1 {
                return err(&key, "values needs two entries".into());
            }
        }
        if !self.claims.is_empty() && self.stack != Stack::Naming {
            return err("naming", "claims need stack = \"naming\"".into());
        }
        if let Some(p) = self.claims.keys().find(|p| !in_range(p)) {
            return err("naming", format!("process {} outside 1..={}", p.0, self.n));
        }
        let s = &self.schedule;
        if s.min_delay == 0 || s.min_delay > s.max_delay {
            return err("schedule", "need 1 <= min_delay <= max_delay".into());
        }
        if s.rules.iter().any(|r| r.delay == 0) {
            return err("schedule.rules", "delay must be at least 1".into());
        }
        if self.timers.delta_rc == 0 || self.timers.gc_delay == 0 {
            return err("timers", "delta_rc and gc_delay must be at least 1".into());
        }
        if self.max_steps == 0 {
            return err("max_steps", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn from_toml(src: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(src).map_err(|e| ScenarioError {
            line: e.span().map(|s| line_at(src, s.start)),
            key: String::new(),
            msg: e.message().trim().to_string(),
        })?;
        file.into_scenario().map_err(|e| e.locate(src))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("scenario files always serialize")
    }

    pub fn to_file(&self) -> ScenarioFile {
        let pid_map = |m: &BTreeMap<ProcessId, Vec<u8>>| {
            m.iter()
                .map(|(p, v)| (p.0.to_string(), String::from_utf8_lossy(v).into_owned()))
                .collect()
        };
        ScenarioFile {
            n: self.n,
            t: self.t,
            k: self.k,
            algorithm: self.algorithm.name().into(),
            stack: self.stack.name().into(),
            provider: self.provider.name().into(),
            max_steps: self.max_steps,
            fault: self.fault.map(|_| "weak-acceptance".into()),
            proposers: pid_map(&self.proposers),
            byzantine: self
                .byzantine
                .iter()
                .map(|(p, b)| {
                    let f = BehaviorFile {
                        kind: b.kind.name().into(),
                        omit: b.omit.iter().map(|q| q.0).collect(),
                        layers: b.layers.iter().map(|l| l.name().into()).collect(),
                        victim: b.victim.map(|q| q.0),
                        values: b
                            .values
                            .iter()
                            .map(|v| String::from_utf8_lossy(v).into_owned())
                            .collect(),
                    };
                    (p.0.to_string(), f)
                })
                .collect(),
            schedule: ScheduleFile {
                kind: self.schedule.kind.name().into(),
                seed: self.schedule.seed,
                min_delay: self.schedule.min_delay,
                max_delay: self.schedule.max_delay,
                rules: self
                    .schedule
                    .rules
                    .iter()
                    .map(|r| RuleFile {
                        from: r.from.iter().map(|q| q.0).collect(),
                        to: r.to.iter().map(|q| q.0).collect(),
                        layer: r.layer.map(|l| l.name().into()),
                        delay: r.delay,
                    })
                    .collect(),
            },
            timers: TimersFile {
                delta_rc: self.timers.delta_rc,
                delta_cc: self.timers.delta_cc,
                gc_delay: self.timers.gc_delay,
            },
            naming: NamingFile {
                claims: self.claims.iter().map(|(p, s)| (p.0.to_string(), *s)).collect(),
            },
        }
    }
}

/// Parse or validation failure, anchored to a line when one is known.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ScenarioError {
    pub line: Option<usize>,
    /// Dotted path of the offending key.
    pub key: String,
    pub msg: String,
}

impl ScenarioError {
    fn semantic(key: &str, msg: String) -> Self {
        ScenarioError {
            line: None,
            key: key.into(),
            msg,
        }
    }

    fn locate(mut self, src: &str) -> Self {
        self.line = find_key_line(src, &self.key);
        self
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if !self.key.is_empty() {
            write!(f, "{}: ", self.key)?;
        }
        f.write_str(&self.msg)
    }
}

fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// 1-based line of a dotted key, falling back to its enclosing table.
fn find_key_line(src: &str, key: &str) -> Option<usize> {
    let mut parts: Vec<&str> = key.split('.').filter(|p| !p.is_empty()).collect();
    while let Some((leaf, table)) = parts.split_last() {
        let table = table.join(".");
        let full = parts.join(".");
        let mut section = String::new();
        for (i, raw) in src.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with('[') {
                section = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
                if section == full || section.starts_with(&format!("{full}.")) {
                    return Some(i + 1);
                }
            } else if section == table {
                if let Some(rest) = line.strip_prefix(leaf) {
                    if rest.trim_start().starts_with(['=', '.']) {
                        return Some(i + 1);
                    }
                }
            }
        }
        parts.pop();
    }
    None
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorFile {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub omit: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub victim: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub from: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub to: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    pub delay: u64,
}

fn default_kind() -> String {
    "lockstep".into()
}

fn one() -> u64 {
    1
}

fn four() -> u64 {
    4
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub min_delay: u64,
    #[serde(default = "one")]
    pub max_delay: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<RuleFile>,
}

impl Default for ScheduleFile {
    fn default() -> Self {
        ScheduleFile {
            kind: default_kind(),
            seed: 0,
            min_delay: 1,
            max_delay: 1,
            rules: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimersFile {
    #[serde(default = "four")]
    pub delta_rc: u64,
    #[serde(default = "four")]
    pub delta_cc: u64,
    #[serde(default = "one")]
    pub gc_delay: u64,
}

impl Default for TimersFile {
    fn default() -> Self {
        TimersFile {
            delta_rc: 4,
            delta_cc: 4,
            gc_delay: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamingFile {
    #[serde(default)]
    pub claims: BTreeMap<String, u64>,
}

fn default_algorithm() -> String {
    "optimal".into()
}

fn default_stack() -> String {
    "cac".into()
}

fn default_provider() -> String {
    "digest".into()
}

fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}

/// The on-disk form, kept close to the TOML so errors can point at keys.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n: usize,
    pub t: usize,
    #[serde(default = "one_usize")]
    pub k: usize,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default = "default_stack")]
    pub stack: String,
    #[serde(default = "default_provider")]
    pub provider: String,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
    #[serde(default)]
    pub proposers: BTreeMap<String, String>,
    #[serde(default)]
    pub byzantine: BTreeMap<String, BehaviorFile>,
    #[serde(default)]
    pub schedule: ScheduleFile,
    #[serde(default)]
    pub timers: TimersFile,
    #[serde(default)]
    pub naming: NamingFile,
}

fn one_usize() -> usize {
    1
}

fn parse_pid(key: &str, s: &str) -> Result<ProcessId, ScenarioError> {
    s.parse::<u32>()
        .map(ProcessId)
        .map_err(|_| ScenarioError::semantic(key, format!("process id {s:?} is not a positive integer")))
}

fn parse_layer(key: &str, s: &str) -> Result<Layer, ScenarioError> {
    Layer::from_name(s).ok_or_else(|| ScenarioError::semantic(key, format!("unknown layer {s:?}")))
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let bad = |key: &str, msg: String| ScenarioError::semantic(key, msg);
        let algorithm = match self.algorithm.as_str() {
            "simple" => Algorithm::Simple,
            "optimal" => Algorithm::Optimal,
            other => return Err(bad("algorithm", format!("unknown algorithm {other:?}"))),
        };
        let stack = match self.stack.as_str() {
            "cac" => Stack::Cac,
            "cc" => Stack::Cc,
            "naming" => Stack::Naming,
            other => return Err(bad("stack", format!("unknown stack {other:?}"))),
        };
        let provider = Provider::from_name(&self.provider)
            .ok_or_else(|| bad("provider", format!("unknown provider {:?}", self.provider)))?;
        let fault = match self.fault.as_deref() {
            None => None,
            Some("weak-acceptance") => Some(Fault::WeakAcceptance),
            Some(other) => return Err(bad("fault", format!("unknown fault {other:?}"))),
        };

        let mut proposers = BTreeMap::new();
        for (id, v) in self.proposers {
            let key = format!("proposers.{id}");
            proposers.insert(parse_pid(&key, &id)?, v.into_bytes());
        }

        let mut byzantine = BTreeMap::new();
        for (id, b) in self.byzantine {
            let key = format!("byzantine.{id}");
            let kind = BehaviorKind::from_name(&b.kind)
                .ok_or_else(|| bad(&format!("{key}.kind"), format!("unknown behavior {:?}", b.kind)))?;
            let layers = b
                .layers
                .iter()
                .map(|l| parse_layer(&format!("{key}.layers"), l))
                .collect::<Result<_, _>>()?;
            byzantine.insert(
                parse_pid(&key, &id)?,
                Behavior {
                    kind,
                    omit: b.omit.into_iter().map(ProcessId).collect(),
                    layers,
                    victim: b.victim.map(ProcessId),
                    values: b.values.into_iter().map(String::into_bytes).collect(),
                },
            );
        }

        let kind = match self.schedule.kind.as_str() {
            "lockstep" => ScheduleKind::Lockstep,
            "random" => ScheduleKind::Random,
            "script" => ScheduleKind::Script,
            other => return Err(bad("schedule.kind", format!("unknown schedule {other:?}"))),
        };
        let rules = self
            .schedule
            .rules
            .into_iter()
            .map(|r| {
                Ok(Rule {
                    from: r.from.into_iter().map(ProcessId).collect(),
                    to: r.to.into_iter().map(ProcessId).collect(),
                    layer: r
                        .layer
                        .as_deref()
                        .map(|l| parse_layer("schedule.rules", l))
                        .transpose()?,
                    delay: r.delay,
                })
            })
            .collect::<Result<_, ScenarioError>>()?;

        let mut claims = BTreeMap::new();
        for (id, seed) in self.naming.claims {
            claims.insert(parse_pid("naming.claims", &id)?, seed);
        }

        let s = Scenario {
            n: self.n,
            t: self.t,
            k: self.k,
            algorithm,
            stack,
            provider,
            proposers,
            byzantine,
            schedule: Schedule {
                kind,
                seed: self.schedule.seed,
                min_delay: self.schedule.min_delay,
                max_delay: self.schedule.max_delay,
                rules,
            },
            timers: Timers {
                delta_rc: self.timers.delta_rc,
                delta_cc: self.timers.delta_cc,
                gc_delay: self.timers.gc_delay,
            },
            max_steps: self.max_steps,
            claims,
            fault,
        };
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
n = 6
t = 1
k = 1
algorithm = "optimal"
stack = "cc"

[proposers]
1 = "a"
2 = "b"

[byzantine.3]
kind = "selective-send"
omit = [4]
layers = ["rc"]

[schedule]
kind = "random"
seed = 9
min_delay = 1
max_delay = 3

[[schedule.rules]]
from = [1]
to = [5, 6]
layer = "cac1"
delay = 3

[timers]
delta_rc = 2
delta_cc = 0
"#;

    #[test]
    fn parses_a_full_file() {
        let s = Scenario::from_toml(GOOD).unwrap();
        assert_eq!((s.n, s.t, s.k), (6, 1, 1));
        assert_eq!(s.stack, Stack::Cc);
        assert_eq!(s.proposers[&ProcessId(2)], b"b");
        let b = &s.byzantine[&ProcessId(3)];
        assert_eq!(b.kind, BehaviorKind::SelectiveSend);
        assert_eq!(b.layers, vec![Layer::Rc]);
        assert_eq!(s.schedule.kind, ScheduleKind::Random);
        assert_eq!(s.schedule.rules[0].layer, Some(Layer::Cac1));
        assert_eq!(s.timers.delta_cc, 0);
        assert_eq!(s.timers.gc_delay, 1);
        assert_eq!(s.correct().len(), 5);
    }

    #[test]
    fn toml_round_trip() {
        let s = Scenario::from_toml(GOOD).unwrap();
        let again = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let e = Scenario::from_toml("n = 4\nt = 1\nk = = 2\n").unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn unknown_key_is_reported() {
        let e = Scenario::from_toml("n = 4\nt = 1\nbogus = 2\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.msg.contains("bogus"), "{e}");
    }

    #[test]
    fn semantic_errors_name_the_key_and_line() {
        let e = Scenario::from_toml("n = 4\nt = 1\nk = 2\n").unwrap_err();
        assert_eq!(e.key, "n");
        assert_eq!(e.line, Some(1));

        let src = "n = 5\nt = 1\n\n[byzantine.2]\nkind = \"teleport\"\n";
        let e = Scenario::from_toml(src).unwrap_err();
        assert_eq!(e.key, "byzantine.2.kind");
        assert_eq!(e.line, Some(5));
        assert!(e.to_string().starts_with("line 5: byzantine.2.kind"));
    }

    #[test]
    fn too_many_byzantine() {
        let src = "n = 5\nt = 1\n[byzantine.1]\nkind = \"silent\"\n[byzantine.2]\nkind = \"silent\"\n";
        let e = Scenario::from_toml(src).unwrap_err();
        assert_eq!(e.key, "byzantine");
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn resilience_rules() {
        assert!(Scenario::new(4, 1, 1, Algorithm::Simple).validate().is_err());
        assert!(Scenario::new(5, 1, 1, Algorithm::Simple).validate().is_ok());
        assert!(Scenario::new(4, 1, 1, Algorithm::Optimal).validate().is_ok());
        assert!(Scenario::new(4, 1, 2, Algorithm::Optimal).validate().is_err());
        let cc_simple = Scenario::new(5, 1, 1, Algorithm::Simple).stack(Stack::Cc);
        assert_eq!(cc_simple.validate().unwrap_err().key, "algorithm");
    }

    #[test]
    fn forging_behaviors_need_the_bare_stack() {
        let s = Scenario::new(4, 1, 1, Algorithm::Optimal)
            .stack(Stack::Cc)
            .byzantine(2, Behavior::new(BehaviorKind::EquivocateWitness));
        assert_eq!(s.validate().unwrap_err().key, "byzantine.2");
    }

    #[test]
    fn defaults() {
        let s = Scenario::from_toml("n = 4\nt = 1\n").unwrap();
        assert_eq!(s.algorithm, Algorithm::Optimal);
        assert_eq!(s.schedule.kind, ScheduleKind::Lockstep);
        assert_eq!(s.max_steps, DEFAULT_MAX_STEPS);
        assert!(s.all_correct());
    }
}

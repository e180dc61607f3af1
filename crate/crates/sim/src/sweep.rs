//! Seed sweeps. Runs are independent and may execute on several threads;
//! results are joined and aggregated in seed order, so reports do not depend
//! on the job count.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checker::{check_trace, Verdict};
use crate::scenario::{Scenario, ScenarioError};
use crate::sim::run;
use crate::stats::RunStats;
use crate::trace::Trace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub seed: u64,
    #[serde(flatten)]
    pub stats: RunStats,
    /// Names of the properties this run violated.
    pub violations: Vec<String>,
    /// SHA-256 of the trace as persisted.
    pub trace_sha256: String,
}

/// min / median / max over the runs that produced the metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub min: u64,
    pub median: f64,
    pub max: u64,
}

impl Aggregate {
    pub fn of(values: impl IntoIterator<Item = u64>) -> Option<Self> {
        let mut v: Vec<u64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_unstable();
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2] as f64
        } else {
            (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
        };
        Some(Aggregate {
            count: n,
            min: v[0],
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub runs: Vec<RunRow>,
    pub first_accept_wave: Option<Aggregate>,
    pub all_accept_wave: Option<Aggregate>,
    pub messages: Option<Aggregate>,
    pub d: Option<Aggregate>,
    pub ell: Option<Aggregate>,
    pub decide_sys: Option<Aggregate>,
    pub decide_rc: Option<Aggregate>,
    pub dropped: Option<Aggregate>,
    pub violating_runs: usize,
}

impl MetricsReport {
    pub fn of(runs: Vec<RunRow>) -> Self {
        let agg = |f: &dyn Fn(&RunRow) -> Option<u64>| Aggregate::of(runs.iter().filter_map(f));
        MetricsReport {
            first_accept_wave: agg(&|r| r.stats.first_accept_wave),
            all_accept_wave: agg(&|r| r.stats.all_accept_wave),
            messages: agg(&|r| Some(r.stats.messages)),
            d: agg(&|r| Some(r.stats.d as u64)),
            ell: agg(&|r| Some(r.stats.ell as u64)),
            decide_sys: agg(&|r| r.stats.decide_sys),
            decide_rc: agg(&|r| r.stats.decide_rc),
            dropped: agg(&|r| Some(r.stats.dropped)),
            violating_runs: runs.iter().filter(|r| !r.violations.is_empty()).count(),
            runs,
        }
    }
}

/// The first violating run of a sweep, ready to be replayed.
#[derive(Clone, Debug)]
pub struct Violation {
    pub scenario: Scenario,
    pub verdicts: Vec<Verdict>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub metrics: MetricsReport,
    pub first_violation: Option<Violation>,
}

/// One run with its verdicts and trace.
#[derive(Clone, Debug)]
pub struct Checked {
    pub row: RunRow,
    pub verdicts: Vec<Verdict>,
    pub trace: Trace,
}

/// Runs and checks one scenario.
pub fn run_checked(s: &Scenario) -> Result<Checked, ScenarioError> {
    let r = run(s)?;
    let verdicts = check_trace(&r.trace).expect("simulator traces are well formed");
    let jsonl = r.trace.to_jsonl();
    let row = RunRow {
        seed: s.schedule.seed,
        stats: r.stats,
        violations: verdicts
            .iter()
            .filter(|v| !v.holds)
            .map(|v| v.property.clone())
            .collect(),
        trace_sha256: hex::encode(Sha256::digest(jsonl.as_bytes())),
    };
    Ok(Checked {
        row,
        verdicts,
        trace: r.trace,
    })
}

/// Runs `template` once per seed on `jobs` threads.
pub fn sweep(template: &Scenario, seeds: Range<u64>, jobs: usize) -> Result<SweepReport, ScenarioError> {
    template.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<(RunRow, Vec<Verdict>)> = pool.install(|| {
        seeds
            .into_par_iter()
            .map(|seed| {
                let c = run_checked(&template.clone().with_seed(seed)).expect("validated template");
                (c.row, c.verdicts)
            })
            .collect()
    });
    let first_violation = results
        .iter()
        .find(|(row, _)| !row.violations.is_empty())
        .map(|(row, v)| Violation {
            scenario: template.clone().with_seed(row.seed),
            verdicts: v.clone(),
        });
    Ok(SweepReport {
        metrics: MetricsReport::of(results.into_iter().map(|(row, _)| row).collect()),
        first_violation,
    })
}

//! The `cac` command line: `run`, `sweep` and `check`.
//!
//! Exit codes: 0 when every applicable property holds, 1 on a property
//! violation, 2 on a usage, scenario or trace error.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use cac_sim::checker::check_trace;
use cac_sim::sweep::{run_checked, Aggregate, RunRow};
use cac_sim::{run, sweep, MetricsReport, Scenario, Trace, Verdict};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "cac", version, about = "Run, sweep and check CAC scenarios")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one scenario and check every applicable property.
    Run(RunArgs),
    /// Run a scenario template once per seed.
    Sweep(SweepArgs),
    /// Re-check a persisted trace offline.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the schedule seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Write the trace (JSON lines) here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// `A..B` (B excluded) or `N`, meaning `0..N`.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Range<u64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Write the trace of the first violating run here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Where the first violating run is saved as a scenario file.
    #[arg(long, default_value = "first-violation.toml")]
    pub violation_out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Trace file written by `run --trace` or `sweep --trace`.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

pub fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let num = |x: &str| x.trim().parse::<u64>().map_err(|_| format!("bad seed {x:?}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b)?);
            if a > b {
                return Err(format!("empty range {s:?} runs backwards"));
            }
            Ok(a..b)
        }
        None => Ok(0..num(s)?),
    }
}

/// Column order of every CSV this tool writes.
pub const CSV_COLUMNS: [&str; 16] = [
    "seed",
    "first_accept_wave",
    "all_accept_wave",
    "messages",
    "d",
    "ell",
    "rounds",
    "decide_sys",
    "decide_rc",
    "decided_via",
    "dropped",
    "steps",
    "quiescent",
    "budget_exhausted",
    "violations",
    "trace_sha256",
];

fn opt(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_record(r: &RunRow) -> [String; 16] {
    let s = &r.stats;
    [
        r.seed.to_string(),
        opt(s.first_accept_wave),
        opt(s.all_accept_wave),
        s.messages.to_string(),
        s.d.to_string(),
        s.ell.to_string(),
        s.rounds.to_string(),
        opt(s.decide_sys),
        opt(s.decide_rc),
        s.decided_via.join(";"),
        s.dropped.to_string(),
        s.steps.to_string(),
        s.quiescent.to_string(),
        s.budget_exhausted.to_string(),
        r.violations.join(";"),
        r.trace_sha256.clone(),
    ]
}

fn write_csv<'a>(rows: impl IntoIterator<Item = &'a RunRow>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record(csv_record(r)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 fields")
}

fn verdict_lines(verdicts: &[Verdict]) -> String {
    let mut out = String::new();
    for v in verdicts {
        let status = match (v.holds, v.skipped) {
            (_, true) => "SKIP",
            (true, false) => "PASS",
            (false, false) => "FAIL",
        };
        let _ = write!(out, "  {status} {}", v.property);
        if !v.holds {
            let _ = write!(out, "  witness records {:?}: {}", v.witness, v.detail);
        }
        out.push('\n');
    }
    out
}

fn row_table(r: &RunRow) -> String {
    let s = &r.stats;
    let rows = [
        ("seed", r.seed.to_string()),
        ("first accept wave", opt(s.first_accept_wave)),
        ("all accept wave", opt(s.all_accept_wave)),
        ("messages", s.messages.to_string()),
        ("d", s.d.to_string()),
        ("ell", s.ell.to_string()),
        ("decide rounds", opt(s.decide_sys)),
        ("decide rc rounds", opt(s.decide_rc)),
        ("decided via", s.decided_via.join(",")),
        ("dropped", s.dropped.to_string()),
        ("steps", s.steps.to_string()),
        ("quiescent", s.quiescent.to_string()),
        ("trace sha256", r.trace_sha256.clone()),
    ];
    rows.iter().map(|(k, v)| format!("{k:<18} {v}\n")).collect()
}

fn aggregate_table(m: &MetricsReport) -> String {
    let mut out = format!("{:<18} {}\n", "runs", m.runs.len());
    let _ = writeln!(out, "{:<18} {}", "violating runs", m.violating_runs);
    let _ = writeln!(out, "{:<18} {:>8} {:>8} {:>8}", "metric", "min", "median", "max");
    let aggs: [(&str, Option<Aggregate>); 8] = [
        ("first accept wave", m.first_accept_wave),
        ("all accept wave", m.all_accept_wave),
        ("messages", m.messages),
        ("d", m.d),
        ("ell", m.ell),
        ("decide rounds", m.decide_sys),
        ("decide rc rounds", m.decide_rc),
        ("dropped", m.dropped),
    ];
    for (name, a) in aggs {
        match a {
            Some(a) => {
                let _ = writeln!(out, "{name:<18} {:>8} {:>8} {:>8}", a.min, a.median, a.max);
            }
            None => {
                let _ = writeln!(out, "{name:<18} {:>8} {:>8} {:>8}", "-", "-", "-");
            }
        }
    }
    out
}

#[derive(Serialize)]
struct RunJson<'a> {
    run: &'a RunRow,
    verdicts: &'a [Verdict],
}

fn load_scenario(path: &Path) -> Result<Scenario, String> {
    let src = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Scenario::from_toml(&src).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

/// Where a violating run's trace goes when `--trace` was not given.
fn default_trace_path(scenario: &Path, seed: u64) -> PathBuf {
    let stem = scenario.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    PathBuf::from(format!("{stem}-seed{seed}.trace.jsonl"))
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    let mut s = load_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        s = s.with_seed(seed);
    }
    let checked = run_checked(&s).map_err(|e| e.to_string())?;
    let (row, verdicts) = (&checked.row, &checked.verdicts);
    let text = match a.format {
        Format::Table => format!("{}verdicts\n{}", row_table(row), verdict_lines(verdicts)),
        Format::Csv => write_csv([row]),
        Format::Json => serde_json::to_string_pretty(&RunJson { run: row, verdicts }).expect("plain data") + "\n",
    };
    out.write_all(text.as_bytes()).map_err(|e| e.to_string())?;

    let violated = verdicts.iter().any(|v| !v.holds);
    let trace_path = match (&a.trace, violated) {
        (Some(p), _) => Some(p.clone()),
        (None, true) => Some(default_trace_path(&a.scenario, s.schedule.seed)),
        (None, false) => None,
    };
    if let Some(p) = &trace_path {
        write_file(p, &checked.trace.to_jsonl())?;
    }
    if violated {
        let p = trace_path.expect("set on violation");
        for v in verdicts.iter().filter(|v| !v.holds) {
            let _ = writeln!(
                err,
                "violation: {} at records {:?} of {}",
                v.property,
                v.witness,
                p.display()
            );
        }
        return Ok(EXIT_VIOLATION);
    }
    Ok(EXIT_PASS)
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    let template = load_scenario(&a.scenario)?;
    let report = sweep(&template, a.seeds.clone(), a.jobs).map_err(|e| e.to_string())?;
    let m = &report.metrics;
    let text = match a.format {
        Format::Table => aggregate_table(m),
        Format::Csv => write_csv(&m.runs),
        Format::Json => serde_json::to_string_pretty(m).expect("plain data") + "\n",
    };
    out.write_all(text.as_bytes()).map_err(|e| e.to_string())?;

    let Some(v) = &report.first_violation else {
        return Ok(EXIT_PASS);
    };
    write_file(&a.violation_out, &v.scenario.to_toml())?;
    let _ = writeln!(
        err,
        "{} of {} runs violated; first at seed {}, saved to {}",
        m.violating_runs,
        m.runs.len(),
        v.scenario.schedule.seed,
        a.violation_out.display()
    );
    for x in v.verdicts.iter().filter(|x| !x.holds) {
        let _ = writeln!(
            err,
            "violation: {} at records {:?}: {}",
            x.property, x.witness, x.detail
        );
    }
    if let Some(p) = &a.trace {
        let r = run(&v.scenario).map_err(|e| e.to_string())?;
        write_file(p, &r.trace.to_jsonl())?;
        let _ = writeln!(err, "trace written to {}", p.display());
    }
    Ok(EXIT_VIOLATION)
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> Result<i32, String> {
    let src = fs::read_to_string(&a.trace).map_err(|e| format!("{}: {e}", a.trace.display()))?;
    let trace = Trace::from_jsonl(&src).map_err(|e| format!("{}: {e}", a.trace.display()))?;
    let verdicts = check_trace(&trace).map_err(|e| e.to_string())?;
    let text = match a.format {
        Format::Table => verdict_lines(&verdicts),
        Format::Json => serde_json::to_string_pretty(&verdicts).expect("plain data") + "\n",
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["property", "holds", "skipped", "witness", "detail"])
                .expect("in-memory write");
            for v in &verdicts {
                let witness: Vec<String> = v.witness.iter().map(usize::to_string).collect();
                w.write_record([
                    v.property.clone(),
                    v.holds.to_string(),
                    v.skipped.to_string(),
                    witness.join(";"),
                    v.detail.clone(),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 fields")
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| e.to_string())?;
    Ok(if verdicts.iter().all(|v| v.holds) {
        EXIT_PASS
    } else {
        EXIT_VIOLATION
    })
}

/// Runs a parsed command, writing reports to `out` and diagnostics to `err`.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out, err),
        Command::Sweep(a) => cmd_sweep(a, out, err),
        Command::Check(a) => cmd_check(a, out),
    };
    result.unwrap_or_else(|msg| {
        let _ = writeln!(err, "error: {msg}");
        EXIT_USAGE
    })
}

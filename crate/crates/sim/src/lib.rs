//! Deterministic simulation and checking of the CAC stacks.

pub mod byzantine;
pub mod checker;
pub mod oracle;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod sweep;
pub mod trace;

pub use checker::{check_trace, Verdict};
pub use scenario::{Algorithm, Behavior, BehaviorKind, Rule, Scenario, ScenarioError, Stack};
pub use sim::{run, RunResult};
pub use stats::RunStats;
pub use sweep::{sweep, MetricsReport, SweepReport};
pub use trace::{Record, Trace, TraceError};

//! Scenario description, deterministic simulation, run logs and metrics.

pub mod engine;
pub mod metrics;
pub mod runlog;
pub mod scenario;
pub mod templates;

pub use engine::{run, Engine, SimError};
pub use metrics::{compute_metrics, AgentMetrics, MetricsError, MetricsOptions, MetricsReport, PairMetrics, Stat};
pub use runlog::{Flag, Quantity, Record, Role, RunLog, TraceEvent, TraceKind};
pub use scenario::{AgentSpec, ClockStep, Draw, GapMode, Scenario, ScenarioError};

/// Run `s` and summarize it, with the scheduled frame rate filled in.
pub fn run_with_metrics(s: &Scenario, opts: &MetricsOptions) -> Result<(RunLog, Result<MetricsReport, MetricsError>), SimError> {
    let log = run(s)?;
    let report = compute_metrics(&log.estimates, &log.truth, opts).map(|mut r| {
        r.frame_rate = Some(s.frame_rate());
        r
    });
    Ok((log, report))
}

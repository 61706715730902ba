use clap::{Parser, Subcommand};
use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use swarmsync_core::protocol::vectors::golden_vectors;
use swarmsync_core::sim::runlog::{read_records, write_records};
use swarmsync_core::sim::{
    compute_metrics, run_with_metrics, templates, MetricsOptions, MetricsReport, Scenario,
};

/// Exit statuses. Kept stable so scripts can tell bad input from failed work.
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "swarmsync", version, about = "Broadcast localization and clock sync simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write run logs and metrics to a directory.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Seconds excluded from the metrics at the start of the run.
        #[arg(long, default_value_t = 5.0)]
        warmup: f64,
        /// Also write the radio event trace.
        #[arg(long)]
        trace: bool,
    },
    /// Recompute metrics from a run log and its truth table.
    Metrics {
        #[arg(long)]
        runlog: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        warmup: f64,
        /// Parent whose clock the others are compared against.
        #[arg(long, default_value_t = 1)]
        reference: u16,
        /// Directory for metrics.csv and metrics.txt; print only if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a bundled scenario file.
    GenScenario {
        #[arg(long)]
        template: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the golden packet vectors as JSON.
    CodecVectors {
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn config(e: impl Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Write through a temp file in the target directory, then rename over `path`.
fn write_atomic<F>(path: &Path, fill: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<&File>) -> Result<(), String>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| runtime(format!("cannot write in {}: {e}", dir.display())))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        w.flush().map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    tmp.persist(path)
        .map_err(|e| runtime(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn check_warmup(w: f64) -> Result<(), Failure> {
    if w.is_finite() && w >= 0.0 {
        Ok(())
    } else {
        Err(config(format!("warm-up must be a non-negative number of seconds, got {w}")))
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| config(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_report(dir: &Path, report: &MetricsReport) -> Result<(), Failure> {
    write_atomic(&dir.join("metrics.csv"), |w| {
        report.write_csv(w).map_err(|e| e.to_string())
    })?;
    write_atomic(&dir.join("metrics.txt"), |w| {
        w.write_all(report.to_table().as_bytes()).map_err(|e| e.to_string())
    })
}

fn cmd_run(
    scenario: &Path,
    out: &Path,
    seed: Option<u64>,
    warmup: f64,
    trace: bool,
) -> Result<(), Failure> {
    check_warmup(warmup)?;
    let mut s = Scenario::from_path(scenario).map_err(config)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    ensure_dir(out)?;

    let opts = MetricsOptions {
        warmup,
        reference: s.estimator.reference_parent as u16,
    };
    let (log, report) = run_with_metrics(&s, &opts).map_err(runtime)?;
    write_atomic(&out.join("runlog.csv"), |w| {
        write_records(&log.estimates, w).map_err(|e| e.to_string())
    })?;
    write_atomic(&out.join("truth.csv"), |w| {
        write_records(&log.truth, w).map_err(|e| e.to_string())
    })?;
    if trace {
        write_atomic(&out.join("trace.csv"), |w| {
            log.write_trace(w).map_err(|e| e.to_string())
        })?;
    }

    match report {
        Ok(report) => {
            write_report(out, &report)?;
            print!("{}", report.to_table());
        }
        // a run shorter than the warm-up has nothing to score
        Err(e) => {
            let report = MetricsReport {
                warmup,
                agents: Vec::new(),
                ranges: Vec::new(),
                frame_rate: Some(s.frame_rate()),
                measured_rate: None,
            };
            write_report(out, &report)?;
            println!("{e}");
            print!("{}", report.to_table());
        }
    }
    Ok(())
}

fn load_records(path: &Path) -> Result<Vec<swarmsync_core::sim::Record>, Failure> {
    let f = File::open(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
    read_records(BufReader::new(f)).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn cmd_metrics(
    runlog: &Path,
    truth: &Path,
    warmup: f64,
    reference: u16,
    out: Option<&Path>,
) -> Result<(), Failure> {
    check_warmup(warmup)?;
    let est = load_records(runlog)?;
    let tru = load_records(truth)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
    }
    let report = compute_metrics(&est, &tru, &MetricsOptions { warmup, reference }).map_err(runtime)?;
    if let Some(dir) = out {
        write_report(dir, &report)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_gen_scenario(template: &str, out: &Path) -> Result<(), Failure> {
    let text = templates::text(template).ok_or_else(|| {
        config(format!(
            "unknown template {template:?}; available: {}",
            templates::NAMES.join(", ")
        ))
    })?;
    write_atomic(out, |w| w.write_all(text.as_bytes()).map_err(|e| e.to_string()))
}

fn cmd_codec_vectors(out: &Path) -> Result<(), Failure> {
    let vectors = golden_vectors();
    write_atomic(out, |w| {
        serde_json::to_writer_pretty(&mut *w, &vectors).map_err(|e| e.to_string())?;
        writeln!(w).map_err(|e| e.to_string())
    })?;
    println!("wrote {} vectors to {}", vectors.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            warmup,
            trace,
        } => cmd_run(scenario, out, *seed, *warmup, *trace),
        Command::Metrics {
            runlog,
            truth,
            warmup,
            reference,
            out,
        } => cmd_metrics(runlog, truth, *warmup, *reference, out.as_deref()),
        Command::GenScenario { template, out } => cmd_gen_scenario(template, out),
        Command::CodecVectors { out } => cmd_codec_vectors(out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            let _ = writeln!(io::stderr(), "error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(io::stderr(), "error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

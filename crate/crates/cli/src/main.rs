//! `qosgrid` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input (usage, parse or validation
//! errors), 3 I/O failure.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qosgrid_core::experiment::ExperimentError;
use qosgrid_core::report::ReportError;
use qosgrid_core::sim::{run_with_trace, JobOutcome, Metrics};
use qosgrid_core::{
    emit_reports, load_scenario, run_experiment, selection_report, ExperimentSpec, PolicyId,
    Scenario, ScenarioError,
};

const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "qosgrid", version, about = "Reliability-aware grid scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the scenario once and print a summary.
    Run {
        scenario: PathBuf,
        /// Also write the tab-separated event log to this file.
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
    /// Compare scheduling policies over seeded replications and write reports.
    Compare {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "min_time,reliability_first")]
        policies: Vec<PolicyId>,
        #[arg(long, default_value_t = 1)]
        replications: u32,
        /// Base seed; defaults to the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Print the per-node availability and reward table without simulating.
    Analyze { scenario: PathBuf },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(e: impl ToString) -> Self {
        Self { code: EXIT_INVALID, message: e.to_string() }
    }

    fn io(e: impl ToString) -> Self {
        Self { code: EXIT_IO, message: e.to_string() }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => Self::io(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Scenario(e) => e.into(),
            other => Self::invalid(other),
        }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { .. } => Self::io(e),
            ReportError::Empty => Self::invalid(e),
        }
    }
}

fn run_summary(scenario: &Scenario, metrics: &Metrics) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "policy {}, seed {}, {} nodes, {} jobs",
        scenario.policy,
        scenario.seed,
        scenario.nodes.len(),
        scenario.jobs.len()
    );
    for j in &metrics.jobs {
        let status = match j.outcome {
            JobOutcome::Completed => format!("makespan {:.3} s", j.makespan.unwrap_or_default()),
            JobOutcome::RetriesExhausted => "failed: retries exhausted".to_string(),
            JobOutcome::HorizonExhausted => "unfinished at horizon".to_string(),
        };
        let deadline = match j.deadline_met {
            Some(true) => ", deadline met",
            Some(false) => ", deadline missed",
            None => "",
        };
        let _ = writeln!(out, "job {:>3}: {status}{deadline}, {} restart(s)", j.job_id, j.restarts);
    }
    let mean = metrics
        .mean_job_makespan
        .map_or_else(|| "n/a".to_string(), |m| format!("{m:.3} s"));
    let _ = writeln!(out, "mean makespan: {mean}");
    let _ = writeln!(out, "task failures: {}", metrics.total_task_failures);
    for n in &metrics.nodes {
        let _ = writeln!(
            out,
            "node {:>3}: {} attempts, {} successes, busy {:.1} s, availability {:.4}",
            n.node_id, n.attempts, n.successes, n.busy_time, n.observed_availability
        );
    }
    let _ = writeln!(out, "simulated time: {:.3} s, {} events", metrics.end_time, metrics.event_count);
    out
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { scenario, event_log } => {
            let scenario = load_scenario(&scenario)?;
            let (metrics, trace) = run_with_trace(&scenario).map_err(Failure::invalid)?;
            if let Some(path) = event_log {
                std::fs::write(&path, trace.event_log())
                    .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            }
            print!("{}", run_summary(&scenario, &metrics));
        }
        Command::Compare { scenario, policies, replications, seed, out } => {
            let base_seed = match seed {
                Some(s) => s,
                None => load_scenario(&scenario)?.seed,
            };
            let spec = ExperimentSpec {
                scenario_path: scenario,
                policies,
                replications,
                base_seed,
                out_dir: out,
            };
            let results = run_experiment(&spec)?;
            let written = emit_reports(&results, &spec.out_dir)?;
            print!("{}", qosgrid_core::report::summary_text(&results));
            println!();
            for path in written {
                println!("wrote {}", path.display());
            }
        }
        Command::Analyze { scenario } => {
            let scenario = load_scenario(&scenario)?;
            let report = selection_report(&scenario.nodes).map_err(Failure::invalid)?;
            print!("{}", report.to_csv());
            println!();
            println!("performance_pick: node {}", report.performance_pick);
            println!("reliability_pick: node {}", report.reliability_pick);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

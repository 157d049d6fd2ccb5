//! CSV and text reports for an experiment.
//!
//! All files are rendered in memory first, then each is written to a
//! temporary file in the output directory and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::experiment::ExperimentResults;

pub const MAKESPANS_HEADER: &str = "policy,replication,seed,job_id,makespan_s,deadline_met";
pub const NODES_HEADER: &str =
    "policy,node_id,attempts,successes,raw_success_rate,observed_availability";

pub const MAKESPANS_FILE: &str = "makespans.csv";
pub const NODES_FILE: &str = "nodes.csv";
pub const RELIABILITY_FILE: &str = "reliability.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("nothing to report")]
    Empty,
}

fn render_csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header.split(',')).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (policy, replication, job). Unfinished jobs have an empty
/// makespan; jobs without a deadline have an empty `deadline_met`.
pub fn makespans_csv(results: &ExperimentResults) -> String {
    let rows = results.replications.iter().flat_map(|r| {
        r.metrics.jobs.iter().map(move |j| {
            vec![
                r.policy.to_string(),
                r.replication.to_string(),
                r.seed.to_string(),
                j.job_id.to_string(),
                opt(j.makespan),
                opt(j.deadline_met),
            ]
        })
    });
    render_csv(MAKESPANS_HEADER, rows)
}

/// Per-node counters summed over all replications of each policy.
pub fn nodes_csv(results: &ExperimentResults) -> String {
    let rows = results.summaries.iter().flat_map(|s| {
        s.nodes.iter().map(move |n| {
            vec![
                s.policy.to_string(),
                n.node_id.to_string(),
                n.attempts.to_string(),
                n.successes.to_string(),
                n.raw_success_rate.to_string(),
                n.observed_availability.to_string(),
            ]
        })
    });
    render_csv(NODES_HEADER, rows)
}

pub fn summary_text(results: &ExperimentResults) -> String {
    let mut out = String::new();
    let runs = results.summaries.first().map_or(0, |s| s.runs);
    let _ = writeln!(
        out,
        "fleet: {} nodes, workload: {} jobs, {} replication(s) per policy, base seed {}",
        results.node_count, results.job_count, runs, results.base_seed
    );
    for s in &results.summaries {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3} s"));
        let _ = writeln!(out);
        let _ = writeln!(out, "policy {}", s.policy);
        let _ = writeln!(
            out,
            "  jobs completed:  {}/{}",
            s.completed_jobs,
            s.completed_jobs + s.unfinished_jobs
        );
        let _ = writeln!(out, "  mean makespan:   {}", fmt(s.mean_makespan));
        let _ = writeln!(out, "  min makespan:    {}", fmt(s.min_makespan));
        let _ = writeln!(out, "  max makespan:    {}", fmt(s.max_makespan));
        let _ = writeln!(out, "  task failures:   {}", s.total_failures);
        for n in &s.nodes {
            let _ = writeln!(
                out,
                "  node {:>3}: {} attempts, {} successes, success rate {:.4}, availability {:.4}",
                n.node_id, n.attempts, n.successes, n.raw_success_rate, n.observed_availability
            );
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "performance_pick: node {}", results.selection.performance_pick);
    let _ = writeln!(out, "reliability_pick: node {}", results.selection.reliability_pick);
    out
}

/// Writes `makespans.csv`, `nodes.csv`, `reliability.csv` and `summary.txt`
/// into `out_dir`, creating it if needed. Returns the written paths.
pub fn emit_reports(results: &ExperimentResults, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    if results.replications.is_empty() {
        return Err(ReportError::Empty);
    }
    let files = [
        (MAKESPANS_FILE, makespans_csv(results)),
        (NODES_FILE, nodes_csv(results)),
        (RELIABILITY_FILE, results.selection.to_csv()),
        (SUMMARY_FILE, summary_text(results)),
    ];
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let target = out_dir.join(name);
        let mut tmp = NamedTempFile::new_in(out_dir).map_err(io(out_dir))?;
        tmp.write_all(contents.as_bytes()).map_err(io(&target))?;
        tmp.as_file().sync_all().map_err(io(&target))?;
        tmp.persist(&target).map_err(|e| ReportError::Io {
            path: target.clone(),
            source: e.error,
        })?;
        written.push(target);
    }
    Ok(written)
}

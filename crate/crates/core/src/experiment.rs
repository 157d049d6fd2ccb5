//! Policy comparison over seeded replications.
//!
//! Replication `k` of every policy runs the scenario with seed
//! `base_seed + k` (wrapping), so all policies face the same failure
//! histories. Replications run in parallel; results are collected in
//! (policy, replication) order and do not depend on thread scheduling.

use std::collections::BTreeSet;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::model::{NodeId, Scenario};
use crate::perf::{selection_report, PerfError, SelectionReport};
use crate::policy::{success_rate, NodeStats, PolicyId, SuccessRateMode};
use crate::scenario::{load_scenario, ScenarioError};
use crate::sim::{run, JobOutcome, Metrics, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario_path: PathBuf,
    pub policies: Vec<PolicyId>,
    pub replications: u32,
    pub base_seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Perf(#[from] PerfError),
}

pub fn replication_seed(base_seed: u64, replication: u32) -> u64 {
    base_seed.wrapping_add(u64::from(replication))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub policy: PolicyId,
    pub replication: u32,
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeAggregate {
    pub node_id: NodeId,
    pub attempts: u64,
    pub successes: u64,
    pub raw_success_rate: f64,
    /// Mean over replications.
    pub observed_availability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: PolicyId,
    pub runs: u32,
    pub completed_jobs: usize,
    pub unfinished_jobs: usize,
    /// Over every completed job of every replication.
    pub mean_makespan: Option<f64>,
    pub min_makespan: Option<f64>,
    pub max_makespan: Option<f64>,
    pub total_failures: u64,
    pub nodes: Vec<NodeAggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResults {
    pub node_count: usize,
    pub job_count: usize,
    pub base_seed: u64,
    pub replications: Vec<Replication>,
    pub summaries: Vec<PolicySummary>,
    pub selection: SelectionReport,
}

impl ExperimentResults {
    pub fn summary(&self, policy: PolicyId) -> Option<&PolicySummary> {
        self.summaries.iter().find(|s| s.policy == policy)
    }
}

fn check_arms(policies: &[PolicyId], replications: u32) -> Result<(), ExperimentError> {
    if replications == 0 {
        return Err(ExperimentError::Spec("replications must be >= 1".into()));
    }
    if policies.is_empty() {
        return Err(ExperimentError::Spec("at least one policy is required".into()));
    }
    let distinct: BTreeSet<_> = policies.iter().collect();
    if distinct.len() != policies.len() {
        return Err(ExperimentError::Spec("policies must be distinct".into()));
    }
    Ok(())
}

pub fn run_comparison(
    scenario: &Scenario,
    policies: &[PolicyId],
    replications: u32,
    base_seed: u64,
) -> Result<ExperimentResults, ExperimentError> {
    check_arms(policies, replications)?;
    let selection = selection_report(&scenario.nodes)?;

    let arms: Vec<(PolicyId, u32)> = policies
        .iter()
        .flat_map(|&p| (0..replications).map(move |k| (p, k)))
        .collect();
    let runs: Vec<Replication> = arms
        .par_iter()
        .map(|&(policy, replication)| {
            let seed = replication_seed(base_seed, replication);
            let arm = Scenario {
                policy,
                seed,
                ..scenario.clone()
            };
            run(&arm).map(|metrics| Replication {
                policy,
                replication,
                seed,
                metrics,
            })
        })
        .collect::<Result<_, SimError>>()?;

    let summaries = policies
        .iter()
        .map(|&p| summarize(p, runs.iter().filter(|r| r.policy == p)))
        .collect();

    Ok(ExperimentResults {
        node_count: scenario.nodes.len(),
        job_count: scenario.jobs.len(),
        base_seed,
        replications: runs,
        summaries,
        selection,
    })
}

fn summarize<'a>(policy: PolicyId, runs: impl Iterator<Item = &'a Replication>) -> PolicySummary {
    let runs: Vec<&Replication> = runs.collect();
    let makespans: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.metrics.jobs.iter().filter_map(|j| j.makespan))
        .collect();
    let completed_jobs = runs
        .iter()
        .flat_map(|r| &r.metrics.jobs)
        .filter(|j| j.outcome == JobOutcome::Completed)
        .count();
    let total_jobs: usize = runs.iter().map(|r| r.metrics.jobs.len()).sum();

    let node_ids: Vec<NodeId> = runs
        .first()
        .map(|r| r.metrics.nodes.iter().map(|n| n.node_id).collect())
        .unwrap_or_default();
    let nodes = node_ids
        .iter()
        .enumerate()
        .map(|(i, &node_id)| {
            let per_run = runs.iter().map(|r| &r.metrics.nodes[i]);
            let stats = NodeStats {
                node_id,
                attempts: per_run.clone().map(|n| n.attempts).sum(),
                successes: per_run.clone().map(|n| n.successes).sum(),
            };
            NodeAggregate {
                node_id,
                attempts: stats.attempts,
                successes: stats.successes,
                raw_success_rate: success_rate(&stats, SuccessRateMode::Raw),
                observed_availability: per_run.map(|n| n.observed_availability).sum::<f64>()
                    / runs.len() as f64,
            }
        })
        .collect();

    let mean = (!makespans.is_empty()).then(|| makespans.iter().sum::<f64>() / makespans.len() as f64);
    PolicySummary {
        policy,
        runs: runs.len() as u32,
        completed_jobs,
        unfinished_jobs: total_jobs - completed_jobs,
        mean_makespan: mean,
        min_makespan: makespans.iter().copied().reduce(f64::min),
        max_makespan: makespans.iter().copied().reduce(f64::max),
        total_failures: runs.iter().map(|r| r.metrics.total_task_failures).sum(),
        nodes,
    }
}

/// Loads the scenario named by `spec` and runs every arm. Nothing is written.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults, ExperimentError> {
    check_arms(&spec.policies, spec.replications)?;
    let scenario = load_scenario(&spec.scenario_path)?;
    run_comparison(&scenario, &spec.policies, spec.replications, spec.base_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FailureProfile, GridNode, Job, SimOptions};

    fn scenario() -> Scenario {
        Scenario {
            nodes: vec![
                GridNode::new(0, 300.0).with_failure(FailureProfile::new(200.0, 900.0, 0.0)),
                GridNode::new(1, 100.0),
                GridNode::new(2, 150.0).with_failure(FailureProfile::new(20.0, 900.0, 0.1)),
            ],
            jobs: vec![Job::uniform(0, 5, 3000.0), Job::uniform(1, 3, 3000.0).arriving_at(20.0)],
            policy: PolicyId::CostAware,
            seed: 99,
            horizon: 1e6,
            options: SimOptions::default(),
        }
    }

    #[test]
    fn seeds_are_base_plus_index() {
        let r = run_comparison(&scenario(), &[PolicyId::MinTime, PolicyId::ReliabilityFirst], 4, 1000).unwrap();
        let seeds: Vec<_> = r.replications.iter().map(|x| (x.policy, x.replication, x.seed)).collect();
        assert_eq!(seeds.len(), 8);
        for (p, k, s) in seeds {
            assert_eq!(s, 1000 + u64::from(k), "{p}");
        }
        assert_eq!(replication_seed(u64::MAX, 1), 0);
    }

    #[test]
    fn single_arm_is_transparent() {
        let s = scenario();
        let r = run_comparison(&s, &[PolicyId::CostAware], 1, s.seed).unwrap();
        assert_eq!(r.replications[0].metrics, run(&s).unwrap());
    }

    #[test]
    fn comparison_is_deterministic() {
        let s = scenario();
        let a = run_comparison(&s, &PolicyId::ALL, 5, 7).unwrap();
        let b = run_comparison(&s, &PolicyId::ALL, 5, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_counts_add_up() {
        let r = run_comparison(&scenario(), &[PolicyId::MinTime], 3, 0).unwrap();
        let sum = r.summary(PolicyId::MinTime).unwrap();
        assert_eq!(sum.runs, 3);
        assert_eq!(sum.completed_jobs + sum.unfinished_jobs, 6);
        let failures: u64 = sum.nodes.iter().map(|n| n.attempts - n.successes).sum();
        assert_eq!(failures, sum.total_failures);
    }

    #[test]
    fn bad_arms_rejected() {
        let s = scenario();
        assert!(matches!(run_comparison(&s, &[], 1, 0), Err(ExperimentError::Spec(_))));
        assert!(matches!(run_comparison(&s, &[PolicyId::MinTime], 0, 0), Err(ExperimentError::Spec(_))));
        assert!(matches!(
            run_comparison(&s, &[PolicyId::MinTime, PolicyId::MinTime], 1, 0),
            Err(ExperimentError::Spec(_))
        ));
    }
}

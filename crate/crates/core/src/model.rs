//! Domain types shared by the scheduler, the simulator and the analysis code.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::policy::{PolicyId, SuccessRateMode};

pub type NodeId = u32;
pub type JobId = u32;
pub type TaskId = u32;

pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Retry budget applied when a job does not state one.
pub const DEFAULT_MAX_RETRIES: u32 = 3;

/// Exponential failure/repair behaviour of a node.
///
/// Rates are stored per hour, the unit used in scenario files. The simulator
/// works in seconds and converts through [`FailureProfile::lambda_per_sec`] and
/// [`FailureProfile::mu_per_sec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureProfile {
    #[serde(rename = "lambda_per_hour")]
    pub lambda: f64,
    #[serde(rename = "mu_per_hour")]
    pub mu: f64,
    /// Fraction of capacity lost while up, in `[0, 1)`.
    #[serde(default)]
    pub degradation: f64,
}

impl FailureProfile {
    pub fn new(lambda: f64, mu: f64, degradation: f64) -> Self {
        Self {
            lambda,
            mu,
            degradation,
        }
    }

    /// A node that never fails.
    pub fn reliable() -> Self {
        Self::new(0.0, 1.0, 0.0)
    }

    pub fn lambda_per_sec(&self) -> f64 {
        self.lambda / SECONDS_PER_HOUR
    }

    pub fn mu_per_sec(&self) -> f64 {
        self.mu / SECONDS_PER_HOUR
    }
}

impl Default for FailureProfile {
    fn default() -> Self {
        Self::reliable()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridNode {
    pub id: NodeId,
    /// Million instructions per second.
    pub mips: f64,
    #[serde(default)]
    pub cost_per_sec: f64,
    #[serde(default)]
    pub failure: FailureProfile,
}

impl GridNode {
    pub fn new(id: NodeId, mips: f64) -> Self {
        Self {
            id,
            mips,
            cost_per_sec: 0.0,
            failure: FailureProfile::reliable(),
        }
    }

    pub fn with_cost(mut self, cost_per_sec: f64) -> Self {
        self.cost_per_sec = cost_per_sec;
        self
    }

    pub fn with_failure(mut self, failure: FailureProfile) -> Self {
        self.failure = failure;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum TaskState {
    #[default]
    Pending,
    Running,
    Completed,
    Failed,
}

impl TaskState {
    /// Pending→Running→{Completed, Failed}, and Failed→Pending for a retry.
    pub fn can_transition_to(self, next: TaskState) -> bool {
        use TaskState::*;
        matches!(
            (self, next),
            (Pending, Running) | (Running, Completed) | (Running, Failed) | (Failed, Pending)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("illegal task transition {from:?} -> {to:?}")]
pub struct InvalidTransition {
    pub from: TaskState,
    pub to: TaskState,
}

/// One grid thread: an independent unit of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: TaskId,
    #[serde(skip)]
    pub job_id: JobId,
    pub length_mi: f64,
    #[serde(skip)]
    pub state: TaskState,
    #[serde(skip)]
    pub attempts: u32,
}

impl Task {
    pub fn new(job_id: JobId, id: TaskId, length_mi: f64) -> Self {
        Self {
            id,
            job_id,
            length_mi,
            state: TaskState::Pending,
            attempts: 0,
        }
    }

    pub fn transition(&mut self, next: TaskState) -> Result<(), InvalidTransition> {
        if !self.state.can_transition_to(next) {
            return Err(InvalidTransition {
                from: self.state,
                to: next,
            });
        }
        if next == TaskState::Running {
            self.attempts += 1;
        }
        self.state = next;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppModel {
    /// Independent tasks; a failure only affects the failed task.
    #[default]
    MasterWorker,
    /// Cooperating tasks; any task failure restarts the whole job.
    Spmd,
}

/// The five-band qualitative reliability scale, ordered `Poor < ... < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReliabilityLevel {
    Poor,
    Low,
    Medium,
    Good,
    High,
}

impl ReliabilityLevel {
    pub const ALL: [ReliabilityLevel; 5] = [
        ReliabilityLevel::Poor,
        ReliabilityLevel::Low,
        ReliabilityLevel::Medium,
        ReliabilityLevel::Good,
        ReliabilityLevel::High,
    ];

    /// Availability band `[lower, upper)`; High is closed at 1.0.
    pub fn band(self) -> (f64, f64) {
        match self {
            ReliabilityLevel::Poor => (0.0, 0.60),
            ReliabilityLevel::Low => (0.60, 0.70),
            ReliabilityLevel::Medium => (0.70, 0.80),
            ReliabilityLevel::Good => (0.80, 0.90),
            ReliabilityLevel::High => (0.90, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReliabilityLevel::Poor => "Poor",
            ReliabilityLevel::Low => "Low",
            ReliabilityLevel::Medium => "Medium",
            ReliabilityLevel::Good => "Good",
            ReliabilityLevel::High => "High",
        }
    }
}

impl fmt::Display for ReliabilityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosRequirement {
    #[serde(default, rename = "deadline_s", skip_serializing_if = "Option::is_none")]
    pub deadline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_level: Option<ReliabilityLevel>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_max_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}

impl Default for QosRequirement {
    fn default() -> Self {
        Self {
            deadline: None,
            min_level: None,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Job {
    pub id: JobId,
    #[serde(default, rename = "arrival_s")]
    pub arrival: f64,
    #[serde(default)]
    pub app_model: AppModel,
    #[serde(default)]
    pub qos: QosRequirement,
    pub tasks: Vec<Task>,
}

impl Job {
    /// Builds a job of `count` tasks of equal length, ids `0..count`.
    pub fn uniform(id: JobId, count: u32, length_mi: f64) -> Self {
        Self {
            id,
            arrival: 0.0,
            app_model: AppModel::MasterWorker,
            qos: QosRequirement::default(),
            tasks: (0..count).map(|t| Task::new(id, t, length_mi)).collect(),
        }
    }

    pub fn arriving_at(mut self, arrival: f64) -> Self {
        self.arrival = arrival;
        self
    }

    pub fn with_model(mut self, app_model: AppModel) -> Self {
        self.app_model = app_model;
        self
    }

    pub fn with_qos(mut self, qos: QosRequirement) -> Self {
        self.qos = qos;
        self
    }

    pub fn is_completed(&self) -> bool {
        self.tasks.iter().all(|t| t.state == TaskState::Completed)
    }
}

/// Simulator knobs that have defaults in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOptions {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub success_rate_mode: SuccessRateMode,
}

fn default_epsilon() -> f64 {
    crate::policy::DEFAULT_EPSILON
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            success_rate_mode: SuccessRateMode::default(),
        }
    }
}

/// A complete, seeded experiment input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub nodes: Vec<GridNode>,
    pub jobs: Vec<Job>,
    pub policy: PolicyId,
    pub seed: u64,
    #[serde(rename = "horizon_s")]
    pub horizon: f64,
    #[serde(default)]
    pub options: SimOptions,
}

/// Seconds to run `task` on `node` at full speed.
pub fn estimated_exec_time(task: &Task, node: &GridNode) -> f64 {
    task.length_mi / node.mips
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoNodes,
    EmptyWorkload,
    DuplicateNodeId(NodeId),
    NodeField {
        node: NodeId,
        field: &'static str,
        requirement: &'static str,
    },
    DuplicateJobId(JobId),
    EmptyJob(JobId),
    DuplicateTaskId {
        job: JobId,
        task: TaskId,
    },
    TaskLength {
        job: JobId,
        task: TaskId,
    },
    JobField {
        job: JobId,
        field: &'static str,
        requirement: &'static str,
    },
    Horizon,
    Epsilon,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoNodes => write!(f, "scenario has no nodes"),
            Violation::EmptyWorkload => write!(f, "scenario has no jobs"),
            Violation::DuplicateNodeId(id) => write!(f, "duplicate node id {id}"),
            Violation::NodeField {
                node,
                field,
                requirement,
            } => write!(f, "node {node}: {field} must be {requirement}"),
            Violation::DuplicateJobId(id) => write!(f, "duplicate job id {id}"),
            Violation::EmptyJob(id) => write!(f, "job {id}: must contain at least one task"),
            Violation::DuplicateTaskId { job, task } => {
                write!(f, "job {job}: duplicate task id {task}")
            }
            Violation::TaskLength { job, task } => {
                write!(f, "job {job} task {task}: length_mi must be > 0")
            }
            Violation::JobField {
                job,
                field,
                requirement,
            } => write!(f, "job {job}: {field} must be {requirement}"),
            Violation::Horizon => write!(f, "horizon_s must be > 0"),
            Violation::Epsilon => write!(f, "options.epsilon must be >= 0"),
        }
    }
}

/// Collects every violated scenario invariant. An empty result means valid.
///
/// Comparisons are written so that NaN fails them.
pub fn validate_scenario(scenario: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();

    if scenario.nodes.is_empty() {
        out.push(Violation::NoNodes);
    }
    let mut seen = HashSet::new();
    for node in &scenario.nodes {
        if !seen.insert(node.id) {
            out.push(Violation::DuplicateNodeId(node.id));
        }
        let mut check = |ok: bool, field: &'static str, requirement: &'static str| {
            if !ok {
                out.push(Violation::NodeField {
                    node: node.id,
                    field,
                    requirement,
                });
            }
        };
        check(node.mips > 0.0 && node.mips.is_finite(), "mips", "> 0");
        check(
            node.cost_per_sec >= 0.0 && node.cost_per_sec.is_finite(),
            "cost_per_sec",
            ">= 0",
        );
        let f = &node.failure;
        check(
            f.lambda >= 0.0 && f.lambda.is_finite(),
            "lambda_per_hour",
            ">= 0",
        );
        check(f.mu > 0.0 && f.mu.is_finite(), "mu_per_hour", "> 0");
        check(
            (0.0..1.0).contains(&f.degradation),
            "degradation",
            "in [0, 1)",
        );
    }

    if scenario.jobs.is_empty() {
        out.push(Violation::EmptyWorkload);
    }
    let mut seen_jobs = HashSet::new();
    for job in &scenario.jobs {
        if !seen_jobs.insert(job.id) {
            out.push(Violation::DuplicateJobId(job.id));
        }
        if job.tasks.is_empty() {
            out.push(Violation::EmptyJob(job.id));
        }
        if !(job.arrival >= 0.0 && job.arrival.is_finite()) {
            out.push(Violation::JobField {
                job: job.id,
                field: "arrival_s",
                requirement: ">= 0",
            });
        }
        if let Some(deadline) = job.qos.deadline {
            if !(deadline > 0.0) {
                out.push(Violation::JobField {
                    job: job.id,
                    field: "qos.deadline_s",
                    requirement: "> 0",
                });
            }
        }
        let mut seen_tasks = HashSet::new();
        for task in &job.tasks {
            if !seen_tasks.insert(task.id) {
                out.push(Violation::DuplicateTaskId {
                    job: job.id,
                    task: task.id,
                });
            }
            if !(task.length_mi > 0.0 && task.length_mi.is_finite()) {
                out.push(Violation::TaskLength {
                    job: job.id,
                    task: task.id,
                });
            }
        }
    }

    if !(scenario.horizon > 0.0) {
        out.push(Violation::Horizon);
    }
    if !(scenario.options.epsilon >= 0.0) {
        out.push(Violation::Epsilon);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_scenario() -> Scenario {
        Scenario {
            nodes: vec![GridNode::new(0, 500.0), GridNode::new(1, 250.0)],
            jobs: vec![Job::uniform(0, 2, 1000.0)],
            policy: PolicyId::MinTime,
            seed: 1,
            horizon: 1e6,
            options: SimOptions::default(),
        }
    }

    #[test]
    fn exec_time_examples() {
        let task = Task::new(0, 0, 1000.0);
        assert_eq!(estimated_exec_time(&task, &GridNode::new(0, 500.0)), 2.0);
        let task = Task::new(0, 0, 3600.0);
        assert_eq!(estimated_exec_time(&task, &GridNode::new(0, 1.0)), 3600.0);
        for x in [0.001, 1.0, 17.5, 1e9] {
            assert_eq!(estimated_exec_time(&Task::new(0, 0, x), &GridNode::new(0, x)), 1.0);
        }
    }

    #[test]
    fn well_formed_scenario_is_ok() {
        assert!(validate_scenario(&small_scenario()).is_empty());
    }

    #[test]
    fn duplicate_node_id_reported() {
        let mut s = small_scenario();
        s.nodes[1].id = 0;
        let v = validate_scenario(&s);
        assert_eq!(v, vec![Violation::DuplicateNodeId(0)]);
        assert_eq!(v[0].to_string(), "duplicate node id 0");
    }

    #[test]
    fn zero_mips_names_node_and_field() {
        let mut s = small_scenario();
        s.nodes[1].mips = 0.0;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "node 1: mips must be > 0");
    }

    #[test]
    fn all_violations_collected() {
        let mut s = small_scenario();
        s.nodes[0].mips = -1.0;
        s.nodes[1].failure.mu = 0.0;
        s.jobs.push(Job::uniform(0, 0, 1.0));
        s.horizon = 0.0;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 5, "{v:?}");
        assert!(v.contains(&Violation::EmptyJob(0)));
        assert!(v.contains(&Violation::DuplicateJobId(0)));
    }

    #[test]
    fn empty_workload() {
        let mut s = small_scenario();
        s.jobs.clear();
        assert_eq!(validate_scenario(&s), vec![Violation::EmptyWorkload]);
    }

    #[test]
    fn task_transitions() {
        let mut t = Task::new(0, 0, 1.0);
        assert!(t.transition(TaskState::Completed).is_err());
        t.transition(TaskState::Running).unwrap();
        t.transition(TaskState::Failed).unwrap();
        t.transition(TaskState::Pending).unwrap();
        t.transition(TaskState::Running).unwrap();
        t.transition(TaskState::Completed).unwrap();
        assert_eq!(t.attempts, 2);
        assert!(t.transition(TaskState::Pending).is_err());
    }

    #[test]
    fn reliability_bands_partition_unit_interval() {
        let mut prev_upper = 0.0;
        for level in ReliabilityLevel::ALL {
            let (lo, hi) = level.band();
            assert_eq!(lo, prev_upper);
            prev_upper = hi;
        }
        assert_eq!(prev_upper, 1.0);
    }

    proptest! {
        #[test]
        fn exec_time_monotone(len in 1e-3..1e9f64, mips in 1e-3..1e6f64, k in 1.0001..10.0f64) {
            let slow = GridNode::new(0, mips);
            let fast = GridNode::new(1, mips * k);
            let t = Task::new(0, 0, len);
            prop_assert!(estimated_exec_time(&t, &fast) < estimated_exec_time(&t, &slow));
            let longer = Task::new(0, 1, len * k);
            prop_assert!(estimated_exec_time(&longer, &slow) > estimated_exec_time(&t, &slow));
            prop_assert!(estimated_exec_time(&t, &slow) > 0.0);
        }

        #[test]
        fn completion_ignores_task_order(states in proptest::collection::vec(any::<bool>(), 1..12), seed in any::<u64>()) {
            let mut job = Job::uniform(0, states.len() as u32, 1.0);
            for (task, done) in job.tasks.iter_mut().zip(&states) {
                if *done {
                    task.state = TaskState::Completed;
                }
            }
            let before = job.is_completed();
            // deterministic shuffle
            let n = job.tasks.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                job.tasks.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(before, job.is_completed());
            prop_assert_eq!(before, states.iter().all(|d| *d));
        }
    }
}

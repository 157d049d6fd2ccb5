//! Reliability-aware scheduling for computational grids.
//!
//! The crate provides three node-ranking policies ([`policy`]), an
//! exponential failure/repair model for nodes ([`failure`]), Markov reward
//! analysis of node fleets ([`perf`]), a deterministic discrete-event
//! simulator ([`sim`]), and an experiment harness that compares policies
//! over seeded replications and writes CSV reports ([`experiment`],
//! [`report`]). Scenarios are JSON documents ([`scenario`]).

pub mod experiment;
pub mod failure;
pub mod model;
pub mod perf;
pub mod policy;
pub mod report;
pub mod scenario;
pub mod sim;

pub use experiment::{run_comparison, run_experiment, ExperimentResults, ExperimentSpec};
pub use model::{
    estimated_exec_time, validate_scenario, AppModel, FailureProfile, GridNode, Job, JobId,
    NodeId, QosRequirement, ReliabilityLevel, Scenario, SimOptions, Task, TaskId, TaskState,
    Violation,
};
pub use perf::{classify_reliability, selection_report, steady_state_availability};
pub use policy::{NodeStats, PolicyId, SuccessRateMode};
pub use report::emit_reports;
pub use scenario::{dump_scenario, load_scenario, parse_scenario, ScenarioError};
pub use sim::{run, run_with_trace, Metrics, SimError};

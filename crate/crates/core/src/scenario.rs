//! JSON scenario files.
//!
//! ```json
//! {
//!   "nodes": [{"id": 0, "mips": 500, "cost_per_sec": 0.1,
//!              "failure": {"lambda_per_hour": 0.1, "mu_per_hour": 1.0, "degradation": 0.0}}],
//!   "jobs": [{"id": 0, "arrival_s": 0, "app_model": "master_worker",
//!             "qos": {"deadline_s": 60, "min_level": "medium", "max_retries": 3},
//!             "tasks": [{"id": 0, "length_mi": 1000}]}],
//!   "policy": "reliability_first",
//!   "seed": 42,
//!   "horizon_s": 86400,
//!   "options": {"epsilon": 1e-9, "success_rate_mode": "smoothed"}
//! }
//! ```
//!
//! Omitted optional fields take their defaults: no failures, zero cost,
//! `master_worker`, `max_retries` 3, epsilon 1e-9, smoothed success rates.

use std::fs;
use std::path::{Path, PathBuf};

use crate::model::{validate_scenario, Scenario, Violation};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: field `{field}`: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("{}: invalid scenario: {}", path.display(), join(violations))]
    Validation {
        path: PathBuf,
        violations: Vec<Violation>,
    },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Parses and validates scenario text. `origin` only labels errors.
pub fn parse_scenario(text: &str, origin: &Path) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        ScenarioError::Parse {
            path: origin.to_path_buf(),
            line: inner.line(),
            column: inner.column(),
            field,
            message: strip_position(&inner.to_string()),
        }
    })?;
    for job in &mut scenario.jobs {
        for task in &mut job.tasks {
            task.job_id = job.id;
        }
    }
    let violations = validate_scenario(&scenario);
    if !violations.is_empty() {
        return Err(ScenarioError::Validation {
            path: origin.to_path_buf(),
            violations,
        });
    }
    Ok(scenario)
}

// serde_json appends " at line L column C"; the position is reported separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path)
}

/// Canonical JSON form; [`parse_scenario`] reads it back to an equal value.
pub fn dump_scenario(scenario: &Scenario) -> String {
    let mut s = serde_json::to_string_pretty(scenario).expect("scenario serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AppModel, FailureProfile, GridNode, Job, QosRequirement, ReliabilityLevel, SimOptions};
    use crate::policy::{PolicyId, SuccessRateMode, DEFAULT_EPSILON};
    use proptest::prelude::*;

    const MINIMAL: &str = r#"{
        "nodes": [{"id": 0, "mips": 500}],
        "jobs": [{"id": 0, "tasks": [{"id": 0, "length_mi": 1000}]}],
        "policy": "min_time",
        "seed": 1,
        "horizon_s": 100
    }"#;

    fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        parse_scenario(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.options.epsilon, DEFAULT_EPSILON);
        assert_eq!(s.options.success_rate_mode, SuccessRateMode::Smoothed);
        assert_eq!(s.jobs[0].qos.max_retries, 3);
        assert_eq!(s.jobs[0].app_model, AppModel::MasterWorker);
        assert_eq!(s.nodes[0].failure, FailureProfile::reliable());
        assert_eq!(s.jobs[0].tasks[0].job_id, 0);
    }

    #[test]
    fn unknown_policy_is_a_parse_error() {
        let text = MINIMAL.replace("min_time", "fastest");
        let err = parse(&text).unwrap_err();
        let ScenarioError::Parse { field, message, line, .. } = &err else {
            panic!("{err}");
        };
        assert_eq!(field, "policy");
        assert_eq!(*line, 4);
        for name in ["reliability_first", "min_time", "cost_aware"] {
            assert!(message.contains(name), "{message}");
        }
    }

    #[test]
    fn negative_mips_is_a_validation_error() {
        let text = MINIMAL.replace("\"mips\": 500", "\"mips\": -5");
        let err = parse(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Validation { .. }));
        assert!(err.to_string().contains("node 0: mips must be > 0"), "{err}");
    }

    #[test]
    fn every_violation_is_listed() {
        let text = r#"{
            "nodes": [{"id": 0, "mips": 0}, {"id": 0, "mips": 1, "failure": {"lambda_per_hour": 1, "mu_per_hour": 0}}],
            "jobs": [],
            "policy": "cost_aware", "seed": 0, "horizon_s": 10
        }"#;
        let ScenarioError::Validation { violations, .. } = parse(text).unwrap_err() else {
            panic!()
        };
        assert_eq!(violations.len(), 4, "{violations:?}");
    }

    #[test]
    fn nested_field_path_is_reported() {
        let text = MINIMAL.replace("\"length_mi\": 1000", "\"length_mi\": \"long\"");
        let ScenarioError::Parse { field, .. } = parse(&text).unwrap_err() else {
            panic!()
        };
        assert_eq!(field, "jobs[0].tasks[0].length_mi");
    }

    #[test]
    fn missing_file_is_io() {
        assert!(matches!(
            load_scenario("/nonexistent/scenario.json"),
            Err(ScenarioError::Io { .. })
        ));
    }

    fn arb_scenario() -> impl Strategy<Value = Scenario> {
        let node = (1e-3..1e4f64, 0.0..10.0f64, 0.0..100.0f64, 1e-3..100.0f64, 0.0..0.99f64);
        let job = (
            0.0..1e4f64,
            any::<bool>(),
            proptest::option::of(1e-3..1e5f64),
            proptest::option::of(0usize..5),
            0u32..10,
            proptest::collection::vec(1e-3..1e7f64, 1..5),
        );
        (
            proptest::collection::vec(node, 1..5),
            proptest::collection::vec(job, 1..4),
            0usize..3,
            any::<u64>(),
            1.0..1e9f64,
            0.0..1.0f64,
            any::<bool>(),
        )
            .prop_map(|(nodes, jobs, p, seed, horizon, eps, raw)| Scenario {
                nodes: nodes
                    .into_iter()
                    .enumerate()
                    .map(|(i, (mips, cost, l, m, d))| {
                        GridNode::new(i as u32 * 3, mips)
                            .with_cost(cost)
                            .with_failure(FailureProfile::new(l, m, d))
                    })
                    .collect(),
                jobs: jobs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (arr, spmd, deadline, level, retries, lens))| {
                        let mut job = Job::uniform(i as u32, 0, 1.0)
                            .arriving_at(arr)
                            .with_model(if spmd { AppModel::Spmd } else { AppModel::MasterWorker })
                            .with_qos(QosRequirement {
                                deadline,
                                min_level: level.map(|l| ReliabilityLevel::ALL[l]),
                                max_retries: retries,
                            });
                        job.tasks = lens
                            .into_iter()
                            .enumerate()
                            .map(|(t, len)| crate::model::Task::new(i as u32, t as u32, len))
                            .collect();
                        job
                    })
                    .collect(),
                policy: PolicyId::ALL[p],
                seed,
                horizon,
                options: SimOptions {
                    epsilon: eps,
                    success_rate_mode: if raw { SuccessRateMode::Raw } else { SuccessRateMode::Smoothed },
                },
            })
    }

    proptest! {
        #[test]
        fn dump_then_load_is_identity(s in arb_scenario()) {
            let back = parse(&dump_scenario(&s)).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}

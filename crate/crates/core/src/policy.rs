//! Node ranking policies.
//!
//! Every policy produces a total, deterministic order over the candidate
//! nodes; the head of the order is the node a task is dispatched to. The
//! final tie-break is always the node id, ascending.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{estimated_exec_time, GridNode, NodeId, QosRequirement, Task};
use crate::perf::classify_reliability;

/// Default tolerance under which two success rates count as equal.
pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyId {
    /// Highest observed success rate first, then shortest execution time.
    ReliabilityFirst,
    /// Shortest execution time, failure-unaware baseline.
    MinTime,
    /// Lowest total cost for the task, then fastest.
    CostAware,
}

impl PolicyId {
    pub const ALL: [PolicyId; 3] = [
        PolicyId::ReliabilityFirst,
        PolicyId::MinTime,
        PolicyId::CostAware,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyId::ReliabilityFirst => "reliability_first",
            PolicyId::MinTime => "min_time",
            PolicyId::CostAware => "cost_aware",
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown policy `{0}`, expected one of `reliability_first`, `min_time`, `cost_aware`")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyId {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyId::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownPolicy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessRateMode {
    /// Laplace estimate `(s + 1) / (n + 2)`.
    #[default]
    Smoothed,
    /// `s / n`, with 1.0 for an untried node.
    Raw,
}

/// Empirical attempt/success counters for one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeStats {
    pub node_id: NodeId,
    pub attempts: u64,
    pub successes: u64,
}

impl NodeStats {
    pub fn new(node_id: NodeId) -> Self {
        Self {
            node_id,
            attempts: 0,
            successes: 0,
        }
    }

    pub fn failures(&self) -> u64 {
        self.attempts - self.successes
    }
}

pub fn success_rate(stats: &NodeStats, mode: SuccessRateMode) -> f64 {
    debug_assert!(stats.successes <= stats.attempts);
    match mode {
        SuccessRateMode::Raw if stats.attempts == 0 => 1.0,
        SuccessRateMode::Raw => stats.successes as f64 / stats.attempts as f64,
        SuccessRateMode::Smoothed => (stats.successes + 1) as f64 / (stats.attempts + 2) as f64,
    }
}

pub fn failure_rate(stats: &NodeStats, mode: SuccessRateMode) -> f64 {
    1.0 - success_rate(stats, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("no eligible node to rank")]
    EmptyNodeSet,
}

/// A node together with a snapshot of its counters.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub node: &'a GridNode,
    pub stats: NodeStats,
}

impl<'a> Candidate<'a> {
    pub fn new(node: &'a GridNode, stats: NodeStats) -> Self {
        Self { node, stats }
    }
}

/// Tuning shared by the policies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankOptions {
    pub epsilon: f64,
    pub mode: SuccessRateMode,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            mode: SuccessRateMode::Smoothed,
        }
    }
}

fn by_time_then_id(a: (f64, NodeId), b: (f64, NodeId)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Orders nodes by success rate (descending, rates within `epsilon` of the
/// best remaining rate tied), then execution time, then id.
///
/// The order is built by repeated selection: each position takes the
/// fastest node among those whose rate is within `epsilon` of the highest
/// rate still unplaced. Restricting the input to any subset therefore
/// yields the same head as the first subset member would get here.
pub fn rank_reliability_first(
    candidates: &[Candidate<'_>],
    task: &Task,
    epsilon: f64,
    mode: SuccessRateMode,
) -> Result<Vec<NodeId>, PolicyError> {
    if candidates.is_empty() {
        return Err(PolicyError::EmptyNodeSet);
    }
    let mut remaining: Vec<(f64, f64, NodeId)> = candidates
        .iter()
        .map(|c| {
            (
                success_rate(&c.stats, mode),
                estimated_exec_time(task, c.node),
                c.node.id,
            )
        })
        .collect();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let best_rate = remaining
            .iter()
            .map(|r| r.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .filter(|(_, r)| r.0 >= best_rate - epsilon)
            .min_by(|(_, a), (_, b)| by_time_then_id((a.1, a.2), (b.1, b.2)))
            .expect("best rate is attained");
        order.push(remaining.swap_remove(pos).2);
    }
    Ok(order)
}

/// Orders nodes by execution time, then id. Ignores failure history.
pub fn rank_min_time(
    candidates: &[Candidate<'_>],
    task: &Task,
) -> Result<Vec<NodeId>, PolicyError> {
    if candidates.is_empty() {
        return Err(PolicyError::EmptyNodeSet);
    }
    let mut keyed: Vec<(f64, NodeId)> = candidates
        .iter()
        .map(|c| (estimated_exec_time(task, c.node), c.node.id))
        .collect();
    keyed.sort_by(|a, b| by_time_then_id(*a, *b));
    Ok(keyed.into_iter().map(|(_, id)| id).collect())
}

/// Orders nodes by the total cost of running the task
/// (`cost_per_sec × execution time`), then faster first, then id.
pub fn rank_cost_aware(
    candidates: &[Candidate<'_>],
    task: &Task,
) -> Result<Vec<NodeId>, PolicyError> {
    if candidates.is_empty() {
        return Err(PolicyError::EmptyNodeSet);
    }
    let mut keyed: Vec<(f64, f64, NodeId)> = candidates
        .iter()
        .map(|c| {
            (
                c.node.cost_per_sec * estimated_exec_time(task, c.node),
                c.node.mips,
                c.node.id,
            )
        })
        .collect();
    keyed.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.2.cmp(&b.2))
    });
    Ok(keyed.into_iter().map(|(_, _, id)| id).collect())
}

pub fn rank(
    policy: PolicyId,
    candidates: &[Candidate<'_>],
    task: &Task,
    opts: RankOptions,
) -> Result<Vec<NodeId>, PolicyError> {
    match policy {
        PolicyId::ReliabilityFirst => {
            rank_reliability_first(candidates, task, opts.epsilon, opts.mode)
        }
        PolicyId::MinTime => rank_min_time(candidates, task),
        PolicyId::CostAware => rank_cost_aware(candidates, task),
    }
}

/// Keeps the nodes whose predicted availability classifies at or above
/// `qos.min_level`. `predicted_availability` is indexed like `nodes`.
/// Values outside `[0, 1]` never qualify.
pub fn filter_by_qos<'a>(
    nodes: &[&'a GridNode],
    qos: &QosRequirement,
    predicted_availability: &[f64],
) -> Vec<&'a GridNode> {
    debug_assert_eq!(nodes.len(), predicted_availability.len());
    let Some(min_level) = qos.min_level else {
        return nodes.to_vec();
    };
    nodes
        .iter()
        .zip(predicted_availability)
        .filter(|(_, &a)| classify_reliability(a).is_ok_and(|level| level >= min_level))
        .map(|(n, _)| *n)
        .collect()
}

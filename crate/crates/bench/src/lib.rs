//! Shared fixtures for the benchmarks.

use qosgrid_core::{FailureProfile, GridNode, Job, NodeStats, PolicyId, Scenario, SimOptions};

/// `n` nodes with a spread of speeds and failure behaviour.
pub fn fleet(n: usize) -> Vec<GridNode> {
    (0..n)
        .map(|i| {
            let k = i as f64;
            GridNode::new(i as u32, 200.0 + 75.0 * (i % 7) as f64)
                .with_cost(0.05 + 0.01 * (i % 5) as f64)
                .with_failure(FailureProfile::new(0.01 + 0.02 * (k % 6.0), 0.3 + 0.1 * (k % 4.0), 0.05))
        })
        .collect()
}

/// Attempt history with a mix of reliable and flaky nodes.
pub fn stats(n: usize) -> Vec<NodeStats> {
    (0..n)
        .map(|i| NodeStats {
            node_id: i as u32,
            attempts: 20 + (i % 9) as u64,
            successes: 12 + (i % 13).min(8) as u64,
        })
        .collect()
}

/// `jobs` jobs of `tasks` tasks each on a `nodes`-node fleet.
pub fn scenario(nodes: usize, jobs: u32, tasks: u32, policy: PolicyId) -> Scenario {
    Scenario {
        nodes: fleet(nodes),
        jobs: (0..jobs)
            .map(|j| Job::uniform(j, tasks, 120_000.0).arriving_at(f64::from(j) * 300.0))
            .collect(),
        policy,
        seed: 17,
        horizon: 30.0 * 86_400.0,
        options: SimOptions::default(),
    }
}

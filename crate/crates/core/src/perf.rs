//! Performability analysis: per-node availability and reliability class,
//! and the Markov reward model of a whole fleet.
//!
//! The system CTMC is the superposition of independent two-state node
//! chains. State `k` has node `i` (by position in the input list) down
//! exactly when bit `i` of `k` is set, so state 0 is "all up". The reward
//! of a state is the capacity of its up nodes, `Σ mips × (1 − degradation)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::model::{FailureProfile, GridNode, NodeId, ReliabilityLevel};

/// Largest fleet for which the exact system CTMC is built.
pub const MAX_CTMC_NODES: usize = 16;

/// Bound on `‖πQ‖∞` for an accepted steady-state solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Above this many states the solver switches from dense LU to Gauss-Seidel.
const DENSE_STATE_LIMIT: usize = 1 << 8;
const MAX_SWEEPS: usize = 100_000;

pub const SELECTION_CSV_HEADER: &str = "node_id,mips,lambda_per_hour,mu_per_hour,failure_to_repair_ratio,availability,reliability_level,expected_reward_rate_mips";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerfError {
    #[error("availability {0} outside [0, 1]")]
    Domain(f64),
    #[error("{count} nodes exceeds the exact-model cap of {cap}")]
    TooManyNodes { count: usize, cap: usize },
    #[error("model has no nodes")]
    NoNodes,
    #[error("steady-state system is singular or did not converge (residual {residual:e})")]
    SingularSystem { residual: f64 },
    #[error("steady state has not been solved")]
    NotSolved,
}

/// λ/μ, dimensionless; lower is more reliable.
pub fn failure_to_repair_ratio(profile: &FailureProfile) -> f64 {
    profile.lambda / profile.mu
}

/// Long-run probability of being up, `μ / (λ + μ)`.
pub fn steady_state_availability(profile: &FailureProfile) -> f64 {
    profile.mu / (profile.lambda + profile.mu)
}

pub fn classify_reliability(availability: f64) -> Result<ReliabilityLevel, PerfError> {
    if !(0.0..=1.0).contains(&availability) {
        return Err(PerfError::Domain(availability));
    }
    Ok(ReliabilityLevel::ALL
        .into_iter()
        .rev()
        .find(|level| availability >= level.band().0)
        .unwrap_or(ReliabilityLevel::Poor))
}

/// Set of up nodes, bit `i` for the node at position `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SystemState {
    pub up: u32,
}

/// Sparse CTMC generator: off-diagonal entries per row plus the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    rows: Vec<Vec<(usize, f64)>>,
    diagonal: Vec<f64>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diagonal[i];
        }
        self.rows[i]
            .iter()
            .find(|(col, _)| *col == j)
            .map_or(0.0, |(_, rate)| *rate)
    }

    /// Off-diagonal `(column, rate)` entries of row `i`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut q = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            q[(i, i)] = self.diagonal[i];
            for &(j, rate) in row {
                q[(i, j)] = rate;
            }
        }
        q
    }

    /// `‖πQ‖∞`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        let mut acc: Vec<f64> = self
            .diagonal
            .iter()
            .zip(pi)
            .map(|(d, p)| d * p)
            .collect();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, rate) in row {
                acc[j] += pi[i] * rate;
            }
        }
        acc.into_iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovRewardModel {
    pub node_ids: Vec<NodeId>,
    pub states: Vec<SystemState>,
    /// Rates per second.
    pub generator: Generator,
    /// Processing capacity in MIPS per state.
    pub rewards: Vec<f64>,
    pub steady_state: Option<Vec<f64>>,
}

impl MarkovRewardModel {
    pub fn state_index(&self, state: SystemState) -> usize {
        let mask = (1u32 << self.node_ids.len()) - 1;
        (!state.up & mask) as usize
    }
}

pub fn build_system_ctmc(nodes: &[GridNode], cap: usize) -> Result<MarkovRewardModel, PerfError> {
    let cap = cap.min(MAX_CTMC_NODES);
    if nodes.is_empty() {
        return Err(PerfError::NoNodes);
    }
    if nodes.len() > cap {
        return Err(PerfError::TooManyNodes {
            count: nodes.len(),
            cap,
        });
    }
    let n = nodes.len();
    let count = 1usize << n;
    let mask = (count - 1) as u32;
    let mut states = Vec::with_capacity(count);
    let mut rows = Vec::with_capacity(count);
    let mut diagonal = Vec::with_capacity(count);
    let mut rewards = Vec::with_capacity(count);
    for k in 0..count {
        let mut row = Vec::with_capacity(n);
        let mut reward = 0.0;
        for (i, node) in nodes.iter().enumerate() {
            let bit = 1usize << i;
            if k & bit == 0 {
                reward += node.mips * (1.0 - node.failure.degradation);
                let rate = node.failure.lambda_per_sec();
                if rate > 0.0 {
                    row.push((k | bit, rate));
                }
            } else {
                row.push((k & !bit, node.failure.mu_per_sec()));
            }
        }
        row.sort_by_key(|(j, _)| *j);
        diagonal.push(-row.iter().map(|(_, r)| r).sum::<f64>());
        rows.push(row);
        rewards.push(reward);
        states.push(SystemState {
            up: !(k as u32) & mask,
        });
    }
    Ok(MarkovRewardModel {
        node_ids: nodes.iter().map(|n| n.id).collect(),
        states,
        generator: Generator { rows, diagonal },
        rewards,
        steady_state: None,
    })
}

/// Solves `πQ = 0, Σπ = 1` and stores π in the model.
///
/// Small chains use a dense LU factorisation of the transposed system with
/// one balance equation replaced by the normalisation row; larger ones use
/// Gauss-Seidel sweeps. Either way the result is rejected unless
/// `‖πQ‖∞ < RESIDUAL_TOLERANCE`.
pub fn solve_steady_state(model: &mut MarkovRewardModel) -> Result<&[f64], PerfError> {
    let q = &model.generator;
    let mut pi = if q.dim() <= DENSE_STATE_LIMIT {
        solve_dense(q)?
    } else {
        solve_gauss_seidel(q)
    };
    for p in pi.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(PerfError::SingularSystem { residual: f64::NAN });
    }
    pi.iter_mut().for_each(|p| *p /= total);
    let residual = q.residual(&pi);
    if !(residual < RESIDUAL_TOLERANCE) {
        return Err(PerfError::SingularSystem { residual });
    }
    model.steady_state = Some(pi);
    Ok(model.steady_state.as_deref().expect("just stored"))
}

fn solve_dense(q: &Generator) -> Result<Vec<f64>, PerfError> {
    let n = q.dim();
    let mut a = q.to_dense().transpose();
    // Rates are per second and tiny; rescaling keeps the pivots comparable
    // to the normalisation row.
    let scale = q.diagonal.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if scale > 0.0 {
        a /= scale;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or(PerfError::SingularSystem { residual: f64::NAN })?;
    Ok(x.iter().copied().collect())
}

fn solve_gauss_seidel(q: &Generator) -> Vec<f64> {
    let n = q.dim();
    // incoming[j] = [(i, q_ij)] for i != j
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, rate) in q.row(i) {
            incoming[j].push((i, rate));
        }
    }
    // stop on the residual relative to the fastest rate, i.e. in units of π
    let scale = q.diagonal.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let target = (scale * 1e-15).min(RESIDUAL_TOLERANCE * 1e-2);
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..MAX_SWEEPS {
        for j in 0..n {
            let inflow: f64 = incoming[j].iter().map(|&(i, r)| pi[i] * r).sum();
            let out = -q.diagonal[j];
            if out > 0.0 {
                pi[j] = inflow / out;
            }
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        if q.residual(&pi) <= target {
            break;
        }
    }
    pi
}

/// `Σ π_i r_i` in MIPS.
pub fn expected_reward_rate(model: &MarkovRewardModel) -> Result<f64, PerfError> {
    let pi = model.steady_state.as_ref().ok_or(PerfError::NotSolved)?;
    Ok(pi.iter().zip(&model.rewards).map(|(p, r)| p * r).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRow {
    pub node_id: NodeId,
    pub mips: f64,
    pub lambda_per_hour: f64,
    pub mu_per_hour: f64,
    pub failure_to_repair_ratio: f64,
    pub availability: f64,
    pub reliability_level: ReliabilityLevel,
    pub expected_reward_rate_mips: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    /// Fastest node.
    pub performance_pick: NodeId,
    /// Node with the lowest failure-to-repair ratio.
    pub reliability_pick: NodeId,
}

impl SelectionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SELECTION_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.node_id,
                r.mips,
                r.lambda_per_hour,
                r.mu_per_hour,
                r.failure_to_repair_ratio,
                r.availability,
                r.reliability_level,
                r.expected_reward_rate_mips
            );
        }
        out
    }
}

/// Per-node performability rows (ordered by id) and the performance and
/// reliability picks, ties going to the lowest id.
pub fn selection_report(nodes: &[GridNode]) -> Result<SelectionReport, PerfError> {
    if nodes.is_empty() {
        return Err(PerfError::NoNodes);
    }
    let mut sorted: Vec<&GridNode> = nodes.iter().collect();
    sorted.sort_by_key(|n| n.id);
    let rows: Vec<SelectionRow> = sorted
        .iter()
        .map(|n| {
            let availability = steady_state_availability(&n.failure);
            Ok(SelectionRow {
                node_id: n.id,
                mips: n.mips,
                lambda_per_hour: n.failure.lambda,
                mu_per_hour: n.failure.mu,
                failure_to_repair_ratio: failure_to_repair_ratio(&n.failure),
                availability,
                reliability_level: classify_reliability(availability)?,
                expected_reward_rate_mips: availability * n.mips * (1.0 - n.failure.degradation),
            })
        })
        .collect::<Result<_, PerfError>>()?;
    // rows are id-ordered, so the first extremum seen has the lowest id
    let performance_pick = rows
        .iter()
        .fold(&rows[0], |best, r| if r.mips > best.mips { r } else { best })
        .node_id;
    let reliability_pick = rows
        .iter()
        .fold(&rows[0], |best, r| {
            if r.failure_to_repair_ratio < best.failure_to_repair_ratio {
                r
            } else {
                best
            }
        })
        .node_id;
    Ok(SelectionReport {
        rows,
        performance_pick,
        reliability_pick,
    })
}

//! Discrete-event execution of a [`Scenario`].
//!
//! A single scheduler owns a global FIFO of pending tasks. Each node runs
//! at most one task at a time. Whenever a node frees up, is repaired, or new
//! work arrives, the queue is scanned front to back and every task that has
//! a free eligible node is dispatched to the head of the policy's ranking
//! over the free nodes.
//!
//! Events are ordered by `(time, sequence)`, where the sequence number is
//! assigned at insertion, so replaying a scenario reproduces the exact
//! event order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::failure::{record_attempt, AttemptOutcome, NodeLifecycle};
use crate::model::{
    estimated_exec_time, validate_scenario, AppModel, GridNode, Job, JobId, NodeId,
    QosRequirement, Scenario, Task, TaskId, TaskState, Violation,
};
use crate::perf::steady_state_availability;
use crate::policy::{
    filter_by_qos, rank, success_rate, Candidate, NodeStats, PolicyError, PolicyId, RankOptions,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("job {job_id}: no node satisfies its reliability requirement")]
    EmptyNodeSet { job_id: JobId },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    JobArrival,
    TaskComplete,
    NodeFail,
    NodeRepair,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::JobArrival => "JobArrival",
            EventKind::TaskComplete => "TaskComplete",
            EventKind::NodeFail => "NodeFail",
            EventKind::NodeRepair => "NodeRepair",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Payload {
    JobArrival { job: usize },
    TaskComplete { node: usize, token: u64 },
    NodeFail { node: usize },
    NodeRepair { node: usize },
}

/// A scheduled event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub sequence: u64,
    payload: Payload,
}

impl SimEvent {
    pub fn kind(&self) -> EventKind {
        match self.payload {
            Payload::JobArrival { .. } => EventKind::JobArrival,
            Payload::TaskComplete { .. } => EventKind::TaskComplete,
            Payload::NodeFail { .. } => EventKind::NodeFail,
            Payload::NodeRepair { .. } => EventKind::NodeRepair,
        }
    }
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.sequence.cmp(&self.sequence))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JobOutcome {
    Completed,
    /// A task (or, for SPMD, the job) ran out of retries.
    RetriesExhausted,
    /// Still unfinished when the horizon was reached.
    HorizonExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobMetrics {
    pub job_id: JobId,
    pub arrival: f64,
    pub outcome: JobOutcome,
    /// Completion time minus arrival, for completed jobs.
    pub makespan: Option<f64>,
    /// `None` when the job has no deadline.
    pub deadline_met: Option<bool>,
    pub restarts: u32,
    pub max_task_attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeMetrics {
    pub node_id: NodeId,
    pub attempts: u64,
    pub successes: u64,
    pub failures: u64,
    pub busy_time: f64,
    pub up_time: f64,
    pub observed_availability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub jobs: Vec<JobMetrics>,
    pub mean_job_makespan: Option<f64>,
    pub total_task_failures: u64,
    /// Ordered by node id.
    pub nodes: Vec<NodeMetrics>,
    pub event_count: u64,
    pub end_time: f64,
}

impl Metrics {
    pub fn node(&self, id: NodeId) -> Option<&NodeMetrics> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    pub fn job(&self, id: JobId) -> Option<&JobMetrics> {
        self.jobs.iter().find(|j| j.job_id == id)
    }

    pub fn all_completed(&self) -> bool {
        self.jobs.iter().all(|j| j.outcome == JobOutcome::Completed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: EventKind,
    pub node_id: Option<NodeId>,
    pub job_id: Option<JobId>,
    pub task_id: Option<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchRecord {
    pub time: f64,
    pub node_id: NodeId,
    pub job_id: JobId,
    pub task_id: TaskId,
    pub attempt: u32,
    /// Success rate of every node (in the scenario's rate mode) at decision time.
    pub success_rates: Vec<(NodeId, f64)>,
}

/// Debug output of a run: processed events and dispatch decisions.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub dispatches: Vec<DispatchRecord>,
}

impl Trace {
    /// One line per event: `time<TAB>kind<TAB>node_id<TAB>job_id<TAB>task_id`,
    /// with `-` for fields that do not apply.
    pub fn event_log(&self) -> String {
        fn field<T: fmt::Display>(v: Option<T>) -> String {
            v.map_or_else(|| "-".to_string(), |x| x.to_string())
        }
        let mut out = String::new();
        for e in &self.events {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                e.time,
                e.kind,
                field(e.node_id),
                field(e.job_id),
                field(e.task_id)
            );
        }
        out
    }
}

/// Picks the node for `task` among `free`: QoS filter, then the head of
/// the policy's ranking. `predicted_availability` is indexed like `free`.
pub fn dispatch(
    task: &Task,
    free: &[Candidate<'_>],
    policy: PolicyId,
    qos: &QosRequirement,
    predicted_availability: &[f64],
    opts: RankOptions,
) -> Result<NodeId, PolicyError> {
    let nodes: Vec<&GridNode> = free.iter().map(|c| c.node).collect();
    let eligible = filter_by_qos(&nodes, qos, predicted_availability);
    let candidates: Vec<Candidate<'_>> = free
        .iter()
        .filter(|c| eligible.iter().any(|n| n.id == c.node.id))
        .copied()
        .collect();
    rank(policy, &candidates, task, opts).map(|order| order[0])
}

pub fn run(scenario: &Scenario) -> Result<Metrics, SimError> {
    Engine::new(scenario, false).map(|e| e.execute().0)
}

pub fn run_with_trace(scenario: &Scenario) -> Result<(Metrics, Trace), SimError> {
    Engine::new(scenario, true).map(|e| {
        let (metrics, trace) = e.execute();
        (metrics, trace.unwrap_or_default())
    })
}

#[derive(Debug, Clone, Copy)]
struct Running {
    job: usize,
    task: usize,
    token: u64,
    started: f64,
}

struct NodeRt<'a> {
    node: &'a GridNode,
    life: Option<NodeLifecycle>,
    up: bool,
    up_since: f64,
    up_time: f64,
    busy_time: f64,
    running: Option<Running>,
    stats: NodeStats,
    predicted_availability: f64,
}

struct JobRt {
    job: Job,
    outcome: Option<JobOutcome>,
    completed_at: Option<f64>,
    restarts: u32,
}

struct Engine<'a> {
    scenario: &'a Scenario,
    opts: RankOptions,
    clock: f64,
    next_seq: u64,
    next_token: u64,
    heap: BinaryHeap<SimEvent>,
    nodes: Vec<NodeRt<'a>>,
    jobs: Vec<JobRt>,
    queue: VecDeque<(usize, usize)>,
    unresolved: usize,
    total_task_failures: u64,
    event_count: u64,
    trace: Option<Trace>,
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario, traced: bool) -> Result<Self, SimError> {
        let violations = validate_scenario(scenario);
        if !violations.is_empty() {
            return Err(SimError::Invalid(violations));
        }

        let mut order: Vec<&GridNode> = scenario.nodes.iter().collect();
        order.sort_by_key(|n| n.id);
        let nodes: Vec<NodeRt<'a>> = order
            .into_iter()
            .map(|node| NodeRt {
                node,
                life: (node.failure.lambda > 0.0)
                    .then(|| NodeLifecycle::new(node.id, node.failure, scenario.seed, 0.0)),
                up: true,
                up_since: 0.0,
                up_time: 0.0,
                busy_time: 0.0,
                running: None,
                stats: NodeStats::new(node.id),
                predicted_availability: steady_state_availability(&node.failure),
            })
            .collect();

        let all: Vec<&GridNode> = nodes.iter().map(|n| n.node).collect();
        let predicted: Vec<f64> = nodes.iter().map(|n| n.predicted_availability).collect();
        for job in &scenario.jobs {
            if filter_by_qos(&all, &job.qos, &predicted).is_empty() {
                return Err(SimError::EmptyNodeSet { job_id: job.id });
            }
        }

        let jobs: Vec<JobRt> = scenario
            .jobs
            .iter()
            .map(|job| {
                let mut job = job.clone();
                for task in &mut job.tasks {
                    task.job_id = job.id;
                    task.state = TaskState::Pending;
                    task.attempts = 0;
                }
                JobRt {
                    job,
                    outcome: None,
                    completed_at: None,
                    restarts: 0,
                }
            })
            .collect();

        let mut engine = Engine {
            scenario,
            opts: RankOptions {
                epsilon: scenario.options.epsilon,
                mode: scenario.options.success_rate_mode,
            },
            clock: 0.0,
            next_seq: 0,
            next_token: 0,
            heap: BinaryHeap::new(),
            unresolved: jobs.len(),
            nodes,
            jobs,
            queue: VecDeque::new(),
            total_task_failures: 0,
            event_count: 0,
            trace: traced.then(Trace::default),
        };
        for i in 0..engine.nodes.len() {
            if let Some(t) = engine.nodes[i].life.as_ref().map(|l| l.next_transition_time()) {
                engine.schedule(t, Payload::NodeFail { node: i });
            }
        }
        for j in 0..engine.jobs.len() {
            let at = engine.jobs[j].job.arrival;
            engine.schedule(at, Payload::JobArrival { job: j });
        }
        Ok(engine)
    }

    fn schedule(&mut self, time: f64, payload: Payload) {
        debug_assert!(time >= self.clock, "event scheduled in the past");
        if !time.is_finite() {
            return;
        }
        self.heap.push(SimEvent {
            time,
            sequence: self.next_seq,
            payload,
        });
        self.next_seq += 1;
    }

    fn log(&mut self, kind: EventKind, node: Option<usize>, task: Option<(usize, usize)>) {
        if let Some(trace) = self.trace.as_mut() {
            trace.events.push(TraceEvent {
                time: self.clock,
                kind,
                node_id: node.map(|n| self.nodes[n].node.id),
                job_id: task.map(|(j, _)| self.jobs[j].job.id),
                task_id: task
                    .filter(|_| kind != EventKind::JobArrival)
                    .map(|(j, t)| self.jobs[j].job.tasks[t].id),
            });
        }
    }

    fn execute(mut self) -> (Metrics, Option<Trace>) {
        let horizon = self.scenario.horizon;
        while self.unresolved > 0 {
            let Some(event) = self.heap.pop() else {
                break;
            };
            if event.time > horizon {
                self.clock = horizon;
                break;
            }
            self.clock = event.time;
            let processed = match event.payload {
                Payload::JobArrival { job } => self.on_job_arrival(job),
                Payload::TaskComplete { node, token } => self.on_task_complete(node, token),
                Payload::NodeFail { node } => self.on_node_fail(node),
                Payload::NodeRepair { node } => self.on_node_repair(node),
            };
            if processed {
                self.event_count += 1;
            }
        }
        self.finish()
    }

    fn on_job_arrival(&mut self, j: usize) -> bool {
        self.log(EventKind::JobArrival, None, Some((j, 0)));
        for t in 0..self.jobs[j].job.tasks.len() {
            self.queue.push_back((j, t));
        }
        self.try_dispatch();
        true
    }

    fn on_task_complete(&mut self, n: usize, token: u64) -> bool {
        let Some(run) = self.nodes[n].running.filter(|r| r.token == token) else {
            // the task was killed or aborted after this event was scheduled
            return false;
        };
        self.log(EventKind::TaskComplete, Some(n), Some((run.job, run.task)));
        self.release(n, run);
        self.nodes[n].stats = record_attempt(self.nodes[n].stats, AttemptOutcome::Success);
        let job = &mut self.jobs[run.job];
        job.job.tasks[run.task]
            .transition(TaskState::Completed)
            .expect("running task completes");
        if job.job.is_completed() {
            job.outcome = Some(JobOutcome::Completed);
            job.completed_at = Some(self.clock);
            self.unresolved -= 1;
        }
        self.try_dispatch();
        true
    }

    fn on_node_fail(&mut self, n: usize) -> bool {
        let life = self.nodes[n].life.as_mut().expect("only failing nodes fail");
        let transition = life.advance();
        debug_assert!(!transition.up);
        let repair_at = life.next_transition_time();
        let node = &mut self.nodes[n];
        node.up = false;
        node.up_time += self.clock - node.up_since;
        let killed = node.running;
        self.log(EventKind::NodeFail, Some(n), killed.map(|r| (r.job, r.task)));
        self.schedule(repair_at, Payload::NodeRepair { node: n });

        if let Some(run) = killed {
            self.release(n, run);
            self.nodes[n].stats = record_attempt(self.nodes[n].stats, AttemptOutcome::Failure);
            self.total_task_failures += 1;
            self.jobs[run.job].job.tasks[run.task]
                .transition(TaskState::Failed)
                .expect("running task fails");
            self.handle_task_failure(run.job, run.task);
        }
        self.try_dispatch();
        true
    }

    fn on_node_repair(&mut self, n: usize) -> bool {
        let life = self.nodes[n].life.as_mut().expect("only failing nodes are repaired");
        let transition = life.advance();
        debug_assert!(transition.up);
        let fail_at = life.next_transition_time();
        let node = &mut self.nodes[n];
        node.up = true;
        node.up_since = self.clock;
        self.log(EventKind::NodeRepair, Some(n), None);
        self.schedule(fail_at, Payload::NodeFail { node: n });
        self.try_dispatch();
        true
    }

    fn handle_task_failure(&mut self, j: usize, t: usize) {
        let max_retries = self.jobs[j].job.qos.max_retries;
        match self.jobs[j].job.app_model {
            AppModel::MasterWorker => {
                let task = &mut self.jobs[j].job.tasks[t];
                if task.attempts <= max_retries {
                    task.transition(TaskState::Pending).expect("failed task retries");
                    self.queue.push_back((j, t));
                } else {
                    self.give_up(j);
                }
            }
            AppModel::Spmd => {
                if self.jobs[j].restarts < max_retries {
                    self.jobs[j].restarts += 1;
                    self.abort_job_tasks(j);
                    let job = &mut self.jobs[j].job;
                    for task in &mut job.tasks {
                        task.state = TaskState::Pending;
                    }
                    for t in 0..job.tasks.len() {
                        self.queue.push_back((j, t));
                    }
                } else {
                    self.give_up(j);
                }
            }
        }
    }

    fn give_up(&mut self, j: usize) {
        self.abort_job_tasks(j);
        self.jobs[j].outcome = Some(JobOutcome::RetriesExhausted);
        self.unresolved -= 1;
    }

    /// Stops every running task of job `j` and drops its queued tasks. An
    /// aborted task is not the node's fault and leaves its stats untouched.
    fn abort_job_tasks(&mut self, j: usize) {
        self.queue.retain(|(qj, _)| *qj != j);
        for n in 0..self.nodes.len() {
            if let Some(run) = self.nodes[n].running.filter(|r| r.job == j) {
                self.release(n, run);
            }
        }
    }

    fn release(&mut self, n: usize, run: Running) {
        let node = &mut self.nodes[n];
        node.busy_time += self.clock - run.started;
        node.running = None;
    }

    fn try_dispatch(&mut self) {
        let mut i = 0;
        while i < self.queue.len() {
            let free: Vec<usize> = (0..self.nodes.len())
                .filter(|&n| self.nodes[n].up && self.nodes[n].running.is_none())
                .collect();
            if free.is_empty() {
                return;
            }
            let (j, t) = self.queue[i];
            let candidates: Vec<Candidate<'_>> = free
                .iter()
                .map(|&n| Candidate::new(self.nodes[n].node, self.nodes[n].stats))
                .collect();
            let predicted: Vec<f64> = free
                .iter()
                .map(|&n| self.nodes[n].predicted_availability)
                .collect();
            let job = &self.jobs[j].job;
            let chosen = dispatch(
                &job.tasks[t],
                &candidates,
                self.scenario.policy,
                &job.qos,
                &predicted,
                self.opts,
            );
            match chosen {
                Ok(id) => {
                    let n = free
                        .into_iter()
                        .find(|&n| self.nodes[n].node.id == id)
                        .expect("chosen node is free");
                    self.queue.remove(i);
                    self.start(n, j, t);
                }
                Err(PolicyError::EmptyNodeSet) => i += 1,
            }
        }
    }

    fn start(&mut self, n: usize, j: usize, t: usize) {
        let task = &mut self.jobs[j].job.tasks[t];
        task.transition(TaskState::Running).expect("pending task starts");
        let duration = estimated_exec_time(task, self.nodes[n].node);
        let token = self.next_token;
        self.next_token += 1;
        self.nodes[n].running = Some(Running {
            job: j,
            task: t,
            token,
            started: self.clock,
        });
        self.schedule(self.clock + duration, Payload::TaskComplete { node: n, token });

        if let Some(trace) = self.trace.as_mut() {
            let task = &self.jobs[j].job.tasks[t];
            trace.dispatches.push(DispatchRecord {
                time: self.clock,
                node_id: self.nodes[n].node.id,
                job_id: self.jobs[j].job.id,
                task_id: task.id,
                attempt: task.attempts,
                success_rates: self
                    .nodes
                    .iter()
                    .map(|x| (x.node.id, success_rate(&x.stats, self.opts.mode)))
                    .collect(),
            });
        }
    }

    fn finish(mut self) -> (Metrics, Option<Trace>) {
        let end = self.clock;
        for n in 0..self.nodes.len() {
            if let Some(run) = self.nodes[n].running {
                self.release(n, run);
            }
            let node = &mut self.nodes[n];
            if node.up {
                node.up_time += end - node.up_since;
                node.up_since = end;
            }
        }

        let jobs: Vec<JobMetrics> = self
            .jobs
            .iter()
            .map(|rt| {
                let outcome = rt.outcome.unwrap_or(JobOutcome::HorizonExhausted);
                let makespan = rt.completed_at.map(|c| c - rt.job.arrival);
                JobMetrics {
                    job_id: rt.job.id,
                    arrival: rt.job.arrival,
                    outcome,
                    makespan,
                    deadline_met: rt
                        .job
                        .qos
                        .deadline
                        .map(|d| makespan.is_some_and(|m| m <= d)),
                    restarts: rt.restarts,
                    max_task_attempts: rt.job.tasks.iter().map(|t| t.attempts).max().unwrap_or(0),
                }
            })
            .collect();
        let makespans: Vec<f64> = jobs.iter().filter_map(|j| j.makespan).collect();
        let mean_job_makespan =
            (!makespans.is_empty()).then(|| makespans.iter().sum::<f64>() / makespans.len() as f64);

        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeMetrics {
                node_id: n.node.id,
                attempts: n.stats.attempts,
                successes: n.stats.successes,
                failures: n.stats.failures(),
                busy_time: n.busy_time,
                up_time: n.up_time,
                observed_availability: if end > 0.0 {
                    (n.up_time / end).clamp(0.0, 1.0)
                } else {
                    1.0
                },
            })
            .collect();

        let metrics = Metrics {
            jobs,
            mean_job_makespan,
            total_task_failures: self.total_task_failures,
            nodes,
            event_count: self.event_count,
            end_time: end,
        };
        (metrics, self.trace)
    }
}

/// Node stats reconstructed from an event log: every `TaskComplete` is a
/// success and every `NodeFail` that names a task is a failure.
pub fn stats_from_trace(trace: &Trace, node_ids: &[NodeId]) -> BTreeMap<NodeId, NodeStats> {
    let mut out: BTreeMap<NodeId, NodeStats> =
        node_ids.iter().map(|&id| (id, NodeStats::new(id))).collect();
    for e in &trace.events {
        let outcome = match (e.kind, e.task_id) {
            (EventKind::TaskComplete, Some(_)) => AttemptOutcome::Success,
            (EventKind::NodeFail, Some(_)) => AttemptOutcome::Failure,
            _ => continue,
        };
        if let Some(node) = e.node_id {
            let entry = out.entry(node).or_insert_with(|| NodeStats::new(node));
            *entry = record_attempt(*entry, outcome);
        }
    }
    out
}

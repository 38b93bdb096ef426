//! Deterministic discrete-event execution of a topology under the
//! batch/checkpoint/replica protocol.
//!
//! Sources emit one synthetic batch per batch interval; a task starts a
//! batch only once it holds batch-over punctuations from every upstream
//! neighbor. Checkpoints snapshot state periodically and trim replay
//! buffers; actively replicated tasks recover by flushing the replica's
//! output buffer (downstream drops the duplicates by sequence number),
//! passively replicated tasks restore their latest checkpoint and replay
//! upstream buffers, waiting for failed upstream neighbors to catch up
//! first. With tentative mode on, a recovery manager fabricates batch-over
//! punctuations for failed tasks from the moment the failure is detected
//! until each task has recovered, so the sinks keep producing (degraded)
//! output.
//!
//! All state lives in one single-threaded event loop over integer
//! microsecond timestamps; identical inputs give identical traces.

mod engine;
mod metrics;

pub use metrics::{measure_completeness, recovery_latency_summary, LatencyStats, SimSummary};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::planner::ReplicationPlan;
use crate::topology::{TaskGraph, TaskId, UnknownTask};

/// Simulation parameters, all in logical time units.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub batch_interval_ms: u64,
    pub checkpoint_interval_ms: u64,
    pub replica_sync_interval_ms: u64,
    pub failure_detection_delay_ms: u64,
    pub per_tuple_cost_us: u64,
    pub network_delay_ms: u64,
    /// Checkpoint restore cost per state unit (one unit = one windowed tuple).
    pub restore_cost_ms_per_unit: f64,
    pub replay_bandwidth_tuples_per_ms: f64,
    pub run_length_ms: u64,
    pub seed: u64,
    pub tentative_mode: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            batch_interval_ms: 1_000,
            checkpoint_interval_ms: 10_000,
            replica_sync_interval_ms: 1_000,
            failure_detection_delay_ms: 5_000,
            per_tuple_cost_us: 10,
            network_delay_ms: 5,
            restore_cost_ms_per_unit: 0.05,
            replay_bandwidth_tuples_per_ms: 50.0,
            run_length_ms: 120_000,
            seed: 0,
            tentative_mode: false,
        }
    }
}

impl SimConfig {
    fn check(&self) -> Result<(), SimError> {
        if self.batch_interval_ms == 0
            || self.checkpoint_interval_ms == 0
            || self.replica_sync_interval_ms == 0
            || self.run_length_ms == 0
        {
            return Err(SimError::InvalidConfig("intervals must be positive".into()));
        }
        if self.batch_interval_ms > self.checkpoint_interval_ms {
            return Err(SimError::InvalidConfig(
                "batch interval must not exceed the checkpoint interval".into(),
            ));
        }
        if !(self.replay_bandwidth_tuples_per_ms > 0.0) {
            return Err(SimError::InvalidConfig(
                "replay bandwidth must be positive".into(),
            ));
        }
        if !(self.restore_cost_ms_per_unit >= 0.0) {
            return Err(SimError::InvalidConfig(
                "restore cost must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A correlated failure: the given tasks all die at `fail_time_ms`.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureSpec {
    pub fail_time_ms: u64,
    pub failed_tasks: BTreeSet<TaskId>,
}

impl FailureSpec {
    pub fn single(fail_time_ms: u64, task: TaskId) -> Self {
        Self {
            fail_time_ms,
            failed_tasks: BTreeSet::from([task]),
        }
    }

    /// The worst case for a plan: all unreplicated tasks fail together.
    pub fn worst_case(tg: &TaskGraph, plan: &BTreeSet<TaskId>, fail_time_ms: u64) -> Self {
        Self {
            fail_time_ms,
            failed_tasks: tg
                .tasks()
                .iter()
                .map(|t| t.id.clone())
                .filter(|id| !plan.contains(id))
                .collect(),
        }
    }
}

/// Per-input-substream progress: latest processed sequence number, keyed by
/// the substream's ordinal among the task's inputs. Components never
/// decrease over a task's lifetime.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProgressVector(pub BTreeMap<usize, u64>);

impl ProgressVector {
    /// True when every component is at least as large as in `other`.
    pub fn dominates(&self, other: &ProgressVector) -> bool {
        other
            .0
            .iter()
            .all(|(k, v)| self.0.get(k).is_some_and(|mine| mine >= v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMechanism {
    Active,
    Passive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRecord {
    pub mechanism: RecoveryMechanism,
    /// Interval between failure detection and the instant the task's
    /// progress vector dominates its pre-failure vector.
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    SourceBatch,
    BatchProcessed,
    CheckpointTaken,
    ReplicaSynced,
    TaskFailed,
    FailureDetected,
    ReplicaTakeover,
    TaskRecovered,
    FabricatedPunct,
    DuplicateDropped,
    LateDropped,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::SourceBatch => "source_batch",
            EventKind::BatchProcessed => "batch_processed",
            EventKind::CheckpointTaken => "checkpoint_taken",
            EventKind::ReplicaSynced => "replica_synced",
            EventKind::TaskFailed => "task_failed",
            EventKind::FailureDetected => "failure_detected",
            EventKind::ReplicaTakeover => "replica_takeover",
            EventKind::TaskRecovered => "task_recovered",
            EventKind::FabricatedPunct => "fabricated_punct",
            EventKind::DuplicateDropped => "duplicate_dropped",
            EventKind::LateDropped => "late_dropped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub time_ms: f64,
    pub kind: EventKind,
    pub task: Option<TaskId>,
    pub detail: String,
}

/// Full result of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub config: SimConfig,
    pub fail_time_ms: Option<u64>,
    pub detect_time_ms: Option<u64>,
    pub events: Vec<TraceEvent>,
    /// Fraction of the no-failure output mass each fully processed batch
    /// delivered at the sink.
    pub batch_completeness: BTreeMap<u64, f64>,
    pub recovery: BTreeMap<TaskId, RecoveryRecord>,
    /// Tuples accepted more than once by any downstream task. The dedup
    /// contract keeps this at zero.
    pub duplicate_delivery_count: u64,
    /// Plan fidelity of the replication plan the run was configured with.
    pub predicted_of: f64,
}

impl SimulationTrace {
    /// Trace export: `time_ms,event,task,detail` rows.
    pub fn events_csv(&self) -> String {
        let mut out = String::from("time_ms,event,task,detail\n");
        for e in &self.events {
            let task = e.task.as_ref().map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{:.3},{},{},{}\n",
                e.time_ms,
                e.kind.as_str(),
                task,
                e.detail
            ));
        }
        out
    }

    /// Completeness export: `batch_id,completeness` rows.
    pub fn completeness_csv(&self) -> String {
        let mut out = String::from("batch_id,completeness\n");
        for (batch, c) in &self.batch_completeness {
            out.push_str(&format!("{batch},{c:.9}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("failure at {fail_time_ms} ms is outside the run of {run_length_ms} ms")]
    FailureOutOfRange {
        fail_time_ms: u64,
        run_length_ms: u64,
    },
    #[error(transparent)]
    UnknownTask(#[from] UnknownTask),
    #[error("window {0}..={1} selects no completed batches")]
    EmptyWindow(u64, u64),
    #[error("trace contains no failure")]
    NoFailure,
}

/// Runs the simulation. Deterministic for identical inputs.
pub fn run(
    tg: &TaskGraph,
    plan: &ReplicationPlan,
    config: &SimConfig,
    failure: &FailureSpec,
) -> Result<SimulationTrace, SimError> {
    config.check()?;
    if failure.fail_time_ms >= config.run_length_ms {
        return Err(SimError::FailureOutOfRange {
            fail_time_ms: failure.fail_time_ms,
            run_length_ms: config.run_length_ms,
        });
    }
    tg.resolve(&plan.tasks)?;
    tg.resolve(&failure.failed_tasks)?;
    engine::Engine::new(tg, plan, config, failure).run()
}

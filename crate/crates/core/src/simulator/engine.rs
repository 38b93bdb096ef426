//! The event loop behind [`super::run`].
//!
//! Time is tracked in integer microseconds. Events at equal timestamps fire
//! in insertion order, so a run is a pure function of its inputs. Tuples are
//! modeled per batch as an integral count (sequence numbers, costs, replay
//! sizes) plus an exact fractional mass (completeness accounting); counts
//! carry the seeded jitter, mass does not.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{
    EventKind, FailureSpec, ProgressVector, RecoveryMechanism, RecoveryRecord, SimConfig,
    SimError, SimulationTrace, TraceEvent,
};
use crate::fidelity::plan_fidelity;
use crate::planner::ReplicationPlan;
use crate::topology::{InputKind, Role, TaskGraph, TaskId};

const US_PER_MS: u64 = 1_000;

#[derive(Debug)]
enum Ev {
    SourceBatch {
        task: usize,
        batch: u64,
    },
    Data {
        from: usize,
        to: usize,
        batch: u64,
        count: u64,
        mass: f64,
        seq_lo: u64,
        seq_hi: u64,
    },
    Punct {
        from: usize,
        to: usize,
        batch: u64,
        fabricated: bool,
    },
    Emit {
        task: usize,
        batch: u64,
    },
    Checkpoint {
        task: usize,
    },
    ReplicaSync {
        task: usize,
    },
    Fail,
    Detect,
    Takeover {
        task: usize,
    },
    Recovered {
        task: usize,
    },
    FabricateTick,
}

#[derive(Debug, Clone, Default)]
struct StagedInput {
    count: u64,
    mass: f64,
    seq_end: u64,
}

/// Output of one processed batch, computed when processing starts and
/// committed when it finishes.
#[derive(Debug, Clone)]
struct InFlight {
    batch: u64,
    in_count: u64,
    out_count: u64,
    out_mass: f64,
    progress: Vec<(usize, u64)>,
}

#[derive(Debug, Clone)]
struct Delivery {
    to: usize,
    batch: u64,
    count: u64,
    mass: f64,
    seq_lo: u64,
    seq_hi: u64,
}

#[derive(Debug, Default)]
struct TaskState {
    alive: bool,
    planned: bool,
    next_batch: u64,
    in_flight: Option<InFlight>,
    puncts: BTreeMap<u64, BTreeSet<usize>>,
    staged: BTreeMap<u64, BTreeMap<usize, StagedInput>>,
    /// Per-producer accepted sequence watermark (dedup line).
    hwm: BTreeMap<usize, u64>,
    /// Per-producer latest processed sequence end.
    progress: BTreeMap<usize, u64>,
    out_seq: u64,
    cum_emitted: u64,
    synced_emitted: u64,
    /// Deliveries since the last replica sync, replayed on takeover.
    recent_deliveries: Vec<Delivery>,
    /// Input counts per processed batch, for checkpoint-replay accounting.
    inputs_per_batch: BTreeMap<u64, u64>,
    /// (time, input count) of recent batches; the window state.
    state_window: VecDeque<(u64, u64)>,
    cp_progress_batch: u64,
    cp_state_units: u64,
    source_cum_count: u64,
    pre_failure: Option<(BTreeMap<usize, u64>, u64)>,
    fab_next: u64,
}

struct StreamInfo {
    baseline_mass: f64,
    producers: Vec<usize>,
}

#[derive(Debug, Clone)]
struct OutEdge {
    /// (consumer, fraction of the output mass).
    targets: Vec<(usize, f64)>,
}

pub(super) struct Engine<'a> {
    tg: &'a TaskGraph,
    config: &'a SimConfig,
    failure: &'a FailureSpec,
    predicted_of: f64,

    batch_us: u64,
    run_end_us: u64,
    total_batches: u64,

    in_producers: Vec<Vec<usize>>,
    in_streams: Vec<Vec<StreamInfo>>,
    out_edges: Vec<Vec<OutEdge>>,
    source_mass: Vec<f64>,
    baseline_out_mass: Vec<f64>,
    baseline_sink_mass: f64,

    tasks: Vec<TaskState>,
    queue: BinaryHeap<Reverse<(u64, u64, usize)>>,
    payloads: Vec<Ev>,
    rng: ChaCha8Rng,
    now: u64,

    events: Vec<TraceEvent>,
    sink_mass: BTreeMap<u64, f64>,
    sink_done: BTreeMap<u64, usize>,
    recovery: BTreeMap<TaskId, RecoveryRecord>,
    duplicate_delivery_count: u64,
    detect_us: Option<u64>,
}

impl<'a> Engine<'a> {
    pub(super) fn new(
        tg: &'a TaskGraph,
        plan: &'a ReplicationPlan,
        config: &'a SimConfig,
        failure: &'a FailureSpec,
    ) -> Self {
        let n = tg.len();
        let batch_ms = config.batch_interval_ms;

        let mut in_producers = vec![Vec::new(); n];
        let mut in_streams: Vec<Vec<StreamInfo>> = Vec::with_capacity(n);
        for t in 0..n {
            let mut streams = Vec::new();
            let mut producers = BTreeSet::new();
            for stream in tg.inputs(t) {
                let mut baseline = 0.0;
                let mut prods = Vec::new();
                for &si in &stream.substreams {
                    let s = &tg.substreams()[si];
                    baseline += s.rate * batch_ms as f64 / 1_000.0;
                    prods.push(s.from);
                    producers.insert(s.from);
                }
                streams.push(StreamInfo {
                    baseline_mass: baseline,
                    producers: prods,
                });
            }
            in_streams.push(streams);
            in_producers[t] = producers.into_iter().collect();
        }

        let mut out_edges: Vec<Vec<OutEdge>> = vec![Vec::new(); n];
        for t in 0..n {
            let mut per_edge: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
            let out_rate = tg.task(t).output_rate;
            let outs = tg.outputs(t);
            for &si in outs {
                let s = &tg.substreams()[si];
                per_edge.entry(s.edge).or_default().push((s.to, s.rate));
            }
            for (_, mut targets) in per_edge {
                targets.sort_by_key(|&(to, _)| to);
                let total: f64 = targets.iter().map(|(_, r)| r).sum();
                let k = targets.len() as f64;
                let targets = targets
                    .into_iter()
                    .map(|(to, rate)| {
                        let frac = if out_rate > 0.0 && total > 0.0 {
                            rate / total
                        } else {
                            1.0 / k
                        };
                        (to, frac)
                    })
                    .collect();
                out_edges[t].push(OutEdge { targets });
            }
        }

        let source_mass: Vec<f64> = (0..n)
            .map(|t| {
                if tg.task(t).role == Role::Source {
                    tg.task(t).output_rate * batch_ms as f64 / 1_000.0
                } else {
                    0.0
                }
            })
            .collect();
        let baseline_out_mass: Vec<f64> = (0..n)
            .map(|t| tg.task(t).output_rate * batch_ms as f64 / 1_000.0)
            .collect();
        let baseline_sink_mass = tg
            .sink_tasks()
            .iter()
            .map(|&t| baseline_out_mass[t])
            .sum::<f64>();

        let mut tasks: Vec<TaskState> = (0..n)
            .map(|_| TaskState {
                alive: true,
                ..TaskState::default()
            })
            .collect();
        for id in &plan.tasks {
            let idx = tg.index_of(id).expect("checked by run()");
            tasks[idx].planned = true;
        }
        let predicted_of = plan_fidelity(tg, &plan.tasks).expect("checked by run()");

        Self {
            tg,
            config,
            failure,
            predicted_of,
            batch_us: batch_ms * US_PER_MS,
            run_end_us: config.run_length_ms * US_PER_MS,
            total_batches: config.run_length_ms / batch_ms,
            in_producers,
            in_streams,
            out_edges,
            source_mass,
            baseline_out_mass,
            baseline_sink_mass,
            tasks,
            queue: BinaryHeap::new(),
            payloads: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            now: 0,
            events: Vec::new(),
            sink_mass: BTreeMap::new(),
            sink_done: BTreeMap::new(),
            recovery: BTreeMap::new(),
            duplicate_delivery_count: 0,
            detect_us: None,
        }
    }

    fn schedule(&mut self, time: u64, ev: Ev) {
        let id = self.payloads.len();
        self.payloads.push(ev);
        self.queue.push(Reverse((time, id as u64, id)));
    }

    fn trace(&mut self, kind: EventKind, task: Option<usize>, detail: String) {
        self.events.push(TraceEvent {
            time_ms: self.now as f64 / US_PER_MS as f64,
            kind,
            task: task.map(|t| self.tg.task(t).id.clone()),
            detail,
        });
    }

    pub(super) fn run(mut self) -> Result<SimulationTrace, SimError> {
        let n = self.tg.len();

        for t in 0..n {
            if self.tg.task(t).role == Role::Source {
                for batch in 0..self.total_batches {
                    self.schedule((batch + 1) * self.batch_us, Ev::SourceBatch { task: t, batch });
                }
            }
        }
        let cp_us = self.config.checkpoint_interval_ms * US_PER_MS;
        let mut time = cp_us;
        while time <= self.run_end_us {
            for t in 0..n {
                self.schedule(time, Ev::Checkpoint { task: t });
            }
            time += cp_us;
        }
        let sync_us = self.config.replica_sync_interval_ms * US_PER_MS;
        let mut time = sync_us;
        while time <= self.run_end_us {
            for t in 0..n {
                if self.tasks[t].planned {
                    self.schedule(time, Ev::ReplicaSync { task: t });
                }
            }
            time += sync_us;
        }
        self.schedule(self.failure.fail_time_ms * US_PER_MS, Ev::Fail);

        while let Some(Reverse((time, _, id))) = self.queue.pop() {
            if time > self.run_end_us {
                break;
            }
            self.now = time;
            // Payloads are taken by replacing them with a tombstone.
            let ev = std::mem::replace(&mut self.payloads[id], Ev::FabricateTick);
            self.dispatch(ev);
        }

        // Completeness of every batch that all sink tasks processed.
        let mut batch_completeness = BTreeMap::new();
        let sink_count = self.tg.sink_tasks().len();
        if self.baseline_sink_mass > 0.0 {
            for (&batch, &done) in &self.sink_done {
                if done == sink_count {
                    let mass = self.sink_mass.get(&batch).copied().unwrap_or(0.0);
                    batch_completeness.insert(batch, mass / self.baseline_sink_mass);
                }
            }
        }

        Ok(SimulationTrace {
            config: self.config.clone(),
            fail_time_ms: Some(self.failure.fail_time_ms),
            detect_time_ms: self.detect_us.map(|t| t / US_PER_MS),
            events: self.events,
            batch_completeness,
            recovery: self.recovery,
            duplicate_delivery_count: self.duplicate_delivery_count,
            predicted_of: self.predicted_of,
        })
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::SourceBatch { task, batch } => self.on_source_batch(task, batch),
            Ev::Data {
                from,
                to,
                batch,
                count,
                mass,
                seq_lo,
                seq_hi,
            } => self.on_data(from, to, batch, count, mass, seq_lo, seq_hi),
            Ev::Punct {
                from,
                to,
                batch,
                fabricated,
            } => self.on_punct(from, to, batch, fabricated),
            Ev::Emit { task, batch } => self.on_emit(task, batch),
            Ev::Checkpoint { task } => self.on_checkpoint(task),
            Ev::ReplicaSync { task } => self.on_replica_sync(task),
            Ev::Fail => self.on_fail(),
            Ev::Detect => self.on_detect(),
            Ev::Takeover { task } => self.on_recovered(task, RecoveryMechanism::Active),
            Ev::Recovered { task } => self.on_recovered(task, RecoveryMechanism::Passive),
            Ev::FabricateTick => self.on_fabricate_tick(),
        }
    }

    fn on_source_batch(&mut self, task: usize, batch: u64) {
        if !self.tasks[task].alive || self.tasks[task].next_batch != batch {
            return;
        }
        self.emit_source_batch(task, batch);
    }

    fn emit_source_batch(&mut self, task: usize, batch: u64) {
        let mass = self.source_mass[task];
        let exact_cum = mass * (batch + 1) as f64;
        let base = (exact_cum.floor() as u64).saturating_sub(self.tasks[task].source_cum_count);
        let jitter_span = (base / 50).max(1) as i64;
        let jitter = self.rng.gen_range(-jitter_span..=jitter_span);
        let count = (base as i64 + jitter).max(0) as u64;
        self.tasks[task].source_cum_count += base;

        self.tasks[task].inputs_per_batch.insert(batch, count);
        self.tasks[task].state_window.push_back((self.now, count));
        self.prune_state_window(task);
        self.tasks[task].next_batch = batch + 1;
        self.deliver_outputs(task, batch, count, mass);
        self.tasks[task].cum_emitted += count;
        self.trace(
            EventKind::SourceBatch,
            Some(task),
            format!("batch={batch} tuples={count}"),
        );
    }

    /// Splits `count`/`mass` across every outgoing edge and schedules data
    /// plus the batch-over punctuation for each consumer.
    fn deliver_outputs(&mut self, task: usize, batch: u64, count: u64, mass: f64) {
        let arrive = self.now + self.config.network_delay_ms * US_PER_MS;
        let seq_base = self.tasks[task].out_seq;
        self.tasks[task].out_seq = seq_base + count;

        let edges = std::mem::take(&mut self.out_edges[task]);
        for edge in &edges {
            let counts = apportion(count, &edge.targets);
            let mut lo = seq_base;
            for ((to, frac), part) in edge.targets.iter().zip(counts) {
                let hi = lo + part;
                let delivery = Delivery {
                    to: *to,
                    batch,
                    count: part,
                    mass: mass * frac,
                    seq_lo: lo,
                    seq_hi: hi,
                };
                if self.tasks[task].planned {
                    self.tasks[task].recent_deliveries.push(delivery.clone());
                }
                self.schedule(
                    arrive,
                    Ev::Data {
                        from: task,
                        to: *to,
                        batch,
                        count: part,
                        mass: delivery.mass,
                        seq_lo: lo,
                        seq_hi: hi,
                    },
                );
                self.schedule(
                    arrive,
                    Ev::Punct {
                        from: task,
                        to: *to,
                        batch,
                        fabricated: false,
                    },
                );
                lo = hi;
            }
        }
        self.out_edges[task] = edges;
    }

    fn on_data(
        &mut self,
        from: usize,
        to: usize,
        batch: u64,
        count: u64,
        mass: f64,
        seq_lo: u64,
        seq_hi: u64,
    ) {
        let hwm = self.tasks[to].hwm.get(&from).copied().unwrap_or(0);
        if count > 0 && seq_lo < hwm {
            if seq_hi > hwm {
                // Partial overlap would slip duplicates past the watermark.
                self.duplicate_delivery_count += seq_hi - hwm;
            }
            self.trace(
                EventKind::DuplicateDropped,
                Some(to),
                format!("from={} batch={batch} tuples={count}", self.tg.task(from).id),
            );
            return;
        }
        if batch < self.tasks[to].next_batch {
            self.trace(
                EventKind::LateDropped,
                Some(to),
                format!("from={} batch={batch} tuples={count}", self.tg.task(from).id),
            );
            return;
        }
        let slot = self
            .tasks[to]
            .staged
            .entry(batch)
            .or_default()
            .entry(from)
            .or_default();
        if slot.seq_end > 0 || slot.count > 0 || slot.mass > 0.0 {
            self.duplicate_delivery_count += count;
            return;
        }
        *slot = StagedInput {
            count,
            mass,
            seq_end: seq_hi,
        };
        if count > 0 {
            self.tasks[to].hwm.insert(from, seq_hi.max(hwm));
        }
    }

    fn on_punct(&mut self, from: usize, to: usize, batch: u64, fabricated: bool) {
        if fabricated {
            self.trace(
                EventKind::FabricatedPunct,
                Some(to),
                format!("from={} batch={batch}", self.tg.task(from).id),
            );
        }
        self.tasks[to].puncts.entry(batch).or_default().insert(from);
        self.try_start(to);
    }

    /// Starts the next batch if the task is idle, alive, and holds
    /// punctuations from every upstream producer.
    fn try_start(&mut self, task: usize) {
        let st = &self.tasks[task];
        if !st.alive || st.in_flight.is_some() || self.in_producers[task].is_empty() {
            return;
        }
        let batch = st.next_batch;
        if batch >= self.total_batches {
            return;
        }
        let Some(heard) = st.puncts.get(&batch) else {
            return;
        };
        if !self.in_producers[task].iter().all(|p| heard.contains(p)) {
            return;
        }

        // Gather staged inputs and derive the output.
        let node = self.tg.task(task);
        let staged = st.staged.get(&batch);
        let mut in_count = 0u64;
        let mut progress = Vec::new();
        if let Some(staged) = staged {
            for (&producer, input) in staged {
                in_count += input.count;
                if input.seq_end > 0 {
                    progress.push((producer, input.seq_end));
                }
            }
        }
        let mut out_mass = match node.input_kind {
            InputKind::Independent => {
                let total: f64 = staged
                    .map(|s| s.values().map(|i| i.mass).sum())
                    .unwrap_or(0.0);
                node.selectivity * total
            }
            InputKind::Correlated => {
                let mut ratio = 1.0;
                for stream in &self.in_streams[task] {
                    if stream.baseline_mass <= 0.0 {
                        continue;
                    }
                    let actual: f64 = stream
                        .producers
                        .iter()
                        .map(|p| {
                            staged
                                .and_then(|s| s.get(p))
                                .map(|i| i.mass)
                                .unwrap_or(0.0)
                        })
                        .sum();
                    ratio *= actual / stream.baseline_mass;
                }
                ratio * self.baseline_out_mass[task]
            }
        };
        if out_mass < 0.0 {
            out_mass = 0.0;
        }
        let out_count = out_mass.round() as u64;

        let cost_us = in_count * self.config.per_tuple_cost_us;
        self.tasks[task].in_flight = Some(InFlight {
            batch,
            in_count,
            out_count,
            out_mass,
            progress,
        });
        self.schedule(self.now + cost_us, Ev::Emit { task, batch });
    }

    fn on_emit(&mut self, task: usize, batch: u64) {
        if !self.tasks[task].alive {
            return; // the batch died with the task; its output is lost
        }
        let Some(fl) = self.tasks[task].in_flight.take() else {
            return;
        };
        debug_assert_eq!(fl.batch, batch);

        for (producer, seq_end) in &fl.progress {
            let slot = self.tasks[task].progress.entry(*producer).or_insert(0);
            *slot = (*slot).max(*seq_end);
        }
        self.tasks[task].inputs_per_batch.insert(batch, fl.in_count);
        self.tasks[task].state_window.push_back((self.now, fl.in_count));
        self.prune_state_window(task);
        self.tasks[task].staged.remove(&batch);
        self.tasks[task].puncts.remove(&batch);
        self.tasks[task].next_batch = batch + 1;

        if self.tg.task(task).role == Role::Sink {
            *self.sink_mass.entry(batch).or_insert(0.0) += fl.out_mass;
            *self.sink_done.entry(batch).or_insert(0) += 1;
        }
        self.deliver_outputs(task, batch, fl.out_count, fl.out_mass);
        self.tasks[task].cum_emitted += fl.out_count;
        self.trace(
            EventKind::BatchProcessed,
            Some(task),
            format!("batch={batch} in={} out_mass={:.3}", fl.in_count, fl.out_mass),
        );
        self.try_start(task);
    }

    fn prune_state_window(&mut self, task: usize) {
        let horizon = self
            .now
            .saturating_sub(self.config.checkpoint_interval_ms * US_PER_MS);
        while let Some(&(t, _)) = self.tasks[task].state_window.front() {
            if t < horizon {
                self.tasks[task].state_window.pop_front();
            } else {
                break;
            }
        }
    }

    fn on_checkpoint(&mut self, task: usize) {
        if !self.tasks[task].alive {
            return;
        }
        self.prune_state_window(task);
        let state: u64 = self.tasks[task].state_window.iter().map(|&(_, c)| c).sum();
        let progress = self.tasks[task].next_batch;
        self.tasks[task].cp_progress_batch = progress;
        self.tasks[task].cp_state_units = state;
        // Buffer trimming: replay bookkeeping before the checkpointed
        // progress is no longer needed.
        self.tasks[task].inputs_per_batch.retain(|&b, _| b >= progress);
        self.trace(
            EventKind::CheckpointTaken,
            Some(task),
            format!("progress_batch={progress} state_units={state}"),
        );
    }

    fn on_replica_sync(&mut self, task: usize) {
        if !self.tasks[task].alive {
            return;
        }
        self.tasks[task].synced_emitted = self.tasks[task].cum_emitted;
        self.tasks[task].recent_deliveries.clear();
    }

    fn on_fail(&mut self) {
        for id in &self.failure.failed_tasks {
            let idx = self.tg.index_of(id).expect("checked by run()");
            let st = &mut self.tasks[idx];
            st.alive = false;
            st.pre_failure = Some((st.progress.clone(), st.next_batch));
            st.fab_next = st.next_batch;
            self.trace(EventKind::TaskFailed, Some(idx), String::new());
        }
        self.schedule(
            self.now + self.config.failure_detection_delay_ms * US_PER_MS,
            Ev::Detect,
        );
    }

    fn on_detect(&mut self) {
        self.detect_us = Some(self.now);
        self.trace(
            EventKind::FailureDetected,
            None,
            format!("failed={}", self.failure.failed_tasks.len()),
        );

        // Recovery schedule, in topological order so that passive tasks can
        // wait for failed upstream neighbors to catch up first.
        let bw = self.config.replay_bandwidth_tuples_per_ms;
        let mut rec_end: BTreeMap<usize, u64> = BTreeMap::new();
        let order: Vec<usize> = self
            .tg
            .topo_order()
            .iter()
            .copied()
            .filter(|&t| !self.tasks[t].alive)
            .collect();
        for t in order {
            let end = if self.tasks[t].planned {
                let buffered = self.tasks[t].cum_emitted - self.tasks[t].synced_emitted;
                let flush_us = (buffered as f64 / bw * US_PER_MS as f64).ceil() as u64;
                let end = self.now + flush_us;
                self.schedule(end, Ev::Takeover { task: t });
                end
            } else {
                let restore_us = (self.tasks[t].cp_state_units as f64
                    * self.config.restore_cost_ms_per_unit
                    * US_PER_MS as f64)
                    .ceil() as u64;
                let pre_failure_batch = self.tasks[t]
                    .pre_failure
                    .as_ref()
                    .map(|(_, b)| *b)
                    .unwrap_or(0);
                let replay: u64 = self.tasks[t]
                    .inputs_per_batch
                    .range(self.tasks[t].cp_progress_batch..pre_failure_batch)
                    .map(|(_, &c)| c)
                    .sum();
                let replay_us = (replay as f64 / bw * US_PER_MS as f64).ceil() as u64;
                let ready = self.now + restore_us;
                // Synchronization wait: replay cannot finish before failed
                // upstream neighbors have caught up.
                let upstream_wait = self.in_producers[t]
                    .iter()
                    .filter_map(|p| rec_end.get(p).copied())
                    .max()
                    .unwrap_or(0);
                let end = ready.max(upstream_wait) + replay_us;
                self.schedule(end, Ev::Recovered { task: t });
                end
            };
            rec_end.insert(t, end);
        }

        if self.config.tentative_mode {
            self.schedule(self.now, Ev::FabricateTick);
        }
    }

    fn on_recovered(&mut self, task: usize, mechanism: RecoveryMechanism) {
        let detect = self.detect_us.expect("recovery follows detection");
        let latency_ms = (self.now - detect) as f64 / US_PER_MS as f64;
        let (pre_progress, pre_batch) = self.tasks[task]
            .pre_failure
            .take()
            .expect("recovered task must have failed");
        // The restored task is back at exactly its pre-failure progress.
        debug_assert!(ProgressVector(self.tasks[task].progress.clone())
            .dominates(&ProgressVector(pre_progress)));
        debug_assert_eq!(self.tasks[task].next_batch, pre_batch);

        self.tasks[task].alive = true;
        self.tasks[task].in_flight = None;
        let kind = match mechanism {
            RecoveryMechanism::Active => EventKind::ReplicaTakeover,
            RecoveryMechanism::Passive => EventKind::TaskRecovered,
        };
        self.trace(kind, Some(task), format!("latency_ms={latency_ms:.3}"));
        self.recovery.insert(
            self.tg.task(task).id.clone(),
            RecoveryRecord {
                mechanism,
                latency_ms,
            },
        );

        if matches!(mechanism, RecoveryMechanism::Active) {
            // The replica re-sends everything after the last sync point;
            // downstream recognizes the sequence numbers and drops it all.
            let resend = self.tasks[task].recent_deliveries.clone();
            let arrive = self.now + self.config.network_delay_ms * US_PER_MS;
            for d in resend {
                self.schedule(
                    arrive,
                    Ev::Data {
                        from: task,
                        to: d.to,
                        batch: d.batch,
                        count: d.count,
                        mass: d.mass,
                        seq_lo: d.seq_lo,
                        seq_hi: d.seq_hi,
                    },
                );
            }
        }

        if self.tg.task(task).role == Role::Source {
            // Re-emit the batches missed while down, then fall back into the
            // pre-scheduled cadence.
            let caught_up = self.now / self.batch_us;
            let upto = caught_up.min(self.total_batches);
            for batch in pre_batch..upto {
                self.emit_source_batch(task, batch);
            }
        } else {
            self.try_start(task);
        }
    }

    fn on_fabricate_tick(&mut self) {
        let mut any_dead = false;
        let current = self.now / self.batch_us;
        for idx in 0..self.tasks.len() {
            if self.tasks[idx].alive || self.tasks[idx].pre_failure.is_none() {
                continue;
            }
            if self.tasks[idx].planned {
                // Actively replicated tasks come back almost immediately;
                // downstream waits for their real output instead.
                continue;
            }
            any_dead = true;
            let upto = current.min(self.total_batches);
            let consumers: BTreeSet<usize> = self
                .out_edges[idx]
                .iter()
                .flat_map(|e| e.targets.iter().map(|&(to, _)| to))
                .collect();
            for batch in self.tasks[idx].fab_next..upto {
                for &to in &consumers {
                    self.schedule(
                        self.now,
                        Ev::Punct {
                            from: idx,
                            to,
                            batch,
                            fabricated: true,
                        },
                    );
                }
            }
            self.tasks[idx].fab_next = self.tasks[idx].fab_next.max(upto);
        }
        if any_dead {
            self.schedule(self.now + self.batch_us, Ev::FabricateTick);
        }
    }
}

/// Largest-remainder apportionment of `count` across weighted targets.
fn apportion(count: u64, targets: &[(usize, f64)]) -> Vec<u64> {
    let mut out = vec![0u64; targets.len()];
    let mut rests: Vec<(f64, usize)> = Vec::with_capacity(targets.len());
    let mut assigned = 0u64;
    for (i, (_, frac)) in targets.iter().enumerate() {
        let exact = count as f64 * frac;
        let base = exact.floor() as u64;
        out[i] = base;
        assigned += base;
        rests.push((exact - base as f64, i));
    }
    let mut leftover = count.saturating_sub(assigned);
    rests.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, i) in rests {
        if leftover == 0 {
            break;
        }
        out[i] += 1;
        leftover -= 1;
    }
    out
}

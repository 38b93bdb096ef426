//! Task-level materialization of a topology.
//!
//! Every operator is expanded into its parallel tasks and each edge into
//! concrete task-to-task substreams with rates. Rates are derived in
//! topological order: a source task's output rate is its configured rate,
//! any other task's output rate is `selectivity * sum(incoming substream
//! rates)`. Within one edge, a task's output rate is divided across its
//! fan-out uniformly unless the edge carries explicit weights.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;

use thiserror::Error;

use super::{InputKind, Pattern, Role, TaskId, Topology};

/// One parallel task together with the operator attributes it inherits.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    pub id: TaskId,
    /// Ordinal of the owning operator in the source topology.
    pub op: usize,
    pub role: Role,
    pub input_kind: InputKind,
    pub selectivity: f64,
    pub output_rate: f64,
}

/// A task-to-task flow carrying `rate` tuples per logical second.
#[derive(Debug, Clone, PartialEq)]
pub struct Substream {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
    /// Ordinal of the operator edge this substream belongs to. Substreams
    /// sharing an edge form one input stream of the consuming task.
    pub edge: usize,
}

/// The substreams a task receives from one upstream operator edge.
#[derive(Debug, Clone, PartialEq)]
pub struct InputStream {
    pub edge: usize,
    /// Indices into [`TaskGraph::substreams`], ordered by upstream task index.
    pub substreams: Vec<usize>,
}

/// Materialized task graph. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    tasks: Vec<TaskNode>,
    substreams: Vec<Substream>,
    inputs: Vec<Vec<InputStream>>,
    outputs: Vec<Vec<usize>>,
    topo_order: Vec<usize>,
    sink_tasks: Vec<usize>,
    by_id: BTreeMap<TaskId, usize>,
    /// Pattern and operator endpoints per edge ordinal. Edge ordinals are
    /// preserved by [`TaskGraph::restrict`], so this table may describe edges
    /// with no remaining substreams.
    edge_meta: Vec<EdgeMeta>,
}

/// Operator-level description of one edge ordinal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMeta {
    pub from_op: String,
    pub to_op: String,
    pub pattern: Pattern,
}

#[derive(Debug, Clone, Error)]
#[error("unknown task {0}")]
pub struct UnknownTask(pub TaskId);

impl TaskGraph {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[TaskNode] {
        &self.tasks
    }

    pub fn task(&self, idx: usize) -> &TaskNode {
        &self.tasks[idx]
    }

    pub fn substreams(&self) -> &[Substream] {
        &self.substreams
    }

    pub fn index_of(&self, id: &TaskId) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Input streams of a task, one per incoming operator edge.
    pub fn inputs(&self, task: usize) -> &[InputStream] {
        &self.inputs[task]
    }

    /// Indices of all substreams leaving a task.
    pub fn outputs(&self, task: usize) -> &[usize] {
        &self.outputs[task]
    }

    /// Tasks ordered so that producers precede consumers.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Tasks with no outgoing substreams. On a validated full topology these
    /// are exactly the sink operator's tasks; on a restricted graph they are
    /// the local outputs.
    pub fn sink_tasks(&self) -> &[usize] {
        &self.sink_tasks
    }

    /// Maps task ids to internal indices, failing on the first unknown id.
    pub fn resolve(&self, ids: &BTreeSet<TaskId>) -> Result<Vec<usize>, UnknownTask> {
        ids.iter()
            .map(|id| self.index_of(id).ok_or_else(|| UnknownTask(id.clone())))
            .collect()
    }

    /// Operator-level metadata of an edge ordinal.
    pub fn edge_meta(&self, edge: usize) -> &EdgeMeta {
        &self.edge_meta[edge]
    }

    /// Edge ordinals that still carry at least one substream in this graph.
    pub fn active_edges(&self) -> BTreeSet<usize> {
        self.substreams.iter().map(|s| s.edge).collect()
    }

    /// Distinct operator ids present in this graph, in task order.
    pub fn operator_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in &self.tasks {
            if seen.insert(t.id.operator.clone()) {
                out.push(t.id.operator.clone());
            }
        }
        out
    }

    /// Restriction to the tasks of the given operators.
    ///
    /// Substreams crossing the boundary are dropped. A task left without any
    /// input stream becomes a local source (it keeps its original output
    /// rate); tasks without remaining outputs become local sinks.
    pub fn restrict(&self, operators: &BTreeSet<String>) -> TaskGraph {
        let keep: Vec<usize> = (0..self.tasks.len())
            .filter(|&i| operators.contains(&self.tasks[i].id.operator))
            .collect();
        let mut remap = vec![usize::MAX; self.tasks.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }

        let mut tasks: Vec<TaskNode> = keep.iter().map(|&i| self.tasks[i].clone()).collect();
        let mut substreams = Vec::new();
        for s in &self.substreams {
            if remap[s.from] != usize::MAX && remap[s.to] != usize::MAX {
                substreams.push(Substream {
                    from: remap[s.from],
                    to: remap[s.to],
                    rate: s.rate,
                    edge: s.edge,
                });
            }
        }

        let inputs = group_inputs(tasks.len(), &substreams);
        for (i, task) in tasks.iter_mut().enumerate() {
            if inputs[i].is_empty() {
                task.role = Role::Source;
                task.input_kind = InputKind::Independent;
            } else if task.role == Role::Source {
                // cannot happen: sources never have inputs
            }
        }

        let outputs = group_outputs(tasks.len(), &substreams);
        let topo_order: Vec<usize> = self
            .topo_order
            .iter()
            .filter(|&&i| remap[i] != usize::MAX)
            .map(|&i| remap[i])
            .collect();
        let sink_tasks: Vec<usize> = (0..tasks.len())
            .filter(|&i| outputs[i].is_empty())
            .collect();
        let by_id = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();

        TaskGraph {
            tasks,
            substreams,
            inputs,
            outputs,
            topo_order,
            sink_tasks,
            by_id,
            edge_meta: self.edge_meta.clone(),
        }
    }
}

/// Builds the task graph of a topology already known to be valid.
pub(super) fn build(topology: &Topology) -> TaskGraph {
    let n_ops = topology.operators.len();

    // Task index space: operators in declaration order, tasks by index.
    let mut first_task = vec![0usize; n_ops];
    let mut tasks = Vec::new();
    for (oi, op) in topology.operators.iter().enumerate() {
        first_task[oi] = tasks.len();
        for k in 0..op.parallelism {
            tasks.push(TaskNode {
                id: TaskId::new(op.id.clone(), k),
                op: oi,
                role: op.role,
                input_kind: op.input_kind,
                selectivity: op.selectivity,
                output_rate: 0.0,
            });
        }
    }

    let op_index: BTreeMap<&str, usize> = topology
        .operators
        .iter()
        .enumerate()
        .map(|(i, o)| (o.id.as_str(), i))
        .collect();

    // Per-edge wiring: for each upstream task, its downstream targets and
    // rate fractions.
    struct Wiring {
        from_op: usize,
        to_op: usize,
        // per upstream task: (downstream local indices, fraction of the
        // upstream task's output sent to each)
        fanout: Vec<(Vec<usize>, Vec<f64>)>,
    }

    let mut wirings = Vec::with_capacity(topology.edges.len());
    for edge in &topology.edges {
        let f = op_index[edge.from.as_str()];
        let t = op_index[edge.to.as_str()];
        let n1 = topology.operators[f].parallelism;
        let n2 = topology.operators[t].parallelism;
        let fanout = match &edge.connections {
            Some(conns) => {
                let mut per_up = vec![(Vec::new(), Vec::new()); n1];
                for c in conns {
                    let fractions = match &c.weights {
                        Some(w) => {
                            let total: f64 = w.iter().sum();
                            w.iter().map(|x| x / total).collect()
                        }
                        None => vec![1.0 / c.down.len() as f64; c.down.len()],
                    };
                    per_up[c.up] = (c.down.clone(), fractions);
                }
                per_up
            }
            None => default_fanout(edge.pattern, n1, n2),
        };
        wirings.push(Wiring {
            from_op: f,
            to_op: t,
            fanout,
        });
    }

    // Incoming edges per operator, in edge-ordinal order.
    let mut in_edges: Vec<Vec<usize>> = vec![Vec::new(); n_ops];
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n_ops];
    for (ei, w) in wirings.iter().enumerate() {
        in_edges[w.to_op].push(ei);
        out_edges[w.from_op].push(ei);
    }

    // Operator-level topological order (deterministic: smallest ordinal first).
    let mut in_deg: Vec<usize> = (0..n_ops).map(|o| in_edges[o].len()).collect();
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n_ops)
        .filter(|&o| in_deg[o] == 0)
        .map(Reverse)
        .collect();
    let mut op_order = Vec::with_capacity(n_ops);
    while let Some(Reverse(o)) = heap.pop() {
        op_order.push(o);
        for &ei in &out_edges[o] {
            let t = wirings[ei].to_op;
            in_deg[t] -= 1;
            if in_deg[t] == 0 {
                heap.push(Reverse(t));
            }
        }
    }

    // Output rates in topological order.
    for &oi in &op_order {
        let op = &topology.operators[oi];
        for k in 0..op.parallelism {
            let ti = first_task[oi] + k;
            let rate = if op.role == Role::Source {
                topology.source_rates[&tasks[ti].id]
            } else {
                let mut input_sum = 0.0;
                for &ei in &in_edges[oi] {
                    let w = &wirings[ei];
                    let up_first = first_task[w.from_op];
                    for (u, (downs, fracs)) in w.fanout.iter().enumerate() {
                        for (d, frac) in downs.iter().zip(fracs) {
                            if *d == k {
                                input_sum += tasks[up_first + u].output_rate * frac;
                            }
                        }
                    }
                }
                op.selectivity * input_sum
            };
            tasks[ti].output_rate = rate;
        }
    }

    // Substreams in canonical order: edge ordinal, upstream index, fan-out
    // position.
    let mut substreams = Vec::new();
    for (ei, w) in wirings.iter().enumerate() {
        let up_first = first_task[w.from_op];
        let down_first = first_task[w.to_op];
        for (u, (downs, fracs)) in w.fanout.iter().enumerate() {
            for (d, frac) in downs.iter().zip(fracs) {
                substreams.push(Substream {
                    from: up_first + u,
                    to: down_first + d,
                    rate: tasks[up_first + u].output_rate * frac,
                    edge: ei,
                });
            }
        }
    }

    let inputs = group_inputs(tasks.len(), &substreams);
    let outputs = group_outputs(tasks.len(), &substreams);
    let sink_tasks: Vec<usize> = (0..tasks.len())
        .filter(|&i| outputs[i].is_empty())
        .collect();
    let mut topo_order = Vec::with_capacity(tasks.len());
    for &oi in &op_order {
        for k in 0..topology.operators[oi].parallelism {
            topo_order.push(first_task[oi] + k);
        }
    }
    let by_id = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.clone(), i))
        .collect();
    let edge_meta = topology
        .edges
        .iter()
        .map(|e| EdgeMeta {
            from_op: e.from.clone(),
            to_op: e.to.clone(),
            pattern: e.pattern,
        })
        .collect();

    TaskGraph {
        tasks,
        substreams,
        inputs,
        outputs,
        topo_order,
        sink_tasks,
        by_id,
        edge_meta,
    }
}

/// Default deterministic wiring per pattern: one-to-one pairs by index,
/// split/merge use contiguous blocks, full is complete bipartite.
fn default_fanout(pattern: Pattern, n1: usize, n2: usize) -> Vec<(Vec<usize>, Vec<f64>)> {
    match pattern {
        Pattern::OneToOne => (0..n1).map(|i| (vec![i], vec![1.0])).collect(),
        Pattern::Split => {
            let block = n2 / n1;
            (0..n1)
                .map(|i| {
                    let downs: Vec<usize> = (i * block..(i + 1) * block).collect();
                    let frac = vec![1.0 / block as f64; block];
                    (downs, frac)
                })
                .collect()
        }
        Pattern::Merge => {
            let block = n1 / n2;
            (0..n1).map(|i| (vec![i / block], vec![1.0])).collect()
        }
        Pattern::Full => (0..n1)
            .map(|_| ((0..n2).collect(), vec![1.0 / n2 as f64; n2]))
            .collect(),
    }
}

fn group_inputs(n_tasks: usize, substreams: &[Substream]) -> Vec<Vec<InputStream>> {
    let mut per_task: Vec<BTreeMap<usize, Vec<usize>>> = vec![BTreeMap::new(); n_tasks];
    for (si, s) in substreams.iter().enumerate() {
        per_task[s.to].entry(s.edge).or_default().push(si);
    }
    per_task
        .into_iter()
        .map(|streams| {
            streams
                .into_iter()
                .map(|(edge, substreams)| InputStream { edge, substreams })
                .collect()
        })
        .collect()
}

fn group_outputs(n_tasks: usize, substreams: &[Substream]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n_tasks];
    for (si, s) in substreams.iter().enumerate() {
        out[s.from].push(si);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{chain_full, fig2, merge_join};
    use crate::topology::{OperatorSpec, PartitionEdge, Topology};
    use std::collections::BTreeMap;

    fn rates_into(tg: &TaskGraph, id: &TaskId) -> Vec<f64> {
        let ti = tg.index_of(id).unwrap();
        tg.inputs(ti)
            .iter()
            .flat_map(|s| s.substreams.iter().map(|&si| tg.substreams()[si].rate))
            .collect()
    }

    #[test]
    fn fig2_rates() {
        let tg = fig2(InputKind::Correlated).materialize().unwrap();
        let t31 = TaskId::new("O3", 0);
        assert_eq!(rates_into(&tg, &t31), vec![1.0, 2.0, 3.0, 2.0]);
        let idx = tg.index_of(&t31).unwrap();
        assert_eq!(tg.task(idx).output_rate, 8.0);
        assert_eq!(tg.inputs(idx).len(), 2);
    }

    #[test]
    fn one_to_one_chain_identity_wiring() {
        let t = Topology::new(
            vec![
                OperatorSpec::new("A", 2, InputKind::Independent, Role::Source),
                OperatorSpec::new("B", 2, InputKind::Independent, Role::Sink),
            ],
            vec![PartitionEdge::new("A", "B", Pattern::OneToOne)],
            BTreeMap::from([(TaskId::new("A", 0), 4.0), (TaskId::new("A", 1), 6.0)]),
        );
        let tg = t.materialize().unwrap();
        let subs: Vec<(TaskId, TaskId, f64)> = tg
            .substreams()
            .iter()
            .map(|s| (tg.task(s.from).id.clone(), tg.task(s.to).id.clone(), s.rate))
            .collect();
        assert_eq!(
            subs,
            vec![
                (TaskId::new("A", 0), TaskId::new("B", 0), 4.0),
                (TaskId::new("A", 1), TaskId::new("B", 1), 6.0),
            ]
        );
    }

    #[test]
    fn full_fanout_with_selectivity() {
        let t = Topology::new(
            vec![
                OperatorSpec::new("A", 1, InputKind::Independent, Role::Source),
                OperatorSpec::new("B", 2, InputKind::Independent, Role::Sink)
                    .with_selectivity(0.5),
            ],
            vec![PartitionEdge::new("A", "B", Pattern::Full)],
            BTreeMap::from([(TaskId::new("A", 0), 10.0)]),
        );
        let tg = t.materialize().unwrap();
        let rates: Vec<f64> = tg.substreams().iter().map(|s| s.rate).collect();
        assert_eq!(rates, vec![5.0, 5.0]);
        for id in [TaskId::new("B", 0), TaskId::new("B", 1)] {
            let ti = tg.index_of(&id).unwrap();
            assert_eq!(tg.task(ti).output_rate, 2.5);
        }
    }

    #[test]
    fn rate_conservation_per_edge() {
        for tg in [
            fig2(InputKind::Correlated).materialize().unwrap(),
            chain_full().materialize().unwrap(),
            merge_join().materialize().unwrap(),
        ] {
            for ti in 0..tg.len() {
                let mut per_edge: BTreeMap<usize, f64> = BTreeMap::new();
                for &si in tg.outputs(ti) {
                    *per_edge.entry(tg.substreams()[si].edge).or_default() +=
                        tg.substreams()[si].rate;
                }
                for (_, sum) in per_edge {
                    let rate = tg.task(ti).output_rate;
                    assert!(
                        (sum - rate).abs() <= 1e-9 * rate.abs().max(1.0),
                        "task {} edge sum {sum} != rate {rate}",
                        tg.task(ti).id
                    );
                }
            }
        }
    }

    #[test]
    fn materialize_is_deterministic() {
        let a = merge_join().materialize().unwrap();
        let b = merge_join().materialize().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_topology_is_rejected_with_first_violation() {
        let mut t = fig2(InputKind::Correlated);
        t.edges.push(PartitionEdge::new("O3", "O3", Pattern::Full));
        let err = t.materialize().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("self-subscription"), "got: {msg}");
    }

    #[test]
    fn restrict_turns_cut_tasks_into_sources() {
        let tg = merge_join().materialize().unwrap();
        let sub = tg.restrict(&BTreeSet::from(["O3".to_string(), "O4".to_string()]));
        assert_eq!(sub.len(), 3);
        // O3's merge/one-to-one inputs are gone; with no remaining input
        // streams its tasks act as local sources.
        let o30 = sub.index_of(&TaskId::new("O3", 0)).unwrap();
        assert!(sub.inputs(o30).is_empty());
        assert_eq!(sub.task(o30).role, Role::Source);
        // Output rates are preserved from the full graph.
        let full_rate = tg.task(tg.index_of(&TaskId::new("O3", 0)).unwrap()).output_rate;
        assert_eq!(sub.task(o30).output_rate, full_rate);
        // O4#0 is still the (local) sink.
        assert_eq!(sub.sink_tasks().len(), 1);
    }
}

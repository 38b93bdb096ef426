//! Unit splitting and planning for structured topologies.
//!
//! A structured topology keeps full partitioning out of its interior (full
//! edges may only enter the local output operators). To keep tree
//! enumeration small, the topology is cut into units: boundaries sit on
//! every merge edge into an operator that also splits its output, and on
//! every merge edge into a correlated join. The trees local to a unit are
//! its segments; complete trees of the whole topology are chains of
//! connected segments across units.
//!
//! Planning grows the plan one candidate at a time. A candidate is either a
//! single segment (when it alone raises fidelity, i.e. it completes a tree
//! with what is already replicated) or a segment plus the best connected
//! segment of every unit reached by a breadth-first walk, bounded by the
//! remaining budget. Candidates are ranked by profit density: fidelity gain
//! per newly replicated task.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{PlannerError, ReplicationPlan};
use crate::fidelity::{enumerate_mc_trees, of_for_plan_mask, plan_fidelity, MCTree};
use crate::topology::{InputKind, Pattern, TaskGraph, TaskId};

/// A connected piece of a structured topology after boundary cuts.
#[derive(Debug, Clone)]
pub struct Unit {
    pub id: usize,
    pub operators: BTreeSet<String>,
    pub local_graph: TaskGraph,
    /// Local minimal complete trees, in deterministic order.
    pub segments: Vec<MCTree>,
}

/// One candidate plan expansion: a set of connected segments.
#[derive(Debug, Clone)]
pub struct CandidateExpansion {
    pub segments: Vec<MCTree>,
    pub new_task_count: usize,
    pub profit_density: f64,
}

/// Splits a structured topology into units along the boundary rules and
/// enumerates each unit's segments.
pub fn split_units(tg: &TaskGraph) -> Result<Vec<Unit>, PlannerError> {
    ensure_structured(tg)?;

    let ops = tg.operator_ids();
    let op_ord: BTreeMap<&str, usize> = ops.iter().enumerate().map(|(i, o)| (o.as_str(), i)).collect();
    let active = tg.active_edges();

    let mut in_edges: Vec<Vec<usize>> = vec![Vec::new(); ops.len()];
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); ops.len()];
    for &e in &active {
        let meta = tg.edge_meta(e);
        in_edges[op_ord[meta.to_op.as_str()]].push(e);
        out_edges[op_ord[meta.from_op.as_str()]].push(e);
    }

    // An operator's input kind, taken from any of its tasks that still has
    // input streams.
    let mut op_kind = vec![InputKind::Independent; ops.len()];
    for (i, t) in tg.tasks().iter().enumerate() {
        if !tg.inputs(i).is_empty() {
            op_kind[op_ord[t.id.operator.as_str()]] = t.input_kind;
        }
    }

    let mut cut: BTreeSet<usize> = BTreeSet::new();
    for oi in 0..ops.len() {
        let merges: Vec<usize> = in_edges[oi]
            .iter()
            .copied()
            .filter(|&e| tg.edge_meta(e).pattern == Pattern::Merge)
            .collect();
        if merges.is_empty() {
            continue;
        }
        let splits_out = out_edges[oi]
            .iter()
            .any(|&e| tg.edge_meta(e).pattern == Pattern::Split);
        let correlated_join = op_kind[oi] == InputKind::Correlated && in_edges[oi].len() >= 2;
        if splits_out || correlated_join {
            cut.extend(merges);
        }
    }

    // Units are the connected components after removing the cut edges.
    let mut component = vec![usize::MAX; ops.len()];
    let mut units_ops: Vec<BTreeSet<String>> = Vec::new();
    for start in 0..ops.len() {
        if component[start] != usize::MAX {
            continue;
        }
        let cid = units_ops.len();
        let mut members = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        component[start] = cid;
        while let Some(oi) = queue.pop_front() {
            members.insert(ops[oi].clone());
            for &e in in_edges[oi].iter().chain(&out_edges[oi]) {
                if cut.contains(&e) {
                    continue;
                }
                let meta = tg.edge_meta(e);
                for other in [op_ord[meta.from_op.as_str()], op_ord[meta.to_op.as_str()]] {
                    if component[other] == usize::MAX {
                        component[other] = cid;
                        queue.push_back(other);
                    }
                }
            }
        }
        units_ops.push(members);
    }

    let mut units = Vec::with_capacity(units_ops.len());
    for (id, operators) in units_ops.into_iter().enumerate() {
        let local_graph = tg.restrict(&operators);
        let segments = enumerate_mc_trees(&local_graph)?;
        units.push(Unit {
            id,
            operators,
            local_graph,
            segments,
        });
    }
    Ok(units)
}

fn ensure_structured(tg: &TaskGraph) -> Result<(), PlannerError> {
    let output_ops: BTreeSet<&str> = tg
        .sink_tasks()
        .iter()
        .map(|&i| tg.task(i).id.operator.as_str())
        .collect();
    for e in tg.active_edges() {
        let meta = tg.edge_meta(e);
        if meta.pattern == Pattern::Full && !output_ops.contains(meta.to_op.as_str()) {
            return Err(PlannerError::NotStructured(format!(
                "full edge {} -> {} does not enter an output operator",
                meta.from_op, meta.to_op
            )));
        }
    }
    Ok(())
}

/// Precomputed planning state for one structured topology: its units,
/// segment task sets, per-segment local fidelity, and the cross-unit
/// connectivity. Reused across incremental planning calls.
pub(crate) struct StructuredCtx {
    units: Vec<Unit>,
    seg_tasks: Vec<Vec<Vec<usize>>>,
    seg_local_of: Vec<Vec<f64>>,
    boundary_adj: Vec<Vec<usize>>,
    unit_neighbors: Vec<Vec<usize>>,
}

impl StructuredCtx {
    pub(crate) fn new(tg: &TaskGraph) -> Result<Self, PlannerError> {
        let units = split_units(tg)?;
        let n = tg.len();

        let mut unit_of = vec![usize::MAX; n];
        for unit in &units {
            for t in unit.local_graph.tasks() {
                unit_of[tg.index_of(&t.id).expect("unit task")] = unit.id;
            }
        }
        let seg_tasks: Vec<Vec<Vec<usize>>> = units
            .iter()
            .map(|u| {
                u.segments
                    .iter()
                    .map(|s| {
                        s.tasks
                            .iter()
                            .map(|id| tg.index_of(id).expect("segment task"))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let seg_local_of: Vec<Vec<f64>> = units
            .iter()
            .map(|u| {
                u.segments
                    .iter()
                    .map(|s| plan_fidelity(&u.local_graph, &s.tasks).expect("local segment"))
                    .collect()
            })
            .collect();

        let mut boundary_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); units.len()];
        for s in tg.substreams() {
            if unit_of[s.from] != unit_of[s.to] {
                boundary_adj[s.from].push(s.to);
                boundary_adj[s.to].push(s.from);
                neighbors[unit_of[s.from]].insert(unit_of[s.to]);
                neighbors[unit_of[s.to]].insert(unit_of[s.from]);
            }
        }

        Ok(Self {
            units,
            seg_tasks,
            seg_local_of,
            boundary_adj,
            unit_neighbors: neighbors
                .into_iter()
                .map(|s| s.into_iter().collect())
                .collect(),
        })
    }

    pub(crate) fn units(&self) -> &[Unit] {
        &self.units
    }

    /// Grows `initial` by up to `budget` new tasks, applying at most
    /// `max_steps` candidates.
    pub(crate) fn plan(
        &self,
        initial: &BTreeSet<TaskId>,
        budget: usize,
        tg: &TaskGraph,
        max_steps: usize,
    ) -> Result<ReplicationPlan, PlannerError> {
        let n = tg.len();
        let mut replicated = vec![false; n];
        for idx in tg.resolve(initial)? {
            replicated[idx] = true;
        }

        let connected = |seg: &[usize], in_cg: &[bool]| -> bool {
            seg.iter()
                .any(|&t| self.boundary_adj[t].iter().any(|&o| in_cg[o]))
        };

        let mut il = Vec::new();
        let mut current_of = of_for_plan_mask(tg, &replicated, &mut il);
        let mut usage = 0usize;
        let mut steps = 0usize;
        let mut live: Vec<usize> = self.units.iter().map(|u| u.id).collect();

        struct Cand {
            expansion: CandidateExpansion,
            tasks: Vec<usize>,
            ids: BTreeSet<TaskId>,
            of_after: f64,
        }

        while usage < budget && steps < max_steps {
            let mut candidates: Vec<Cand> = Vec::new();
            let remaining = budget - usage;

            for &ui in &live {
                for (si, seg) in self.seg_tasks[ui].iter().enumerate() {
                    if seg.iter().all(|&t| replicated[t]) {
                        continue; // fully replicated segment
                    }
                    let mut cg_mask = vec![false; n];
                    let mut cg: Vec<usize> = Vec::new();
                    let mut chosen = vec![(ui, si)];
                    for &t in seg {
                        cg_mask[t] = true;
                        cg.push(t);
                    }

                    let of_alone = with_tasks(tg, &replicated, &cg, &mut il);
                    if of_alone == current_of {
                        // Alone it completes nothing: grow across units,
                        // taking each visited unit's best connected segment.
                        let mut queue: VecDeque<usize> =
                            self.unit_neighbors[ui].iter().copied().collect();
                        let mut enqueued = vec![false; self.units.len()];
                        enqueued[ui] = true;
                        for &q in &queue {
                            enqueued[q] = true;
                        }
                        'bfs: while let Some(uj) = queue.pop_front() {
                            let mut best: Option<(f64, usize)> = None;
                            for (sj, seg_j) in self.seg_tasks[uj].iter().enumerate() {
                                if !connected(seg_j, &cg_mask) {
                                    continue;
                                }
                                let lof = self.seg_local_of[uj][sj];
                                let take = match best {
                                    None => true,
                                    Some((bof, bsj)) => {
                                        lof > bof
                                            || (lof == bof
                                                && self.units[uj].segments[sj].tasks
                                                    < self.units[uj].segments[bsj].tasks)
                                    }
                                };
                                if take {
                                    best = Some((lof, sj));
                                }
                            }
                            if let Some((_, sj)) = best {
                                let adds: Vec<usize> = self.seg_tasks[uj][sj]
                                    .iter()
                                    .copied()
                                    .filter(|&t| !cg_mask[t])
                                    .collect();
                                let new_after: usize = cg
                                    .iter()
                                    .chain(&adds)
                                    .filter(|&&t| !replicated[t])
                                    .count();
                                if new_after > remaining {
                                    break 'bfs;
                                }
                                chosen.push((uj, sj));
                                for &t in &adds {
                                    cg_mask[t] = true;
                                    cg.push(t);
                                }
                            }
                            for &next in &self.unit_neighbors[uj] {
                                if !enqueued[next] {
                                    enqueued[next] = true;
                                    queue.push_back(next);
                                }
                            }
                        }
                    }

                    let new_count = cg.iter().filter(|&&t| !replicated[t]).count();
                    if new_count == 0 || new_count > remaining {
                        continue;
                    }
                    let of_after = with_tasks(tg, &replicated, &cg, &mut il);
                    let ids: BTreeSet<TaskId> = cg
                        .iter()
                        .filter(|&&t| !replicated[t])
                        .map(|&t| tg.task(t).id.clone())
                        .collect();
                    candidates.push(Cand {
                        expansion: CandidateExpansion {
                            segments: chosen
                                .iter()
                                .map(|&(u, s)| self.units[u].segments[s].clone())
                                .collect(),
                            new_task_count: new_count,
                            profit_density: (of_after - current_of) / new_count as f64,
                        },
                        tasks: cg,
                        ids,
                        of_after,
                    });
                }
            }

            let best = candidates.into_iter().reduce(|a, b| {
                let (da, db) = (a.expansion.profit_density, b.expansion.profit_density);
                if db > da
                    || (db == da
                        && (b.expansion.new_task_count < a.expansion.new_task_count
                            || (b.expansion.new_task_count == a.expansion.new_task_count
                                && b.ids < a.ids)))
                {
                    b
                } else {
                    a
                }
            });
            let Some(best) = best else { break };
            if best.of_after <= current_of {
                break; // no candidate improves fidelity
            }

            usage += best.expansion.new_task_count;
            steps += 1;
            current_of = best.of_after;
            for &t in &best.tasks {
                replicated[t] = true;
            }
            live.retain(|&ui| {
                self.seg_tasks[ui]
                    .iter()
                    .flatten()
                    .any(|&t| !replicated[t])
            });
        }

        let tasks: BTreeSet<TaskId> = (0..n)
            .filter(|&i| replicated[i])
            .map(|i| tg.task(i).id.clone())
            .collect();
        let objective = of_for_plan_mask(tg, &replicated, &mut il);
        Ok(ReplicationPlan {
            tasks,
            budget,
            objective,
        })
    }
}

/// Grows `initial` by up to `budget` newly replicated tasks on a structured
/// topology, maximizing profit density per step.
pub fn plan_structured(
    initial: &BTreeSet<TaskId>,
    budget: usize,
    tg: &TaskGraph,
) -> Result<ReplicationPlan, PlannerError> {
    StructuredCtx::new(tg)?.plan(initial, budget, tg, usize::MAX)
}

fn with_tasks(tg: &TaskGraph, replicated: &[bool], extra: &[usize], il: &mut Vec<f64>) -> f64 {
    let mut mask = replicated.to_vec();
    for &t in extra {
        mask[t] = true;
    }
    of_for_plan_mask(tg, &mask, il)
}

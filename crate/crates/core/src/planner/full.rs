//! Planner for full topologies (every active edge uses full partitioning).
//!
//! Tasks are ranked within their operator by the fidelity gain of
//! replicating them while every other task of the same operator is failed
//! and all other operators stay alive. From an empty plan the best task of
//! each operator is seeded (if the budget covers one per operator); after
//! that the plan grows one task at a time, always taking the candidate
//! whose addition yields the highest plan fidelity.

use std::collections::{BTreeMap, BTreeSet};

use super::{PlannerError, ReplicationPlan};
use crate::fidelity::{of_for_mask, of_for_plan_mask};
use crate::topology::{Pattern, TaskGraph, TaskId};

/// Precomputed per-operator task ranking; the gain ordering is independent
/// of the plan, so it is shared across incremental planning calls.
pub(crate) struct FullCtx {
    /// Per operator, its tasks in descending gain order.
    ranked: Vec<Vec<usize>>,
}

impl FullCtx {
    pub(crate) fn new(tg: &TaskGraph) -> Result<Self, PlannerError> {
        for edge in tg.active_edges() {
            let meta = tg.edge_meta(edge);
            if meta.pattern != Pattern::Full {
                return Err(PlannerError::NotFull(format!(
                    "edge {} -> {} uses {}",
                    meta.from_op, meta.to_op, meta.pattern
                )));
            }
        }

        let n = tg.len();
        let mut by_op: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            by_op
                .entry(tg.task(i).id.operator.as_str())
                .or_default()
                .push(i);
        }

        // delta[i]: fidelity gained by keeping task i alive while the rest
        // of its operator is down and everything else is up.
        let mut il = Vec::new();
        let mut delta = vec![0.0; n];
        for tasks in by_op.values() {
            let mut failed = vec![false; n];
            for &i in tasks {
                failed[i] = true;
            }
            let base = of_for_mask(tg, &failed, &mut il);
            for &i in tasks {
                failed[i] = false;
                delta[i] = of_for_mask(tg, &failed, &mut il) - base;
                failed[i] = true;
            }
        }

        let ranked = by_op
            .into_values()
            .map(|mut tasks| {
                tasks.sort_by(|&a, &b| {
                    delta[b]
                        .total_cmp(&delta[a])
                        .then_with(|| tg.task(a).id.cmp(&tg.task(b).id))
                });
                tasks
            })
            .collect();
        Ok(Self { ranked })
    }

    pub(crate) fn plan(
        &self,
        initial: &BTreeSet<TaskId>,
        budget: usize,
        tg: &TaskGraph,
    ) -> Result<ReplicationPlan, PlannerError> {
        let n = tg.len();
        let mut replicated = vec![false; n];
        for idx in tg.resolve(initial)? {
            replicated[idx] = true;
        }

        let mut il = Vec::new();
        let mut queues: Vec<Vec<usize>> = self
            .ranked
            .iter()
            .map(|q| q.iter().copied().filter(|&i| !replicated[i]).collect())
            .collect();

        let mut usage = 0usize;
        if initial.is_empty() {
            let n_ops = queues.len();
            if n_ops > budget {
                let objective = of_for_plan_mask(tg, &replicated, &mut il);
                return Ok(ReplicationPlan {
                    tasks: BTreeSet::new(),
                    budget,
                    objective,
                });
            }
            for q in &mut queues {
                let best = q.remove(0);
                replicated[best] = true;
            }
            usage = n_ops;
        }

        while usage < budget {
            // One candidate per operator: the plan plus its best remaining
            // task.
            let mut best: Option<(f64, usize)> = None;
            for q in &queues {
                let Some(&head) = q.first() else { continue };
                replicated[head] = true;
                let of = of_for_plan_mask(tg, &replicated, &mut il);
                replicated[head] = false;
                let take = match best {
                    None => true,
                    Some((bof, btask)) => {
                        of > bof || (of == bof && tg.task(head).id < tg.task(btask).id)
                    }
                };
                if take {
                    best = Some((of, head));
                }
            }
            let Some((_, chosen)) = best else { break };
            replicated[chosen] = true;
            for q in &mut queues {
                q.retain(|&i| i != chosen);
            }
            usage += 1;
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

pub fn plan_full(
    initial: &BTreeSet<TaskId>,
    budget: usize,
    tg: &TaskGraph,
) -> Result<ReplicationPlan, PlannerError> {
    FullCtx::new(tg)?.plan(initial, budget, tg)
}

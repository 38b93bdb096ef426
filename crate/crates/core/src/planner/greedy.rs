//! Per-task damage ranking.
//!
//! Scores every task by the output fidelity of the topology when that task
//! alone fails, then replicates the `budget` most damaging tasks. Cheap,
//! but blind to whether the chosen tasks form complete trees, which hurts
//! badly at small budgets on join-bearing topologies.

use std::collections::BTreeSet;

use super::ReplicationPlan;
use crate::fidelity::{of_for_mask, plan_fidelity};
use crate::topology::{TaskGraph, TaskId};

pub fn plan_greedy(tg: &TaskGraph, budget: usize) -> ReplicationPlan {
    let n = tg.len();
    let mut il = Vec::new();
    let mut failed = vec![false; n];

    let mut scored: Vec<(f64, &TaskId)> = (0..n)
        .map(|i| {
            failed[i] = true;
            let of = of_for_mask(tg, &failed, &mut il);
            failed[i] = false;
            (of, &tg.task(i).id)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));

    let tasks: BTreeSet<TaskId> = scored
        .into_iter()
        .take(budget)
        .map(|(_, id)| id.clone())
        .collect();
    let objective = plan_fidelity(tg, &tasks).expect("tasks come from this graph");

    ReplicationPlan {
        tasks,
        budget,
        objective,
    }
}

//! Brute-force optimality oracle.

use std::collections::BTreeSet;

use super::{better_plan, PlannerError, ReplicationPlan};
use crate::fidelity::of_for_mask;
use crate::topology::{TaskGraph, TaskId};

/// Largest task count the exhaustive planner will accept.
pub const EXHAUSTIVE_TASK_GUARD: usize = 25;

/// Maximizes plan fidelity over every subset of at most `budget` tasks.
///
/// Intended as a ground-truth oracle for small graphs; cost is `O(2^n)`
/// evaluations, guarded at [`EXHAUSTIVE_TASK_GUARD`] tasks.
pub fn plan_exhaustive(tg: &TaskGraph, budget: usize) -> Result<ReplicationPlan, PlannerError> {
    let n = tg.len();
    if n > EXHAUSTIVE_TASK_GUARD {
        return Err(PlannerError::TooManyTasks(n));
    }
    if budget > n {
        return Err(PlannerError::BudgetTooLarge { budget, tasks: n });
    }

    let mut failed = vec![false; n];
    let mut il = Vec::new();
    let mut best_of = f64::NEG_INFINITY;
    let mut best_ids: Option<BTreeSet<TaskId>> = None;

    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize > budget {
            continue;
        }
        for (i, f) in failed.iter_mut().enumerate() {
            *f = mask & (1 << i) == 0;
        }
        let of = of_for_mask(tg, &failed, &mut il);
        let take = match &best_ids {
            None => true,
            Some(current) => {
                if of != best_of {
                    of > best_of
                } else if mask.count_ones() as usize > current.len() {
                    false
                } else {
                    better_plan(of, &ids_of(tg, mask), best_of, current)
                }
            }
        };
        if take {
            best_of = of;
            best_ids = Some(ids_of(tg, mask));
        }
    }

    Ok(ReplicationPlan {
        tasks: best_ids.unwrap_or_default(),
        budget,
        objective: best_of,
    })
}

fn ids_of(tg: &TaskGraph, mask: u32) -> BTreeSet<TaskId> {
    (0..tg.len())
        .filter(|i| mask & (1 << i) != 0)
        .map(|i| tg.task(i).id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fig2;
    use crate::topology::InputKind;

    #[test]
    fn fig2_independent_budget_three() {
        let tg = fig2(InputKind::Independent).materialize().unwrap();
        let plan = plan_exhaustive(&tg, 3).unwrap();
        assert_eq!(plan.objective, 5.0 / 8.0);
        let expect: BTreeSet<TaskId> = ["O1#1", "O2#0", "O3#0"]
            .iter()
            .map(|s| TaskId::parse(s).unwrap())
            .collect();
        assert_eq!(plan.tasks, expect);
    }

    #[test]
    fn trivial_budgets() {
        let tg = fig2(InputKind::Independent).materialize().unwrap();
        let empty = plan_exhaustive(&tg, 0).unwrap();
        assert!(empty.tasks.is_empty());
        assert_eq!(empty.objective, 0.0);

        let full = plan_exhaustive(&tg, tg.len()).unwrap();
        assert_eq!(full.objective, 1.0);
        assert_eq!(full.len(), tg.len());
    }

    #[test]
    fn guards() {
        let tg = fig2(InputKind::Independent).materialize().unwrap();
        assert!(matches!(
            plan_exhaustive(&tg, tg.len() + 1),
            Err(PlannerError::BudgetTooLarge { .. })
        ));
    }
}

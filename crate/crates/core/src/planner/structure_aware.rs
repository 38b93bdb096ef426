//! Structure-aware planning for general topologies.
//!
//! The topology is decomposed into sub-topologies; each gets an initial
//! local plan (one seed task per operator for full kinds, one minimal tree
//! for structured kinds). After seeding, the planner repeatedly applies the
//! single best increment across sub-topologies — one task for a full
//! sub-topology, one connected segment group for a structured one — ranked
//! by local fidelity gain per newly replicated task, until no increment
//! fits the remaining budget. Budgets below the operator count yield the
//! empty plan.

use std::collections::BTreeSet;

use super::full::FullCtx;
use super::structured::StructuredCtx;
use super::{decompose, PlannerError, ReplicationPlan, SubKind};
use crate::fidelity::{min_tree_size, plan_fidelity};
use crate::topology::{TaskGraph, TaskId};

pub fn plan_structure_aware(
    tg: &TaskGraph,
    budget: usize,
) -> Result<ReplicationPlan, PlannerError> {
    let operator_count = tg.operator_ids().len();
    if budget < operator_count {
        let objective = plan_fidelity(tg, &BTreeSet::new())?;
        return Ok(ReplicationPlan {
            tasks: BTreeSet::new(),
            budget,
            objective,
        });
    }

    enum SubPlanner {
        Full(FullCtx),
        Structured(StructuredCtx),
    }

    impl SubPlanner {
        fn plan(
            &self,
            initial: &BTreeSet<TaskId>,
            budget: usize,
            local: &TaskGraph,
            max_steps: usize,
        ) -> Result<ReplicationPlan, PlannerError> {
            match self {
                SubPlanner::Full(ctx) => ctx.plan(initial, budget.min(max_steps), local),
                SubPlanner::Structured(ctx) => ctx.plan(initial, budget, local, max_steps),
            }
        }
    }

    struct SubState {
        planner: SubPlanner,
        local: TaskGraph,
        plan: ReplicationPlan,
        /// Precomputed next increment: (plan after, new tasks).
        next: Option<(ReplicationPlan, usize)>,
        /// Remaining budget the increment was computed against.
        computed_at: usize,
        dead: bool,
    }

    // The increment itself is chosen sub-locally (full boundaries make the
    // choice independent of the neighbors), but increments compete across
    // sub-topologies by their global fidelity gain per task.
    let step = |planner: &SubPlanner,
                local: &TaskGraph,
                current: &ReplicationPlan,
                allowance: usize|
     -> Result<Option<(ReplicationPlan, usize)>, PlannerError> {
        if allowance == 0 {
            return Ok(None);
        }
        let next = planner.plan(&current.tasks, allowance, local, 1)?;
        let cost = next.len() - current.len();
        if cost == 0 {
            return Ok(None);
        }
        Ok(Some((next, cost)))
    };

    // Initial seeding: every sub-topology gets its smallest useful plan.
    let mut states = Vec::new();
    let mut usage = 0usize;
    for sub in decompose(tg) {
        let local = tg.restrict(&sub.operators);
        let (planner, initial_budget) = match sub.kind {
            SubKind::Full => (SubPlanner::Full(FullCtx::new(&local)?), sub.operator_count),
            SubKind::Structured => {
                let tree = min_tree_size(&local).unwrap_or(sub.operator_count);
                (SubPlanner::Structured(StructuredCtx::new(&local)?), tree)
            }
        };
        let plan = planner.plan(&BTreeSet::new(), initial_budget, &local, usize::MAX)?;
        usage += plan.len();
        states.push(SubState {
            planner,
            local,
            plan,
            next: None,
            computed_at: usize::MAX,
            dead: false,
        });
    }

    let merged = |states: &[SubState]| -> BTreeSet<TaskId> {
        states
            .iter()
            .flat_map(|st| st.plan.tasks.iter().cloned())
            .collect()
    };
    let mut current_tasks = merged(&states);
    let mut current_of = plan_fidelity(tg, &current_tasks)?;

    loop {
        let remaining = budget.saturating_sub(usage);
        if remaining == 0 {
            break;
        }
        // Refresh stale increments: one computed against a larger allowance
        // stays valid while it fits; once it does not, a smaller step may
        // still exist.
        for st in states.iter_mut() {
            if st.dead {
                continue;
            }
            let stale = match &st.next {
                None => st.computed_at == usize::MAX || st.computed_at > remaining,
                Some((_, cost)) => *cost > remaining && st.computed_at != remaining,
            };
            if stale {
                st.next = step(&st.planner, &st.local, &st.plan, remaining)?;
                st.computed_at = remaining;
                // No step fits the full remaining budget, and shrinking
                // budgets cannot help.
                st.dead = st.next.is_none();
            }
        }

        let mut pick: Option<(usize, f64)> = None;
        for (i, st) in states.iter().enumerate() {
            let Some((next, cost)) = &st.next else {
                continue;
            };
            if *cost > remaining {
                continue;
            }
            let mut with: BTreeSet<TaskId> = current_tasks.clone();
            with.extend(next.tasks.iter().cloned());
            let delta = (plan_fidelity(tg, &with)? - current_of) / *cost as f64;
            let take = match pick {
                None => true,
                Some((_, best)) => delta > best,
            };
            if take {
                pick = Some((i, delta));
            }
        }
        let Some((i, _)) = pick else { break };
        let (next, cost) = states[i].next.take().expect("picked state has a step");
        states[i].plan = next;
        usage += cost;
        current_tasks = merged(&states);
        current_of = plan_fidelity(tg, &current_tasks)?;
        let remaining = budget.saturating_sub(usage);
        states[i].next = step(&states[i].planner, &states[i].local, &states[i].plan, remaining)?;
        states[i].computed_at = remaining;
    }

    let tasks = current_tasks;
    let objective = current_of;
    Ok(ReplicationPlan {
        tasks,
        budget,
        objective,
    })
}

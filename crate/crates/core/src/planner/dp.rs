//! Exact planner over unions of minimal complete trees.
//!
//! Bottom-up dynamic program: candidate plans start from the empty plan and
//! grow one tree at a time. At resource level `usage`, a candidate with
//! `|CP|` tasks is extended by every tree contributing exactly
//! `usage - |CP|` new tasks; a candidate is retired once no remaining tree
//! can ever close that gap. Retired candidates stay eligible as the final
//! answer — only their expansion stops. Duplicate plans (same task set) are
//! suppressed, and the best candidate under the shared tie-break wins.

use std::collections::{BTreeSet, HashMap};

use super::{better_plan, PlannerError, ReplicationPlan};
use crate::fidelity::{enumerate_mc_trees, of_for_mask};
use crate::topology::{TaskGraph, TaskId};

/// Dense bitset sized for one task graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct TaskSet {
    words: Vec<u64>,
    len: usize,
}

impl TaskSet {
    fn empty(n: usize) -> Self {
        Self {
            words: vec![0; n.div_ceil(64)],
            len: 0,
        }
    }

    fn insert(&mut self, i: usize) {
        let (w, b) = (i / 64, i % 64);
        if self.words[w] & (1 << b) == 0 {
            self.words[w] |= 1 << b;
            self.len += 1;
        }
    }

    fn union(&self, other: &TaskSet) -> TaskSet {
        let words: Vec<u64> = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a | b)
            .collect();
        let len = words.iter().map(|w| w.count_ones() as usize).sum();
        TaskSet { words, len }
    }

    /// Number of tasks in `self` missing from `other`.
    fn missing_from(&self, other: &TaskSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & !b).count_ones() as usize)
            .sum()
    }

    fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }
}

struct Candidate {
    tasks: TaskSet,
    objective: f64,
}

/// Optimal plan for the worst-case correlated failure, maximizing output
/// fidelity over all tree unions of at most `budget` tasks.
pub fn plan_dp(tg: &TaskGraph, budget: usize) -> Result<ReplicationPlan, PlannerError> {
    let trees = enumerate_mc_trees(tg)?;
    let n = tg.len();
    let tree_sets: Vec<TaskSet> = trees
        .iter()
        .map(|t| {
            let mut set = TaskSet::empty(n);
            for id in &t.tasks {
                set.insert(tg.index_of(id).expect("tree tasks come from this graph"));
            }
            set
        })
        .collect();

    let mut il = Vec::new();
    let mut eval = |set: &TaskSet| -> f64 {
        let failed: Vec<bool> = (0..n).map(|i| !set.contains(i)).collect();
        of_for_mask(tg, &failed, &mut il)
    };

    let empty = TaskSet::empty(n);
    let objective = eval(&empty);
    let mut candidates = vec![Candidate {
        tasks: empty,
        objective,
    }];
    let mut seen: HashMap<TaskSet, ()> = HashMap::new();
    seen.insert(candidates[0].tasks.clone(), ());
    let mut active: Vec<usize> = vec![0];

    for usage in 1..=budget {
        let snapshot = active.clone();
        let mut retired = Vec::new();
        for &ci in &snapshot {
            let dif = usage - candidates[ci].tasks.len;
            let reachable_gap = tree_sets
                .iter()
                .map(|t| t.missing_from(&candidates[ci].tasks))
                .max()
                .unwrap_or(0);
            if dif > reachable_gap {
                retired.push(ci);
                continue;
            }
            for (ti, tree) in tree_sets.iter().enumerate() {
                if trees[ti].tasks.is_empty() {
                    continue;
                }
                if tree.missing_from(&candidates[ci].tasks) != dif {
                    continue;
                }
                let merged = candidates[ci].tasks.union(tree);
                if seen.contains_key(&merged) {
                    continue;
                }
                seen.insert(merged.clone(), ());
                let objective = eval(&merged);
                candidates.push(Candidate {
                    tasks: merged,
                    objective,
                });
                active.push(candidates.len() - 1);
            }
        }
        active.retain(|ci| !retired.contains(ci));
    }

    // Best over every candidate ever generated.
    let mut best: Option<(f64, BTreeSet<TaskId>)> = None;
    for cand in &candidates {
        let ids: BTreeSet<TaskId> = (0..n)
            .filter(|&i| cand.tasks.contains(i))
            .map(|i| tg.task(i).id.clone())
            .collect();
        match &best {
            Some((of, tasks)) if !better_plan(cand.objective, &ids, *of, tasks) => {}
            _ => best = Some((cand.objective, ids)),
        }
    }
    let (objective, tasks) = best.expect("the empty candidate always exists");

    Ok(ReplicationPlan {
        tasks,
        budget,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{diamond, fig2};
    use crate::planner::plan_exhaustive;
    use crate::topology::InputKind;

    #[test]
    fn fig2_matches_oracle() {
        let tg = fig2(InputKind::Independent).materialize().unwrap();
        let dp = plan_dp(&tg, 3).unwrap();
        let oracle = plan_exhaustive(&tg, 3).unwrap();
        assert_eq!(dp.objective, 5.0 / 8.0);
        assert_eq!(dp.objective, oracle.objective);
        assert_eq!(dp.tasks, oracle.tasks);
    }

    #[test]
    fn diamond_needs_a_whole_tree() {
        let tg = diamond(InputKind::Correlated).materialize().unwrap();
        let too_small = plan_dp(&tg, 3).unwrap();
        assert_eq!(too_small.objective, 0.0);
        assert!(too_small.tasks.is_empty());

        let fits = plan_dp(&tg, 4).unwrap();
        assert_eq!(fits.len(), 4);
        let oracle = plan_exhaustive(&tg, 4).unwrap();
        assert_eq!(fits.objective, oracle.objective);
        assert!(fits.objective > 0.0);
    }

    #[test]
    fn zero_budget_returns_the_empty_plan() {
        let tg = fig2(InputKind::Independent).materialize().unwrap();
        let plan = plan_dp(&tg, 0).unwrap();
        assert!(plan.tasks.is_empty());
        assert_eq!(plan.objective, 0.0);
    }

    #[test]
    fn objective_is_monotone_in_budget() {
        let tg = diamond(InputKind::Correlated).materialize().unwrap();
        let mut last = -1.0;
        for budget in 0..=tg.len() {
            let plan = plan_dp(&tg, budget).unwrap();
            assert!(plan.objective >= last);
            assert!(plan.len() <= budget);
            last = plan.objective;
        }
    }
}

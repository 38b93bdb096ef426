//! Cross-planner properties on random topologies: budgets, determinism,
//! exactness of the dynamic program against the exhaustive oracle, liveness
//! of the structure-aware planner, and the structured planner's tree-union
//! coherence.

use std::collections::BTreeSet;

use ppa_core::fidelity::enumerate_mc_trees;
use ppa_core::fixtures::{merge_join, merge_split_chain};
use ppa_core::planner::{
    plan_dp, plan_exhaustive, plan_greedy, plan_structure_aware, plan_structured, split_units,
    Algorithm, plan_with,
};
use ppa_core::topology::{
    generate_random, GeneratorSpec, Role, TaskGraph, TaskId, TopologyKind, WorkloadSkew,
};

fn spec(seed: u64, kind: TopologyKind) -> GeneratorSpec {
    GeneratorSpec {
        operator_count: (3, 6),
        parallelism: (1, 3),
        skew: WorkloadSkew::Uniform,
        join_fraction: 0.5,
        kind,
        seed,
    }
}

fn graph(seed: u64, kind: TopologyKind) -> TaskGraph {
    generate_random(&spec(seed, kind))
        .unwrap()
        .materialize()
        .unwrap()
}

fn kinds(seed: u64) -> TopologyKind {
    match seed % 3 {
        0 => TopologyKind::Structured,
        1 => TopologyKind::Full,
        _ => TopologyKind::Mixed,
    }
}

#[test]
fn every_planner_respects_the_budget() {
    for seed in 0..40 {
        let tg = graph(seed, kinds(seed));
        for budget in [0, 1, tg.len() / 2, tg.len()] {
            for algorithm in Algorithm::ALL {
                if algorithm == Algorithm::Exhaustive && tg.len() > 20 {
                    continue;
                }
                let plan = plan_with(&tg, algorithm, budget).unwrap();
                assert!(
                    plan.len() <= budget,
                    "seed {seed} algorithm {algorithm} budget {budget}: {}",
                    plan.len()
                );
            }
        }
    }
}

#[test]
fn planners_are_deterministic() {
    for seed in [3, 14, 27] {
        let tg = graph(seed, kinds(seed));
        let budget = (tg.len() / 2).max(1);
        for algorithm in [Algorithm::Dp, Algorithm::Greedy, Algorithm::Sa] {
            let a = plan_with(&tg, algorithm, budget).unwrap();
            let b = plan_with(&tg, algorithm, budget).unwrap();
            assert_eq!(a.tasks, b.tasks, "seed {seed} algorithm {algorithm}");
            assert_eq!(a.objective, b.objective);
        }
    }
}

#[test]
fn dp_matches_the_oracle_on_small_graphs() {
    let mut checked = 0;
    for seed in 0..60 {
        let tg = graph(seed, kinds(seed));
        if tg.len() > 12 {
            continue;
        }
        for budget in 0..=tg.len() {
            let dp = plan_dp(&tg, budget).unwrap();
            let oracle = plan_exhaustive(&tg, budget).unwrap();
            assert!(
                (dp.objective - oracle.objective).abs() <= 1e-9,
                "seed {seed} budget {budget}: dp {} oracle {}",
                dp.objective,
                oracle.objective
            );
            // Theorem-style minimality: the oracle prefers smaller plans at
            // equal fidelity, so a minimal dp plan must match its size.
            assert_eq!(
                dp.len(),
                oracle.len(),
                "seed {seed} budget {budget}: dp plan uses more tasks than needed"
            );
        }
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} graphs were small enough");
}

#[test]
fn dp_objective_is_monotone_in_budget() {
    for seed in 0..20 {
        let tg = graph(seed, kinds(seed));
        if tg.len() > 12 {
            continue;
        }
        let mut last = -1.0;
        for budget in 0..=tg.len() {
            let plan = plan_dp(&tg, budget).unwrap();
            assert!(plan.objective >= last, "seed {seed} budget {budget}");
            last = plan.objective;
        }
    }
}

#[test]
fn structure_aware_is_live_once_the_guard_clears() {
    for seed in 0..60 {
        let tg = graph(seed, kinds(seed));
        let ops = tg.operator_ids().len();
        // The guard empties anything below the operator count.
        let below = plan_structure_aware(&tg, ops - 1).unwrap();
        assert!(below.tasks.is_empty(), "seed {seed}");

        let plan = plan_structure_aware(&tg, tg.len()).unwrap();
        assert!(
            plan.objective > 0.0,
            "seed {seed}: budget {} gave objective 0",
            tg.len()
        );
    }
}

#[test]
fn structure_aware_never_loses_to_greedy_on_average() {
    // Aggregate comparison in the spirit of the random-topology experiments;
    // individual instances may tie.
    let mut sa_total = 0.0;
    let mut greedy_total = 0.0;
    for seed in 0..40 {
        let tg = graph(seed, kinds(seed));
        let budget = tg.len() / 2;
        sa_total += plan_structure_aware(&tg, budget).unwrap().objective;
        greedy_total += plan_greedy(&tg, budget).objective;
    }
    assert!(
        sa_total >= greedy_total,
        "sa {sa_total} < greedy {greedy_total}"
    );
}

#[test]
fn structured_plans_are_unions_of_complete_trees() {
    for seed in 0..40 {
        let tg = graph(seed, TopologyKind::Structured);
        let trees = enumerate_mc_trees(&tg).unwrap();
        for budget in [tg.len() / 3, tg.len() / 2, tg.len()] {
            let plan = plan_structured(&BTreeSet::new(), budget, &tg).unwrap();
            if plan.objective <= 0.0 {
                continue;
            }
            for task in &plan.tasks {
                let covered = trees
                    .iter()
                    .any(|t| t.tasks.contains(task) && t.tasks.is_subset(&plan.tasks));
                assert!(
                    covered,
                    "seed {seed} budget {budget}: task {task} is not part of any complete tree in the plan"
                );
            }
        }
    }
}

#[test]
fn units_partition_operators_and_cut_only_merge_edges() {
    for seed in 0..60 {
        let tg = graph(seed, TopologyKind::Structured);
        let units = split_units(&tg).unwrap();
        let mut seen = BTreeSet::new();
        for unit in &units {
            for op in &unit.operators {
                assert!(seen.insert(op.clone()), "seed {seed}: operator {op} in two units");
            }
        }
        assert_eq!(seen.len(), tg.operator_ids().len(), "seed {seed}");
        // Substreams crossing units always belong to merge edges.
        let unit_of = |id: &TaskId| -> usize {
            units
                .iter()
                .find(|u| u.operators.contains(&id.operator))
                .unwrap()
                .id
        };
        for s in tg.substreams() {
            let (a, b) = (
                unit_of(&tg.task(s.from).id),
                unit_of(&tg.task(s.to).id),
            );
            if a != b {
                assert_eq!(
                    tg.edge_meta(s.edge).pattern,
                    ppa_core::topology::Pattern::Merge,
                    "seed {seed}: non-merge boundary"
                );
            }
        }
    }
}

/// On the reference unit shapes, a unit holds exactly as many segments as
/// the largest per-operator input-substream count, counting one feed per
/// local source task.
#[test]
fn segment_counts_match_input_substreams_on_reference_shapes() {
    for tg in [
        merge_split_chain().materialize().unwrap(),
        merge_join().materialize().unwrap(),
    ] {
        for unit in split_units(&tg).unwrap() {
            let mut per_op: std::collections::BTreeMap<&str, usize> = Default::default();
            for (i, t) in unit.local_graph.tasks().iter().enumerate() {
                let mut cnt: usize = unit
                    .local_graph
                    .inputs(i)
                    .iter()
                    .map(|s| s.substreams.len())
                    .sum();
                if unit.local_graph.task(i).role == Role::Source {
                    cnt += 1;
                }
                *per_op.entry(t.id.operator.as_str()).or_default() += cnt;
            }
            let claim = per_op.values().copied().max().unwrap_or(1);
            assert_eq!(
                unit.segments.len(),
                claim,
                "unit {:?}",
                unit.operators
            );
        }
    }
}

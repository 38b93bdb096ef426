//! Property checks for the loss model: value ranges, monotonicity,
//! rate-scale invariance, metric dominance, and tree-enumeration
//! completeness against a subset brute force.

use std::collections::BTreeSet;

use proptest::prelude::prop;
use proptest::{prop_assert, prop_assert_eq, proptest};

use ppa_core::fidelity::{
    enumerate_mc_trees, input_stream_loss, internal_completeness, output_fidelity,
    plan_fidelity, task_output_loss, FailureScenario,
};
use ppa_core::fixtures::{diamond, merge_join};
use ppa_core::topology::{
    generate_random, GeneratorSpec, InputKind, TaskGraph, TaskId, TopologyKind, WorkloadSkew,
};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn gen_spec(seed: u64, kind: TopologyKind, join: f64) -> GeneratorSpec {
    GeneratorSpec {
        operator_count: (3, 6),
        parallelism: (1, 3),
        skew: WorkloadSkew::Uniform,
        join_fraction: join,
        kind,
        seed,
    }
}

fn random_graph(seed: u64) -> TaskGraph {
    let kind = match seed % 3 {
        0 => TopologyKind::Structured,
        1 => TopologyKind::Full,
        _ => TopologyKind::Mixed,
    };
    let join = if seed % 2 == 0 { 0.5 } else { 0.0 };
    generate_random(&gen_spec(seed, kind, join))
        .unwrap()
        .materialize()
        .unwrap()
}

fn random_scenario(tg: &TaskGraph, rng: &mut ChaCha8Rng) -> FailureScenario {
    let failed = tg
        .tasks()
        .iter()
        .filter(|_| rng.gen_bool(0.4))
        .map(|t| t.id.clone())
        .collect::<BTreeSet<_>>();
    FailureScenario { failed }
}

proptest! {
    #[test]
    fn stream_loss_stays_in_range(
        subs in prop::collection::vec((0.0f64..100.0, 0.0f64..=1.0), 1..8)
    ) {
        let il = input_stream_loss(&subs);
        prop_assert!((0.0..=1.0).contains(&il));
    }

    #[test]
    fn output_loss_stays_in_range_and_correlated_dominates(
        streams in prop::collection::vec((0.01f64..100.0, 0.0f64..=1.0), 1..5)
    ) {
        let corr = task_output_loss(InputKind::Correlated, &streams, false);
        let ind = task_output_loss(InputKind::Independent, &streams, false);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&corr));
        prop_assert!((0.0..=1.0).contains(&ind));
        prop_assert!(corr >= ind - 1e-12);
        prop_assert_eq!(task_output_loss(InputKind::Correlated, &streams, true), 1.0);
    }
}

#[test]
fn of_and_ic_stay_in_range_on_fuzzed_scenarios() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..100 {
        let tg = random_graph(seed);
        for _ in 0..5 {
            let scenario = random_scenario(&tg, &mut rng);
            let of = output_fidelity(&tg, &scenario).unwrap().of;
            let ic = internal_completeness(&tg, &scenario).unwrap();
            assert!((0.0..=1.0).contains(&of), "seed {seed}: of {of}");
            assert!((0.0..=1.0).contains(&ic), "seed {seed}: ic {ic}");
        }
    }
}

#[test]
fn fidelity_is_monotone_in_failure_growth() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..60 {
        let tg = random_graph(seed);
        let small = random_scenario(&tg, &mut rng);
        let mut grown = small.failed.clone();
        for t in tg.tasks() {
            if rng.gen_bool(0.3) {
                grown.insert(t.id.clone());
            }
        }
        let of_small = output_fidelity(&tg, &small).unwrap().of;
        let of_big = output_fidelity(&tg, &FailureScenario { failed: grown }).unwrap().of;
        assert!(
            of_big <= of_small + 1e-12,
            "seed {seed}: {of_big} > {of_small}"
        );
    }
}

#[test]
fn plan_fidelity_is_monotone_in_plan_growth() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for seed in 0..40 {
        let tg = random_graph(seed);
        let mut plan: BTreeSet<TaskId> = BTreeSet::new();
        let mut last = plan_fidelity(&tg, &plan).unwrap();
        let mut order: Vec<TaskId> = tg.tasks().iter().map(|t| t.id.clone()).collect();
        order.shuffle(&mut rng);
        for id in order {
            plan.insert(id);
            let of = plan_fidelity(&tg, &plan).unwrap();
            assert!(of >= last - 1e-12, "seed {seed}");
            last = of;
        }
        assert_eq!(last, 1.0);
    }
}

#[test]
fn rates_scale_out_of_the_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for seed in 0..40 {
        let kind = match seed % 3 {
            0 => TopologyKind::Structured,
            1 => TopologyKind::Full,
            _ => TopologyKind::Mixed,
        };
        let topo = generate_random(&gen_spec(seed, kind, 0.5)).unwrap();
        let tg = topo.materialize().unwrap();
        let scenario = random_scenario(&tg, &mut rng);
        let of = output_fidelity(&tg, &scenario).unwrap().of;
        let ic = internal_completeness(&tg, &scenario).unwrap();
        for scale in [0.25, 3.0, 1e3] {
            let mut scaled = topo.clone();
            for (_, rate) in scaled.source_rates.iter_mut() {
                *rate *= scale;
            }
            let tg2 = scaled.materialize().unwrap();
            let of2 = output_fidelity(&tg2, &scenario).unwrap().of;
            let ic2 = internal_completeness(&tg2, &scenario).unwrap();
            assert!((of - of2).abs() <= 1e-12, "seed {seed} scale {scale}");
            assert!((ic - ic2).abs() <= 1e-12, "seed {seed} scale {scale}");
        }
    }
}

#[test]
fn internal_completeness_dominates_output_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for seed in 0..100 {
        let tg = random_graph(seed);
        for _ in 0..5 {
            let scenario = random_scenario(&tg, &mut rng);
            let of = output_fidelity(&tg, &scenario).unwrap().of;
            let ic = internal_completeness(&tg, &scenario).unwrap();
            assert!(ic >= of - 1e-12, "seed {seed}: ic {ic} < of {of}");
        }
    }
}

/// Subsets that sustain output and are minimal under task removal — the
/// brute-force counterpart of tree enumeration.
fn brute_force_trees(tg: &TaskGraph) -> BTreeSet<BTreeSet<TaskId>> {
    let n = tg.len();
    assert!(n <= 12, "brute force oracle limited to small graphs");
    let ids: Vec<TaskId> = tg.tasks().iter().map(|t| t.id.clone()).collect();
    let sustains = |mask: u32| -> bool {
        let plan: BTreeSet<TaskId> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| ids[i].clone())
            .collect();
        plan_fidelity(tg, &plan).unwrap() > 0.0
    };
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << n) {
        if !sustains(mask) {
            continue;
        }
        let minimal = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .all(|i| !sustains(mask & !(1 << i)));
        if minimal {
            out.insert(
                (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| ids[i].clone())
                    .collect(),
            );
        }
    }
    out
}

#[test]
fn enumeration_matches_subset_brute_force_on_small_graphs() {
    let mut checked = 0;
    for seed in 0..200 {
        let tg = random_graph(seed);
        if tg.len() > 10 {
            continue;
        }
        let enumerated: BTreeSet<BTreeSet<TaskId>> = enumerate_mc_trees(&tg)
            .unwrap()
            .into_iter()
            .map(|t| t.tasks)
            .collect();
        let brute = brute_force_trees(&tg);
        assert_eq!(enumerated, brute, "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 30, "only {checked} graphs were small enough");
}

#[test]
fn trees_sustain_output_and_are_minimal() {
    for tg in [
        diamond(InputKind::Correlated).materialize().unwrap(),
        diamond(InputKind::Independent).materialize().unwrap(),
        merge_join().materialize().unwrap(),
    ] {
        for tree in enumerate_mc_trees(&tg).unwrap() {
            assert!(plan_fidelity(&tg, &tree.tasks).unwrap() > 0.0);
            for removed in &tree.tasks {
                let mut rest = tree.tasks.clone();
                rest.remove(removed);
                assert_eq!(
                    plan_fidelity(&tg, &rest).unwrap(),
                    0.0,
                    "tree {tree} stays alive without {removed}"
                );
            }
        }
    }
}

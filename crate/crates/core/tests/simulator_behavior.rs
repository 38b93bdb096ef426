//! Behavioral contracts of the deterministic simulator: prediction
//! consistency against the fidelity model, recovery-latency orderings,
//! exactly-once delivery, and bit-identical determinism.

use std::collections::BTreeSet;

use ppa_core::fidelity::plan_fidelity;
use ppa_core::fixtures::{fig2, merge_join};
use ppa_core::planner::ReplicationPlan;
use ppa_core::simulator::{
    measure_completeness, recovery_latency_summary, run, FailureSpec, SimConfig, SimSummary,
    SimulationTrace,
};
use ppa_core::topology::{InputKind, TaskGraph, TaskId};

fn plan_of(tg: &TaskGraph, tasks: BTreeSet<TaskId>) -> ReplicationPlan {
    let objective = plan_fidelity(tg, &tasks).unwrap();
    ReplicationPlan {
        tasks,
        budget: tg.len(),
        objective,
    }
}

fn all_tasks(tg: &TaskGraph) -> BTreeSet<TaskId> {
    tg.tasks().iter().map(|t| t.id.clone()).collect()
}

fn ids(items: &[&str]) -> BTreeSet<TaskId> {
    items.iter().map(|s| TaskId::parse(s).unwrap()).collect()
}

fn base_config() -> SimConfig {
    SimConfig {
        run_length_ms: 90_000,
        seed: 11,
        ..SimConfig::default()
    }
}

#[test]
fn no_failure_means_full_completeness_and_no_recoveries() {
    let tg = fig2(InputKind::Correlated).materialize().unwrap();
    let plan = plan_of(&tg, BTreeSet::new());
    let failure = FailureSpec {
        fail_time_ms: 10_000,
        failed_tasks: BTreeSet::new(),
    };
    let trace = run(&tg, &plan, &base_config(), &failure).unwrap();
    assert!(trace.recovery.is_empty());
    assert!(!trace.batch_completeness.is_empty());
    for (&batch, &c) in &trace.batch_completeness {
        assert!((c - 1.0).abs() < 1e-9, "batch {batch} completeness {c}");
    }
    assert_eq!(trace.duplicate_delivery_count, 0);
}

#[test]
fn tentative_steady_state_matches_plan_fidelity_on_fig2() {
    let tg = fig2(InputKind::Correlated).materialize().unwrap();
    let mut tasks = all_tasks(&tg);
    tasks.remove(&TaskId::new("O2", 1));
    let plan = plan_of(&tg, tasks);
    assert_eq!(plan.objective, 1.0 - 2.0 / 5.0);

    let mut config = base_config();
    config.tentative_mode = true;
    // Make passive recovery slow enough to expose a wide degraded window.
    config.restore_cost_ms_per_unit = 1_500.0;
    let failure = FailureSpec::single(20_500, TaskId::new("O2", 1));
    let trace = run(&tg, &plan, &config, &failure).unwrap();

    let summary = SimSummary::from_trace(&trace);
    let steady = summary.steady_completeness.expect("degraded window exists");
    assert!(
        (steady - plan.objective).abs() <= 0.03,
        "steady {steady} vs predicted {}",
        plan.objective
    );
    assert_eq!(trace.duplicate_delivery_count, 0);

    // Pre-failure batches stay complete.
    let pre = measure_completeness(&trace, 0, 18).unwrap();
    assert!((pre - 1.0).abs() < 1e-9);

    // A window spanning the failure sits strictly between the steady states.
    let spanning = measure_completeness(&trace, 10, 40).unwrap();
    assert!(spanning < 1.0 - 1e-6 && spanning > steady + 1e-6);
}

#[test]
fn traces_are_bit_identical_for_identical_inputs() {
    let tg = merge_join().materialize().unwrap();
    let plan = plan_of(&tg, ids(&["O1#0", "O2#0", "O3#0", "O4#0"]));
    let config = base_config();
    let failure = FailureSpec {
        fail_time_ms: 15_000,
        failed_tasks: ids(&["O1#1", "O3#1"]),
    };
    let a = run(&tg, &plan, &config, &failure).unwrap();
    let b = run(&tg, &plan, &config, &failure).unwrap();
    assert_eq!(a, b);

    let mut other = config.clone();
    other.seed = 12;
    let c = run(&tg, &plan, &other, &failure).unwrap();
    assert_ne!(a.events, c.events);
}

#[test]
fn active_takeover_beats_passive_recovery() {
    let tg = merge_join().materialize().unwrap();
    let failure = FailureSpec::single(30_000, TaskId::new("O3", 0));
    let config = base_config();

    // Replicated: recovered via takeover.
    let active_plan = plan_of(&tg, ids(&["O3#0"]));
    let active_trace = run(&tg, &active_plan, &config, &failure).unwrap();
    let (active, passive) = recovery_latency_summary(&active_trace).unwrap();
    let active = active.expect("active recovery happened");
    assert!(passive.is_none());

    // Unreplicated: recovered from the checkpoint.
    let passive_plan = plan_of(&tg, BTreeSet::new());
    let passive_trace = run(&tg, &passive_plan, &config, &failure).unwrap();
    let (none, passive) = recovery_latency_summary(&passive_trace).unwrap();
    assert!(none.is_none());
    let passive = passive.expect("passive recovery happened");

    assert!(
        active.mean < passive.mean,
        "active {} >= passive {}",
        active.mean,
        passive.mean
    );
    assert_eq!(active_trace.duplicate_delivery_count, 0);
    assert_eq!(passive_trace.duplicate_delivery_count, 0);
}

#[test]
fn passive_latency_grows_with_the_checkpoint_interval() {
    let tg = merge_join().materialize().unwrap();
    let plan = plan_of(&tg, BTreeSet::new());
    let failure = FailureSpec::single(61_000, TaskId::new("O3", 1));
    let mut last = 0.0;
    for checkpoint_ms in [10_000, 20_000, 30_000] {
        let mut config = base_config();
        config.checkpoint_interval_ms = checkpoint_ms;
        let trace = run(&tg, &plan, &config, &failure).unwrap();
        let (_, passive) = recovery_latency_summary(&trace).unwrap();
        let mean = passive.expect("passive recovery").mean;
        assert!(
            mean >= last,
            "checkpoint {checkpoint_ms}: {mean} < previous {last}"
        );
        last = mean;
    }
}

#[test]
fn half_replicated_plan_orders_latency_classes() {
    let tg = merge_join().materialize().unwrap();
    // Half the tasks replicated, fail everything.
    let half = ids(&["O1#0", "O1#2", "O2#0", "O3#0", "O4#0"]);
    let plan = plan_of(&tg, half.clone());
    let failure = FailureSpec {
        fail_time_ms: 30_000,
        failed_tasks: all_tasks(&tg),
    };
    let trace = run(&tg, &plan, &base_config(), &failure).unwrap();
    let (active, passive) = recovery_latency_summary(&trace).unwrap();
    let (active, passive) = (active.unwrap(), passive.unwrap());
    let all: Vec<f64> = trace.recovery.values().map(|r| r.latency_ms).collect();
    let overall = all.iter().sum::<f64>() / all.len() as f64;
    assert!(active.mean < overall);
    assert!(overall < passive.mean);
    assert_eq!(trace.duplicate_delivery_count, 0);
}

#[test]
fn correlated_failure_waits_on_upstream_synchronization() {
    let tg = merge_join().materialize().unwrap();
    let plan = plan_of(&tg, BTreeSet::new());
    let task = TaskId::new("O3", 0);

    let single = run(
        &tg,
        &plan,
        &base_config(),
        &FailureSpec::single(30_000, task.clone()),
    )
    .unwrap();
    let correlated = run(
        &tg,
        &plan,
        &base_config(),
        &FailureSpec {
            fail_time_ms: 30_000,
            failed_tasks: ids(&["O1#0", "O1#1", "O3#0"]),
        },
    )
    .unwrap();

    let single_latency = single.recovery[&task].latency_ms;
    let correlated_latency = correlated.recovery[&task].latency_ms;
    assert!(
        correlated_latency >= single_latency,
        "correlated {correlated_latency} < single {single_latency}"
    );
}

#[test]
fn replica_resends_are_deduplicated() {
    let tg = fig2(InputKind::Correlated).materialize().unwrap();
    let plan = plan_of(&tg, all_tasks(&tg));
    // A sync interval above the batch interval leaves unsynced output in
    // the replica buffer for the takeover to flush.
    let mut config = base_config();
    config.replica_sync_interval_ms = 5_000;
    let failure = FailureSpec::single(33_500, TaskId::new("O1", 0));
    let trace = run(&tg, &plan, &config, &failure).unwrap();
    assert_eq!(trace.duplicate_delivery_count, 0);
    assert!(
        trace
            .events
            .iter()
            .any(|e| e.kind == ppa_core::simulator::EventKind::DuplicateDropped),
        "takeover should have re-sent something for downstream to drop"
    );
    // All batches eventually complete in full.
    let last = *trace.batch_completeness.keys().last().unwrap();
    let mean = measure_completeness(&trace, 0, last).unwrap();
    assert!((mean - 1.0).abs() < 1e-9);
}

#[test]
fn failure_after_run_end_is_rejected() {
    let tg = fig2(InputKind::Correlated).materialize().unwrap();
    let plan = plan_of(&tg, BTreeSet::new());
    let config = base_config();
    let failure = FailureSpec::single(config.run_length_ms + 1, TaskId::new("O1", 0));
    assert!(run(&tg, &plan, &config, &failure).is_err());
}

#[test]
fn csv_exports_have_the_documented_shape() {
    let tg = fig2(InputKind::Correlated).materialize().unwrap();
    let plan = plan_of(&tg, all_tasks(&tg));
    let failure = FailureSpec::single(10_000, TaskId::new("O2", 1));
    let trace: SimulationTrace = run(&tg, &plan, &base_config(), &failure).unwrap();

    let events = trace.events_csv();
    assert!(events.starts_with("time_ms,event,task,detail\n"));
    assert!(events.contains("task_failed"));

    let completeness = trace.completeness_csv();
    assert!(completeness.starts_with("batch_id,completeness\n"));

    let summary = SimSummary::from_trace(&trace);
    let json: serde_json::Value = serde_json::from_str(&summary.to_json()).unwrap();
    assert!(json["predicted_of"].is_number());
    assert!(json["active_latency"]["mean"].is_number());
}

//! Information-loss propagation and output fidelity.
//!
//! Every substream inherits the output loss of its producer. A task's input
//! stream loss is the rate-weighted mean of its substream losses; a failed
//! task has output loss 1; otherwise a correlated-input task composes stream
//! losses multiplicatively (`1 - prod(1 - il)`) and an independent-input
//! task takes the rate-weighted mean. Output fidelity is one minus the
//! rate-weighted loss over the sink tasks.
//!
//! Internal completeness is the same propagation with every operator treated
//! as independent-input; it ignores stream correlation.

mod mctree;

pub use mctree::{
    enumerate_mc_trees, enumerate_mc_trees_with_cap, min_tree_size, MCTree, McTreeError,
    DEFAULT_TREE_CAP,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::topology::{InputKind, Role, TaskGraph, TaskId, UnknownTask};

/// A set of simultaneously failed tasks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FailureScenario {
    pub failed: BTreeSet<TaskId>,
}

impl FailureScenario {
    pub fn new(failed: impl IntoIterator<Item = TaskId>) -> Self {
        Self {
            failed: failed.into_iter().collect(),
        }
    }

    pub fn none() -> Self {
        Self::default()
    }

    /// Worst case for a plan: every task outside the plan fails.
    pub fn complement_of(tg: &TaskGraph, plan: &BTreeSet<TaskId>) -> Self {
        Self {
            failed: tg
                .tasks()
                .iter()
                .map(|t| t.id.clone())
                .filter(|id| !plan.contains(id))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum FidelityError {
    #[error(transparent)]
    UnknownTask(#[from] UnknownTask),
}

/// Output fidelity plus the per-task and per-stream losses it was derived
/// from. Stream indices follow the order of [`TaskGraph::inputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub of: f64,
    pub per_task_output_loss: BTreeMap<TaskId, f64>,
    pub per_stream_input_loss: BTreeMap<(TaskId, usize), f64>,
}

impl FidelityReport {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct StreamRow<'a> {
            task: &'a TaskId,
            stream: usize,
            il: f64,
        }
        #[derive(Serialize)]
        struct File<'a> {
            of: f64,
            per_task: BTreeMap<String, f64>,
            per_stream: Vec<StreamRow<'a>>,
        }
        let file = File {
            of: self.of,
            per_task: self
                .per_task_output_loss
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            per_stream: self
                .per_stream_input_loss
                .iter()
                .map(|((task, stream), il)| StreamRow {
                    task,
                    stream: *stream,
                    il: *il,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("report serialization")
    }
}

/// Rate-weighted mean loss of one input stream (its substreams' rates and
/// losses). A stream with no effective input counts as fully lost.
pub fn input_stream_loss(substreams: &[(f64, f64)]) -> f64 {
    let total: f64 = substreams.iter().map(|(rate, _)| rate).sum();
    if total <= 0.0 {
        return 1.0;
    }
    substreams.iter().map(|(rate, il)| rate * il).sum::<f64>() / total
}

/// Output loss of a task given its per-stream `(rate, loss)` pairs.
pub fn task_output_loss(kind: InputKind, streams: &[(f64, f64)], failed: bool) -> f64 {
    if failed {
        return 1.0;
    }
    match kind {
        InputKind::Correlated => {
            1.0 - streams.iter().map(|(_, il)| 1.0 - il).product::<f64>()
        }
        InputKind::Independent => {
            let total: f64 = streams.iter().map(|(rate, _)| rate).sum();
            if total <= 0.0 {
                return 1.0;
            }
            streams.iter().map(|(rate, il)| rate * il).sum::<f64>() / total
        }
    }
}

/// Propagates losses from sources to sinks and reports them.
pub fn output_fidelity(
    tg: &TaskGraph,
    scenario: &FailureScenario,
) -> Result<FidelityReport, FidelityError> {
    let failed = failed_mask(tg, scenario)?;
    let mut il = vec![0.0; tg.len()];
    let mut per_stream = BTreeMap::new();
    let of = propagate(tg, &failed, false, &mut il, Some(&mut per_stream));
    let per_task_output_loss = tg
        .tasks()
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.clone(), il[i]))
        .collect();
    Ok(FidelityReport {
        of,
        per_task_output_loss,
        per_stream_input_loss: per_stream,
    })
}

/// Output fidelity with every operator treated as independent-input.
pub fn internal_completeness(
    tg: &TaskGraph,
    scenario: &FailureScenario,
) -> Result<f64, FidelityError> {
    let failed = failed_mask(tg, scenario)?;
    let mut il = vec![0.0; tg.len()];
    Ok(propagate(tg, &failed, true, &mut il, None))
}

/// The planning objective: output fidelity when every task outside the plan
/// fails.
pub fn plan_fidelity(tg: &TaskGraph, plan: &BTreeSet<TaskId>) -> Result<f64, FidelityError> {
    for id in plan {
        tg.index_of(id).ok_or_else(|| UnknownTask(id.clone()))?;
    }
    let mut failed = vec![true; tg.len()];
    for id in plan {
        failed[tg.index_of(id).expect("checked above")] = false;
    }
    let mut il = vec![0.0; tg.len()];
    Ok(propagate(tg, &failed, false, &mut il, None))
}

fn failed_mask(tg: &TaskGraph, scenario: &FailureScenario) -> Result<Vec<bool>, FidelityError> {
    let mut failed = vec![false; tg.len()];
    for idx in tg.resolve(&scenario.failed)? {
        failed[idx] = true;
    }
    Ok(failed)
}

/// Index-level evaluator shared by the planners: output fidelity for a
/// failed-task mask, reusing the caller's loss buffer.
pub(crate) fn of_for_mask(tg: &TaskGraph, failed: &[bool], il: &mut Vec<f64>) -> f64 {
    propagate(tg, failed, false, il, None)
}

/// Evaluates a plan given as an index mask (`replicated[i]`).
pub(crate) fn of_for_plan_mask(tg: &TaskGraph, replicated: &[bool], il: &mut Vec<f64>) -> f64 {
    let failed: Vec<bool> = replicated.iter().map(|r| !r).collect();
    propagate(tg, &failed, false, il, None)
}

fn propagate(
    tg: &TaskGraph,
    failed: &[bool],
    all_independent: bool,
    il: &mut Vec<f64>,
    mut per_stream: Option<&mut BTreeMap<(TaskId, usize), f64>>,
) -> f64 {
    il.clear();
    il.resize(tg.len(), 0.0);
    let subs = tg.substreams();
    let mut stream_buf: Vec<(f64, f64)> = Vec::new();

    for &ti in tg.topo_order() {
        let task = tg.task(ti);
        let inputs = tg.inputs(ti);
        let loss = if failed[ti] {
            1.0
        } else if inputs.is_empty() {
            // Alive sources lose nothing; anything else without effective
            // input is fully lost.
            if task.role == Role::Source {
                0.0
            } else {
                1.0
            }
        } else {
            stream_buf.clear();
            for (stream_idx, stream) in inputs.iter().enumerate() {
                let mut rate_sum = 0.0;
                let mut weighted = 0.0;
                for &si in &stream.substreams {
                    let s = &subs[si];
                    rate_sum += s.rate;
                    weighted += s.rate * il[s.from];
                }
                let stream_loss = if rate_sum > 0.0 {
                    weighted / rate_sum
                } else {
                    1.0
                };
                if let Some(map) = per_stream.as_deref_mut() {
                    map.insert((task.id.clone(), stream_idx), stream_loss);
                }
                stream_buf.push((rate_sum, stream_loss));
            }
            let kind = if all_independent {
                InputKind::Independent
            } else {
                task.input_kind
            };
            task_output_loss(kind, &stream_buf, false)
        };
        il[ti] = loss;
    }

    let mut rate_sum = 0.0;
    let mut weighted = 0.0;
    for &si in tg.sink_tasks() {
        rate_sum += tg.task(si).output_rate;
        weighted += tg.task(si).output_rate * il[si];
    }
    if rate_sum > 0.0 {
        1.0 - weighted / rate_sum
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{chain_full, diamond, fig2};
    use crate::topology::InputKind;

    fn ids(items: &[&str]) -> BTreeSet<TaskId> {
        items.iter().map(|s| TaskId::parse(s).unwrap()).collect()
    }

    #[test]
    fn stream_loss_examples() {
        assert_eq!(input_stream_loss(&[(3.0, 0.0), (2.0, 1.0)]), 2.0 / 5.0);
        assert_eq!(input_stream_loss(&[(5.0, 0.0), (7.0, 0.0)]), 0.0);
        assert_eq!(input_stream_loss(&[(1.0, 1.0), (1.0, 1.0)]), 1.0);
        assert_eq!(input_stream_loss(&[(0.0, 0.0), (0.0, 0.3)]), 1.0);
    }

    #[test]
    fn output_loss_examples() {
        let streams = [(3.0, 0.0), (5.0, 2.0 / 5.0)];
        assert_eq!(
            task_output_loss(InputKind::Correlated, &streams, false),
            2.0 / 5.0
        );
        assert_eq!(
            task_output_loss(InputKind::Independent, &streams, false),
            1.0 / 4.0
        );
        assert_eq!(task_output_loss(InputKind::Correlated, &streams, true), 1.0);
        assert_eq!(task_output_loss(InputKind::Independent, &[], false), 1.0);
    }

    #[test]
    fn fig2_correlated_fidelity() {
        let tg = fig2(InputKind::Correlated).materialize().unwrap();
        let report =
            output_fidelity(&tg, &FailureScenario::new(ids(&["O2#1"]))).unwrap();
        assert_eq!(report.of, 1.0 - 2.0 / 5.0);
        assert_eq!(
            report.per_task_output_loss[&TaskId::new("O3", 0)],
            2.0 / 5.0
        );
        assert_eq!(
            report.per_stream_input_loss[&(TaskId::new("O3", 0), 1)],
            2.0 / 5.0
        );
        assert_eq!(report.per_stream_input_loss[&(TaskId::new("O3", 0), 0)], 0.0);
    }

    #[test]
    fn no_failures_is_perfect_and_total_failure_is_zero() {
        let tg = fig2(InputKind::Correlated).materialize().unwrap();
        assert_eq!(
            output_fidelity(&tg, &FailureScenario::none()).unwrap().of,
            1.0
        );
        let all: BTreeSet<TaskId> = tg.tasks().iter().map(|t| t.id.clone()).collect();
        assert_eq!(
            output_fidelity(&tg, &FailureScenario::new(all)).unwrap().of,
            0.0
        );
    }

    #[test]
    fn fig2_independent_plan_objective() {
        let tg = fig2(InputKind::Independent).materialize().unwrap();
        let plan = ids(&["O3#0", "O2#0", "O1#1"]);
        assert_eq!(plan_fidelity(&tg, &plan).unwrap(), 5.0 / 8.0);
        let all: BTreeSet<TaskId> = tg.tasks().iter().map(|t| t.id.clone()).collect();
        assert_eq!(plan_fidelity(&tg, &all).unwrap(), 1.0);
        assert_eq!(plan_fidelity(&tg, &BTreeSet::new()).unwrap(), 0.0);
    }

    #[test]
    fn internal_completeness_ignores_correlation() {
        let tg = fig2(InputKind::Correlated).materialize().unwrap();
        let scenario = FailureScenario::new(ids(&["O2#1"]));
        assert_eq!(internal_completeness(&tg, &scenario).unwrap(), 0.75);
        assert_eq!(
            internal_completeness(&tg, &FailureScenario::none()).unwrap(),
            1.0
        );

        // Without correlated operators IC and OF coincide.
        let tg = chain_full().materialize().unwrap();
        for failed in [ids(&["A#0"]), ids(&["B#1"]), ids(&["A#0", "C#1"])] {
            let scenario = FailureScenario::new(failed);
            assert_eq!(
                internal_completeness(&tg, &scenario).unwrap(),
                output_fidelity(&tg, &scenario).unwrap().of
            );
        }
    }

    #[test]
    fn report_recomputes_its_own_of() {
        let tg = diamond(InputKind::Correlated).materialize().unwrap();
        let report =
            output_fidelity(&tg, &FailureScenario::new(ids(&["A#0", "J#1"]))).unwrap();
        let mut rate = 0.0;
        let mut weighted = 0.0;
        for &si in tg.sink_tasks() {
            let t = tg.task(si);
            rate += t.output_rate;
            weighted += t.output_rate * report.per_task_output_loss[&t.id];
        }
        assert!((report.of - (1.0 - weighted / rate)).abs() < 1e-12);
    }

    #[test]
    fn unknown_task_is_an_error() {
        let tg = fig2(InputKind::Correlated).materialize().unwrap();
        let bogus = FailureScenario::new(ids(&["Zed#0"]));
        assert!(output_fidelity(&tg, &bogus).is_err());
        assert!(plan_fidelity(&tg, &ids(&["Zed#0"])).is_err());
    }

    #[test]
    fn report_serializes_in_stable_shape() {
        let tg = fig2(InputKind::Correlated).materialize().unwrap();
        let report =
            output_fidelity(&tg, &FailureScenario::new(ids(&["O2#1"]))).unwrap();
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert!(json["of"].is_number());
        assert!(json["per_task"]["O3#0"].is_number());
        assert_eq!(json["per_stream"][0]["task"], "O3#0");
    }
}

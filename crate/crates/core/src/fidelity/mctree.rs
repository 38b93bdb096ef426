//! Enumeration of minimal complete task trees.
//!
//! A minimal complete tree is a smallest task set that can sustain sink
//! output on its own: one sink task plus, recursively, one connected
//! upstream task per input stream for correlated-input tasks (the product
//! across streams) or one connected upstream task from the union of all
//! substreams for independent-input tasks. Zero-rate substreams carry
//! nothing and are excluded from branching. Branches reconverging on a
//! shared upstream task collapse into one set and are counted once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::topology::{InputKind, TaskGraph, TaskId};

pub const DEFAULT_TREE_CAP: usize = 1_000_000;

/// A minimal complete tree, stored as its task set plus the sink task it
/// sustains.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MCTree {
    pub tasks: BTreeSet<TaskId>,
    pub sink_task: TaskId,
}

impl MCTree {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

impl fmt::Display for MCTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        write!(f, "{{")?;
        for t in &self.tasks {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{t}")?;
            first = false;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, Error)]
pub enum McTreeError {
    #[error("tree count would exceed the cap of {cap} trees")]
    CapExceeded { cap: usize },
}

/// Enumerates all minimal complete trees with the default cap.
pub fn enumerate_mc_trees(tg: &TaskGraph) -> Result<Vec<MCTree>, McTreeError> {
    enumerate_mc_trees_with_cap(tg, DEFAULT_TREE_CAP)
}

/// Enumerates all minimal complete trees, failing fast if an upper bound on
/// the count exceeds `cap`. Result is duplicate-free and ordered
/// lexicographically by task-id set.
pub fn enumerate_mc_trees_with_cap(
    tg: &TaskGraph,
    cap: usize,
) -> Result<Vec<MCTree>, McTreeError> {
    // Cheap bound first: counts without reconvergence dedup, so it can only
    // overestimate.
    let bounds = count_bounds(tg);
    let mut sink_total: u128 = 0;
    for &si in tg.sink_tasks() {
        sink_total = sink_total.saturating_add(bounds[si]);
    }
    if sink_total > cap as u128 || bounds.iter().any(|&b| b > cap as u128) {
        return Err(McTreeError::CapExceeded { cap });
    }

    let mut memo: Vec<Option<Vec<BTreeSet<usize>>>> = vec![None; tg.len()];
    let mut out: BTreeSet<BTreeSet<TaskId>> = BTreeSet::new();
    let mut sink_of: BTreeMap<BTreeSet<TaskId>, TaskId> = BTreeMap::new();
    for &si in tg.sink_tasks() {
        for set in trees_of(tg, si, &mut memo) {
            let ids: BTreeSet<TaskId> =
                set.iter().map(|&i| tg.task(i).id.clone()).collect();
            sink_of
                .entry(ids.clone())
                .or_insert_with(|| tg.task(si).id.clone());
            out.insert(ids);
        }
    }
    Ok(out
        .into_iter()
        .map(|tasks| {
            let sink_task = sink_of[&tasks].clone();
            MCTree { tasks, sink_task }
        })
        .collect())
}

/// Number of tasks in the smallest complete tree, if any exists.
///
/// Computed by dynamic programming over the DAG; when correlated branches
/// share upstream tasks the shared part is counted per branch, so on such
/// graphs this is an upper bound on the true minimum.
pub fn min_tree_size(tg: &TaskGraph) -> Option<usize> {
    let mut size: Vec<Option<usize>> = vec![None; tg.len()];
    for &ti in tg.topo_order() {
        let inputs = tg.inputs(ti);
        let s = if inputs.is_empty() {
            Some(1)
        } else {
            match tg.task(ti).input_kind {
                InputKind::Independent => {
                    let mut best: Option<usize> = None;
                    for stream in inputs {
                        for &si in &stream.substreams {
                            let sub = &tg.substreams()[si];
                            if sub.rate <= 0.0 {
                                continue;
                            }
                            if let Some(up) = size[sub.from] {
                                best = Some(best.map_or(up, |b: usize| b.min(up)));
                            }
                        }
                    }
                    best.map(|b| b + 1)
                }
                InputKind::Correlated => {
                    let mut total = 1usize;
                    let mut feasible = true;
                    for stream in inputs {
                        let mut best: Option<usize> = None;
                        for &si in &stream.substreams {
                            let sub = &tg.substreams()[si];
                            if sub.rate <= 0.0 {
                                continue;
                            }
                            if let Some(up) = size[sub.from] {
                                best = Some(best.map_or(up, |b: usize| b.min(up)));
                            }
                        }
                        match best {
                            Some(b) => total += b,
                            None => {
                                feasible = false;
                                break;
                            }
                        }
                    }
                    feasible.then_some(total)
                }
            }
        };
        size[ti] = s;
    }
    tg.sink_tasks().iter().filter_map(|&si| size[si]).min()
}

fn count_bounds(tg: &TaskGraph) -> Vec<u128> {
    let mut bound = vec![0u128; tg.len()];
    for &ti in tg.topo_order() {
        let inputs = tg.inputs(ti);
        bound[ti] = if inputs.is_empty() {
            1
        } else {
            match tg.task(ti).input_kind {
                InputKind::Independent => {
                    let mut sum: u128 = 0;
                    for stream in inputs {
                        for &si in &stream.substreams {
                            let sub = &tg.substreams()[si];
                            if sub.rate > 0.0 {
                                sum = sum.saturating_add(bound[sub.from]);
                            }
                        }
                    }
                    sum
                }
                InputKind::Correlated => {
                    let mut product: u128 = 1;
                    for stream in inputs {
                        let mut sum: u128 = 0;
                        for &si in &stream.substreams {
                            let sub = &tg.substreams()[si];
                            if sub.rate > 0.0 {
                                sum = sum.saturating_add(bound[sub.from]);
                            }
                        }
                        product = product.saturating_mul(sum);
                    }
                    product
                }
            }
        };
    }
    bound
}

fn trees_of(
    tg: &TaskGraph,
    ti: usize,
    memo: &mut Vec<Option<Vec<BTreeSet<usize>>>>,
) -> Vec<BTreeSet<usize>> {
    if let Some(cached) = &memo[ti] {
        return cached.clone();
    }
    let inputs = tg.inputs(ti);
    let result: Vec<BTreeSet<usize>> = if inputs.is_empty() {
        vec![BTreeSet::from([ti])]
    } else {
        match tg.task(ti).input_kind {
            InputKind::Independent => {
                let mut acc: BTreeSet<BTreeSet<usize>> = BTreeSet::new();
                for stream in inputs.to_vec() {
                    for si in stream.substreams {
                        let sub = tg.substreams()[si].clone();
                        if sub.rate <= 0.0 {
                            continue;
                        }
                        for mut set in trees_of(tg, sub.from, memo) {
                            set.insert(ti);
                            acc.insert(set);
                        }
                    }
                }
                acc.into_iter().collect()
            }
            InputKind::Correlated => {
                let mut acc: Vec<BTreeSet<usize>> = vec![BTreeSet::from([ti])];
                for stream in inputs.to_vec() {
                    let mut options: BTreeSet<BTreeSet<usize>> = BTreeSet::new();
                    for si in stream.substreams {
                        let sub = tg.substreams()[si].clone();
                        if sub.rate <= 0.0 {
                            continue;
                        }
                        for set in trees_of(tg, sub.from, memo) {
                            options.insert(set);
                        }
                    }
                    if options.is_empty() {
                        acc.clear();
                        break;
                    }
                    let mut next: BTreeSet<BTreeSet<usize>> = BTreeSet::new();
                    for base in &acc {
                        for opt in &options {
                            let mut merged = base.clone();
                            merged.extend(opt.iter().copied());
                            next.insert(merged);
                        }
                    }
                    acc = next.into_iter().collect();
                }
                acc
            }
        }
    };
    memo[ti] = Some(result.clone());
    result
}

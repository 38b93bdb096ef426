//! Replication-plan construction.
//!
//! Five planners share one objective, [`plan_fidelity`][crate::fidelity::plan_fidelity]:
//! an exhaustive oracle, the exact tree-union dynamic program, a per-task
//! greedy ranking, and the structure-aware pipeline (unit/segment planning
//! for structured topologies, per-operator seeding for full topologies, and
//! sub-topology decomposition gluing them together).
//!
//! All planners are deterministic: ties on objective are broken by smaller
//! task-set cardinality, then lexicographic task-id order.

mod decompose;
mod dp;
mod exhaustive;
mod full;
mod greedy;
mod structure_aware;
mod structured;

pub use decompose::{decompose, SubKind, SubTopology};
pub use dp::plan_dp;
pub use exhaustive::{plan_exhaustive, EXHAUSTIVE_TASK_GUARD};
pub use full::plan_full;
pub use greedy::plan_greedy;
pub use structure_aware::plan_structure_aware;
pub use structured::{plan_structured, split_units, CandidateExpansion, Unit};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fidelity::{FidelityError, McTreeError};
use crate::topology::{TaskGraph, TaskId, UnknownTask};

/// A set of actively replicated tasks together with the budget it was
/// planned under and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationPlan {
    pub tasks: BTreeSet<TaskId>,
    pub budget: usize,
    pub objective: f64,
}

impl ReplicationPlan {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

#[derive(Debug, Clone, Error)]
pub enum PlannerError {
    #[error(transparent)]
    UnknownTask(#[from] UnknownTask),
    #[error(transparent)]
    Fidelity(#[from] FidelityError),
    #[error(transparent)]
    TreeCap(#[from] McTreeError),
    #[error("task count {0} exceeds the exhaustive-search guard of {EXHAUSTIVE_TASK_GUARD}")]
    TooManyTasks(usize),
    #[error("budget {budget} exceeds task count {tasks}")]
    BudgetTooLarge { budget: usize, tasks: usize },
    #[error("not a structured topology: {0}")]
    NotStructured(String),
    #[error("not a full topology: {0}")]
    NotFull(String),
}

/// The planner algorithms exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Dp,
    Greedy,
    Sa,
    Exhaustive,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Dp,
        Algorithm::Greedy,
        Algorithm::Sa,
        Algorithm::Exhaustive,
    ];
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Algorithm::Dp => "dp",
            Algorithm::Greedy => "greedy",
            Algorithm::Sa => "sa",
            Algorithm::Exhaustive => "exhaustive",
        };
        f.write_str(s)
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dp" => Ok(Algorithm::Dp),
            "greedy" => Ok(Algorithm::Greedy),
            "sa" => Ok(Algorithm::Sa),
            "exhaustive" => Ok(Algorithm::Exhaustive),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Runs the named algorithm with the given budget.
pub fn plan_with(
    tg: &TaskGraph,
    algorithm: Algorithm,
    budget: usize,
) -> Result<ReplicationPlan, PlannerError> {
    match algorithm {
        Algorithm::Dp => plan_dp(tg, budget),
        Algorithm::Greedy => Ok(plan_greedy(tg, budget)),
        Algorithm::Sa => plan_structure_aware(tg, budget),
        Algorithm::Exhaustive => plan_exhaustive(tg, budget),
    }
}

/// On-disk plan representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub budget: usize,
    pub tasks: Vec<String>,
    pub objective: f64,
    pub algorithm: String,
    pub topology_digest: String,
}

impl PlanFile {
    pub fn new(plan: &ReplicationPlan, algorithm: &str, topology_digest: &str) -> Self {
        Self {
            budget: plan.budget,
            tasks: plan.tasks.iter().map(|t| t.to_string()).collect(),
            objective: plan.objective,
            algorithm: algorithm.to_string(),
            topology_digest: topology_digest.to_string(),
        }
    }

    pub fn task_set(&self) -> Result<BTreeSet<TaskId>, crate::topology::TaskIdParseError> {
        self.tasks.iter().map(|t| TaskId::parse(t)).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Shared tie-break: higher objective, then fewer tasks, then
/// lexicographically smaller task-id set.
pub(crate) fn better_plan(
    a_objective: f64,
    a_tasks: &BTreeSet<TaskId>,
    b_objective: f64,
    b_tasks: &BTreeSet<TaskId>,
) -> bool {
    if a_objective != b_objective {
        return a_objective > b_objective;
    }
    if a_tasks.len() != b_tasks.len() {
        return a_tasks.len() < b_tasks.len();
    }
    a_tasks < b_tasks
}

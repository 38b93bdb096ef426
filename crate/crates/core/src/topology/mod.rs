//! Operator/task DAG model for parallel stream-processing topologies.
//!
//! A [`Topology`] describes logical operators, their parallelism, and the
//! partitioning pattern on each operator-to-operator edge. Materializing a
//! topology expands every operator into its parallel tasks and wires the
//! task-level substreams with concrete rates (see [`TaskGraph`]).

mod generator;
mod json;
mod taskgraph;
mod validate;

pub use generator::{generate_random, GeneratorSpec, TopologyKind, WorkloadSkew};
pub use json::{load_topology, save_topology, topology_digest, TopologyFileError};
pub use taskgraph::{EdgeMeta, InputStream, Substream, TaskGraph, TaskNode, UnknownTask};
pub use validate::{validate, Violation, ViolationKind};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of one parallel task: operator id plus zero-based task index.
///
/// Rendered as `<operator-id>#<index>`, e.g. `O2#1`. The derived ordering
/// (operator id first, then index) is the canonical task order used for all
/// deterministic tie-breaks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId {
    pub operator: String,
    pub index: usize,
}

impl TaskId {
    pub fn new(operator: impl Into<String>, index: usize) -> Self {
        Self {
            operator: operator.into(),
            index,
        }
    }

    /// Parses the `<operator-id>#<index>` rendering.
    pub fn parse(s: &str) -> Result<Self, TaskIdParseError> {
        let (op, idx) = s
            .rsplit_once('#')
            .ok_or_else(|| TaskIdParseError(s.to_string()))?;
        if op.is_empty() {
            return Err(TaskIdParseError(s.to_string()));
        }
        let index = idx
            .parse::<usize>()
            .map_err(|_| TaskIdParseError(s.to_string()))?;
        Ok(Self::new(op, index))
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.operator, self.index)
    }
}

#[derive(Debug, Clone, Error)]
#[error("malformed task id: {0:?} (expected <operator>#<index>)")]
pub struct TaskIdParseError(pub String);

/// How a task consumes its input streams.
///
/// Correlated-input operators compute over the join of their input streams;
/// independent-input operators compute over their union. The distinction
/// changes how information loss composes across streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Independent,
    Correlated,
}

/// Position of an operator in the dataflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Internal,
    Sink,
}

/// A logical operator with a fixed degree of parallelism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub id: String,
    pub parallelism: usize,
    pub input_kind: InputKind,
    pub role: Role,
    pub selectivity: f64,
}

impl OperatorSpec {
    pub fn new(id: impl Into<String>, parallelism: usize, input_kind: InputKind, role: Role) -> Self {
        Self {
            id: id.into(),
            parallelism,
            input_kind,
            role,
            selectivity: 1.0,
        }
    }

    pub fn with_selectivity(mut self, selectivity: f64) -> Self {
        self.selectivity = selectivity;
        self
    }
}

/// Partitioning pattern of one operator-to-operator edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    OneToOne,
    Split,
    Merge,
    Full,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pattern::OneToOne => "one_to_one",
            Pattern::Split => "split",
            Pattern::Merge => "merge",
            Pattern::Full => "full",
        };
        f.write_str(s)
    }
}

/// Explicit wiring for one upstream task within an edge: the downstream task
/// indices it feeds and optional non-negative rate weights (same length as
/// `down`). Without weights the task's output is split uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub up: usize,
    pub down: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// A directed edge between two operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEdge {
    pub from: String,
    pub to: String,
    pub pattern: Pattern,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connections: Option<Vec<Connection>>,
}

impl PartitionEdge {
    pub fn new(from: impl Into<String>, to: impl Into<String>, pattern: Pattern) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            pattern,
            connections: None,
        }
    }
}

/// A complete logical topology: operators, edges, and per-source-task rates
/// (tuples per logical second).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub operators: Vec<OperatorSpec>,
    pub edges: Vec<PartitionEdge>,
    pub source_rates: BTreeMap<TaskId, f64>,
}

impl Topology {
    pub fn new(
        operators: Vec<OperatorSpec>,
        edges: Vec<PartitionEdge>,
        source_rates: BTreeMap<TaskId, f64>,
    ) -> Self {
        let mut t = Self {
            operators,
            edges,
            source_rates,
        };
        t.normalize();
        t
    }

    /// A source operator's input kind is irrelevant; normalize it so equal
    /// topologies compare equal.
    fn normalize(&mut self) {
        for op in &mut self.operators {
            if op.role == Role::Source {
                op.input_kind = InputKind::Independent;
            }
        }
    }

    pub fn operator(&self, id: &str) -> Option<&OperatorSpec> {
        self.operators.iter().find(|o| o.id == id)
    }

    /// Total number of tasks across all operators.
    pub fn task_count(&self) -> usize {
        self.operators.iter().map(|o| o.parallelism).sum()
    }

    /// Errors of the first violation, if any. Convenience over [`validate`].
    pub fn check(&self) -> Result<(), TopologyError> {
        let violations = validate(self);
        match violations.into_iter().next() {
            None => Ok(()),
            Some(v) => Err(TopologyError::Invalid(v)),
        }
    }

    /// Materializes the task-level graph. Fails on the first validation
    /// violation.
    pub fn materialize(&self) -> Result<TaskGraph, TopologyError> {
        self.check()?;
        Ok(taskgraph::build(self))
    }
}

#[derive(Debug, Clone, Error)]
pub enum TopologyError {
    #[error("invalid topology: {0}")]
    Invalid(Violation),
    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),
}

impl serde::Serialize for TaskId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for TaskId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        TaskId::parse(&s).map_err(serde::de::Error::custom)
    }
}

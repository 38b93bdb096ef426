//! Small hand-built topologies used across the test suites and docs.

use std::collections::BTreeMap;

use crate::topology::{
    InputKind, OperatorSpec, PartitionEdge, Pattern, Role, TaskId, Topology,
};

/// Two source operators merging into a single sink task.
///
/// `O1` has tasks with rates 1 and 2, `O2` has tasks with rates 3 and 2; the
/// sink `O3` has parallelism 1 and the given input kind. Failing `O2#1`
/// yields an input loss of 2/5 on the `O2` stream, and a sink output loss of
/// 2/5 (correlated sink) or 1/4 (independent sink).
pub fn fig2(sink_kind: InputKind) -> Topology {
    Topology::new(
        vec![
            OperatorSpec::new("O1", 2, InputKind::Independent, Role::Source),
            OperatorSpec::new("O2", 2, InputKind::Independent, Role::Source),
            OperatorSpec::new("O3", 1, sink_kind, Role::Sink),
        ],
        vec![
            PartitionEdge::new("O1", "O3", Pattern::Merge),
            PartitionEdge::new("O2", "O3", Pattern::Merge),
        ],
        BTreeMap::from([
            (TaskId::new("O1", 0), 1.0),
            (TaskId::new("O1", 1), 2.0),
            (TaskId::new("O2", 0), 3.0),
            (TaskId::new("O2", 1), 2.0),
        ]),
    )
}

/// Two sources fanning fully into a two-task join, which fans fully into a
/// single sink task. With a correlated join every complete task tree spans
/// all four operators; with an independent join one source branch suffices.
pub fn diamond(join_kind: InputKind) -> Topology {
    Topology::new(
        vec![
            OperatorSpec::new("A", 2, InputKind::Independent, Role::Source),
            OperatorSpec::new("B", 2, InputKind::Independent, Role::Source),
            OperatorSpec::new("J", 2, join_kind, Role::Internal),
            OperatorSpec::new("K", 1, InputKind::Independent, Role::Sink),
        ],
        vec![
            PartitionEdge::new("A", "J", Pattern::Full),
            PartitionEdge::new("B", "J", Pattern::Full),
            PartitionEdge::new("J", "K", Pattern::Full),
        ],
        BTreeMap::from([
            (TaskId::new("A", 0), 1.0),
            (TaskId::new("A", 1), 1.0),
            (TaskId::new("B", 0), 1.0),
            (TaskId::new("B", 1), 1.0),
        ]),
    )
}

/// Three-operator chain with full partitioning everywhere and parallelism 2.
pub fn chain_full() -> Topology {
    Topology::new(
        vec![
            OperatorSpec::new("A", 2, InputKind::Independent, Role::Source),
            OperatorSpec::new("B", 2, InputKind::Independent, Role::Internal),
            OperatorSpec::new("C", 2, InputKind::Independent, Role::Sink),
        ],
        vec![
            PartitionEdge::new("A", "B", Pattern::Full),
            PartitionEdge::new("B", "C", Pattern::Full),
        ],
        BTreeMap::from([(TaskId::new("A", 0), 4.0), (TaskId::new("A", 1), 6.0)]),
    )
}

/// Structured two-unit shape: a merge into a middle operator that splits
/// towards the sink. The merge edge is a unit boundary.
pub fn merge_split_chain() -> Topology {
    Topology::new(
        vec![
            OperatorSpec::new("O1", 2, InputKind::Independent, Role::Source),
            OperatorSpec::new("O2", 1, InputKind::Independent, Role::Internal),
            OperatorSpec::new("O3", 3, InputKind::Independent, Role::Sink),
        ],
        vec![
            PartitionEdge::new("O1", "O2", Pattern::Merge),
            PartitionEdge::new("O2", "O3", Pattern::Split),
        ],
        BTreeMap::from([(TaskId::new("O1", 0), 2.0), (TaskId::new("O1", 1), 4.0)]),
    )
}

/// Structured join shape: `O1` merges into the join `O3`, `O2` feeds it
/// one-to-one. The merge edge into the join is a unit boundary.
pub fn merge_join() -> Topology {
    Topology::new(
        vec![
            OperatorSpec::new("O1", 4, InputKind::Independent, Role::Source),
            OperatorSpec::new("O2", 2, InputKind::Independent, Role::Source),
            OperatorSpec::new("O3", 2, InputKind::Correlated, Role::Internal),
            OperatorSpec::new("O4", 1, InputKind::Independent, Role::Sink),
        ],
        vec![
            PartitionEdge::new("O1", "O3", Pattern::Merge),
            PartitionEdge::new("O2", "O3", Pattern::OneToOne),
            PartitionEdge::new("O3", "O4", Pattern::Merge),
        ],
        BTreeMap::from([
            (TaskId::new("O1", 0), 1.0),
            (TaskId::new("O1", 1), 2.0),
            (TaskId::new("O1", 2), 3.0),
            (TaskId::new("O1", 3), 4.0),
            (TaskId::new("O2", 0), 5.0),
            (TaskId::new("O2", 1), 6.0),
        ]),
    )
}

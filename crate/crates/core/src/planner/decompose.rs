//! Decomposition of a general topology into full and structured
//! sub-topologies.
//!
//! Exploration walks upstream from the sink. Each popped start operator
//! roots a sub-topology whose kind is fixed by its surroundings: full when
//! the root's in-edges and its feeders' in-edges are all full, structured
//! otherwise. A full sub-topology absorbs upstream operators across full
//! edges as long as the absorbed operator's own inputs are all full; a
//! structured sub-topology absorbs across non-full edges anywhere and full
//! edges only into its root. Operators refused by these rules become new
//! start points, which places every boundary on a full edge.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::topology::{Pattern, TaskGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubKind {
    Full,
    Structured,
}

/// A connected operator set planned independently of its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTopology {
    pub id: usize,
    pub kind: SubKind,
    pub operators: BTreeSet<String>,
    pub operator_count: usize,
}

pub fn decompose(tg: &TaskGraph) -> Vec<SubTopology> {
    let ops = tg.operator_ids();
    let op_ord: BTreeMap<&str, usize> =
        ops.iter().enumerate().map(|(i, o)| (o.as_str(), i)).collect();

    let mut in_edges: Vec<Vec<usize>> = vec![Vec::new(); ops.len()];
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); ops.len()];
    for e in tg.active_edges() {
        let meta = tg.edge_meta(e);
        in_edges[op_ord[meta.to_op.as_str()]].push(e);
        out_edges[op_ord[meta.from_op.as_str()]].push(e);
    }
    let pattern = |e: usize| tg.edge_meta(e).pattern;
    let from_of = |e: usize| op_ord[tg.edge_meta(e).from_op.as_str()];
    let all_inputs_full =
        |o: usize| in_edges[o].iter().all(|&e| pattern(e) == Pattern::Full);

    let mut start_points: VecDeque<usize> = tg
        .sink_tasks()
        .iter()
        .map(|&t| op_ord[tg.task(t).id.operator.as_str()])
        .collect::<BTreeSet<usize>>()
        .into_iter()
        .collect();
    let mut assigned = vec![false; ops.len()];
    let mut subs: Vec<SubTopology> = Vec::new();

    while let Some(root) = start_points.pop_front() {
        if assigned[root] {
            continue;
        }
        let kind = if !in_edges[root].is_empty()
            && all_inputs_full(root)
            && in_edges[root].iter().all(|&e| all_inputs_full(from_of(e)))
        {
            SubKind::Full
        } else {
            SubKind::Structured
        };

        let mut members: BTreeSet<usize> = BTreeSet::from([root]);
        assigned[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &e in &in_edges[v] {
                let u = from_of(e);
                if assigned[u] {
                    continue;
                }
                let absorb = match kind {
                    SubKind::Full => pattern(e) == Pattern::Full && all_inputs_full(u),
                    SubKind::Structured => pattern(e) != Pattern::Full || v == root,
                };
                // Absorbing must not create an interior full edge: every
                // edge from `u` into a member other than the root has to be
                // compatible with the sub's kind.
                let absorb = absorb
                    && out_edges[u].iter().all(|&oe| {
                        let w = op_ord[tg.edge_meta(oe).to_op.as_str()];
                        if !members.contains(&w) {
                            return true;
                        }
                        match kind {
                            SubKind::Full => pattern(oe) == Pattern::Full,
                            SubKind::Structured => {
                                pattern(oe) != Pattern::Full || w == root
                            }
                        }
                    });
                if absorb {
                    assigned[u] = true;
                    members.insert(u);
                    queue.push_back(u);
                } else {
                    start_points.push_back(u);
                }
            }
        }

        subs.push(SubTopology {
            id: subs.len(),
            kind,
            operator_count: members.len(),
            operators: members.into_iter().map(|o| ops[o].clone()).collect(),
        });
    }

    // Operators unreachable from any sink (possible only on restricted
    // graphs) each form their own structured sub-topology.
    for (o, name) in ops.iter().enumerate() {
        if !assigned[o] {
            subs.push(SubTopology {
                id: subs.len(),
                kind: SubKind::Structured,
                operators: BTreeSet::from([name.clone()]),
                operator_count: 1,
            });
        }
    }

    subs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{chain_full, merge_join};
    use crate::topology::{
        InputKind, OperatorSpec, PartitionEdge, Role, TaskId, Topology,
    };
    use std::collections::BTreeMap as Map;

    fn names(sub: &SubTopology) -> Vec<&str> {
        sub.operators.iter().map(|s| s.as_str()).collect()
    }

    #[test]
    fn all_full_topology_is_one_full_sub() {
        let tg = chain_full().materialize().unwrap();
        let subs = decompose(&tg);
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].kind, SubKind::Full);
        assert_eq!(subs[0].operator_count, 3);
    }

    #[test]
    fn structured_head_full_tail_splits_in_two() {
        // O1 -one_to_one-> O2 -one_to_one-> O3 -full-> O4 -full-> O5 -full-> O6
        let mut ops = vec![OperatorSpec::new("O1", 2, InputKind::Independent, Role::Source)];
        for i in 2..6 {
            ops.push(OperatorSpec::new(
                format!("O{i}"),
                2,
                InputKind::Independent,
                Role::Internal,
            ));
        }
        ops.push(OperatorSpec::new("O6", 2, InputKind::Independent, Role::Sink));
        let edges = vec![
            PartitionEdge::new("O1", "O2", Pattern::OneToOne),
            PartitionEdge::new("O2", "O3", Pattern::OneToOne),
            PartitionEdge::new("O3", "O4", Pattern::Full),
            PartitionEdge::new("O4", "O5", Pattern::Full),
            PartitionEdge::new("O5", "O6", Pattern::Full),
        ];
        let t = Topology::new(
            ops,
            edges,
            Map::from([(TaskId::new("O1", 0), 1.0), (TaskId::new("O1", 1), 2.0)]),
        );
        let tg = t.materialize().unwrap();
        let subs = decompose(&tg);
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[0].kind, SubKind::Full);
        assert_eq!(names(&subs[0]), vec!["O4", "O5", "O6"]);
        assert_eq!(subs[1].kind, SubKind::Structured);
        assert_eq!(names(&subs[1]), vec!["O1", "O2", "O3"]);
    }

    #[test]
    fn merge_chain_with_full_into_sink_stays_one_structured_sub() {
        // O1 -merge-> O2 -full-> O3(sink): the full edge enters the root, so
        // the whole thing is one structured sub-topology.
        let t = Topology::new(
            vec![
                OperatorSpec::new("O1", 4, InputKind::Independent, Role::Source),
                OperatorSpec::new("O2", 2, InputKind::Independent, Role::Internal),
                OperatorSpec::new("O3", 1, InputKind::Independent, Role::Sink),
            ],
            vec![
                PartitionEdge::new("O1", "O2", Pattern::Merge),
                PartitionEdge::new("O2", "O3", Pattern::Full),
            ],
            Map::from([
                (TaskId::new("O1", 0), 1.0),
                (TaskId::new("O1", 1), 1.0),
                (TaskId::new("O1", 2), 1.0),
                (TaskId::new("O1", 3), 1.0),
            ]),
        );
        let tg = t.materialize().unwrap();
        let subs = decompose(&tg);
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].kind, SubKind::Structured);
        assert_eq!(subs[0].operator_count, 3);
    }

    #[test]
    fn boundaries_sit_on_full_edges() {
        let tg = merge_join().materialize().unwrap();
        // No full edges at all: everything is one structured sub.
        let subs = decompose(&tg);
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].kind, SubKind::Structured);
    }
}

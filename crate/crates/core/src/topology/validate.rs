//! Structural validation of a [`Topology`].
//!
//! Violations are data, not failures: [`validate`] reports every problem it
//! finds and an empty list means the topology is valid.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use super::{Connection, Pattern, Role, TaskId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    UnknownOperator,
    DuplicateOperator,
    DuplicateEdge,
    SelfSubscription,
    ParallelismZero,
    NegativeSelectivity,
    SourceHasInputs,
    SinkHasOutputs,
    Cycle,
    UnreachableFromSource,
    CannotReachSink,
    NoSink,
    MultipleSinks,
    NoSource,
    CardinalityMismatch,
    BadConnectionMap,
    BadSourceRate,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::UnknownOperator => "unknown operator",
            ViolationKind::DuplicateOperator => "duplicate operator",
            ViolationKind::DuplicateEdge => "duplicate edge",
            ViolationKind::SelfSubscription => "self-subscription",
            ViolationKind::ParallelismZero => "parallelism must be >= 1",
            ViolationKind::NegativeSelectivity => "negative selectivity",
            ViolationKind::SourceHasInputs => "source operator has incoming edges",
            ViolationKind::SinkHasOutputs => "sink operator has outgoing edges",
            ViolationKind::Cycle => "cycle in operator graph",
            ViolationKind::UnreachableFromSource => "operator unreachable from any source",
            ViolationKind::CannotReachSink => "operator cannot reach the sink",
            ViolationKind::NoSink => "no sink operator",
            ViolationKind::MultipleSinks => "multiple sink operators",
            ViolationKind::NoSource => "no source operator",
            ViolationKind::CardinalityMismatch => "cardinality mismatch",
            ViolationKind::BadConnectionMap => "bad connection map",
            ViolationKind::BadSourceRate => "bad source rate",
        };
        f.write_str(s)
    }
}

/// One broken invariant, with enough context to locate it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl Violation {
    fn new(kind: ViolationKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)
    }
}

impl std::error::Error for Violation {}

/// Checks every model invariant and returns all violations found.
pub fn validate(topology: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut ids = BTreeSet::new();
    for op in &topology.operators {
        if !ids.insert(op.id.as_str()) {
            out.push(Violation::new(
                ViolationKind::DuplicateOperator,
                format!("operator {} declared twice", op.id),
            ));
        }
        if op.parallelism == 0 {
            out.push(Violation::new(
                ViolationKind::ParallelismZero,
                format!("operator {}", op.id),
            ));
        }
        if !(op.selectivity >= 0.0) {
            out.push(Violation::new(
                ViolationKind::NegativeSelectivity,
                format!("operator {} has selectivity {}", op.id, op.selectivity),
            ));
        }
    }

    let index: BTreeMap<&str, usize> = topology
        .operators
        .iter()
        .enumerate()
        .map(|(i, o)| (o.id.as_str(), i))
        .collect();

    let mut seen_edges = BTreeSet::new();
    let mut in_deg = vec![0usize; topology.operators.len()];
    let mut out_deg = vec![0usize; topology.operators.len()];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); topology.operators.len()];
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); topology.operators.len()];

    for edge in &topology.edges {
        let from = index.get(edge.from.as_str());
        let to = index.get(edge.to.as_str());
        if from.is_none() {
            out.push(Violation::new(
                ViolationKind::UnknownOperator,
                format!("edge references unknown operator {}", edge.from),
            ));
        }
        if to.is_none() {
            out.push(Violation::new(
                ViolationKind::UnknownOperator,
                format!("edge references unknown operator {}", edge.to),
            ));
        }
        if edge.from == edge.to {
            out.push(Violation::new(
                ViolationKind::SelfSubscription,
                format!("operator {} subscribes to itself", edge.from),
            ));
            continue;
        }
        let (Some(&f), Some(&t)) = (from, to) else {
            continue;
        };
        if !seen_edges.insert((f, t)) {
            out.push(Violation::new(
                ViolationKind::DuplicateEdge,
                format!("duplicate edge {} -> {}", edge.from, edge.to),
            ));
            continue;
        }
        in_deg[t] += 1;
        out_deg[f] += 1;
        succ[f].push(t);
        pred[t].push(f);

        check_edge_wiring(topology, edge, f, t, &mut out);
    }

    // Role constraints.
    let mut sinks = Vec::new();
    let mut sources = Vec::new();
    for (i, op) in topology.operators.iter().enumerate() {
        match op.role {
            Role::Source => {
                sources.push(i);
                if in_deg[i] > 0 {
                    out.push(Violation::new(
                        ViolationKind::SourceHasInputs,
                        format!("operator {}", op.id),
                    ));
                }
            }
            Role::Sink => {
                sinks.push(i);
                if out_deg[i] > 0 {
                    out.push(Violation::new(
                        ViolationKind::SinkHasOutputs,
                        format!("operator {}", op.id),
                    ));
                }
            }
            Role::Internal => {}
        }
    }
    if sources.is_empty() {
        out.push(Violation::new(ViolationKind::NoSource, "topology"));
    }
    match sinks.len() {
        0 => out.push(Violation::new(ViolationKind::NoSink, "topology")),
        1 => {}
        _ => out.push(Violation::new(
            ViolationKind::MultipleSinks,
            format!("{} sink operators", sinks.len()),
        )),
    }

    // Acyclicity via Kahn's algorithm.
    let mut deg = in_deg.clone();
    let mut queue: VecDeque<usize> = deg
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| i)
        .collect();
    let mut visited = 0;
    while let Some(v) = queue.pop_front() {
        visited += 1;
        for &w in &succ[v] {
            deg[w] -= 1;
            if deg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    let acyclic = visited == topology.operators.len();
    if !acyclic {
        out.push(Violation::new(
            ViolationKind::Cycle,
            "operator graph contains a cycle",
        ));
    }

    // Reachability (only meaningful on acyclic graphs).
    if acyclic {
        let reach_fwd = reach(&succ, &sources);
        for (i, op) in topology.operators.iter().enumerate() {
            if op.role != Role::Source && !reach_fwd[i] {
                out.push(Violation::new(
                    ViolationKind::UnreachableFromSource,
                    format!("operator {}", op.id),
                ));
            }
        }
        let reach_bwd = reach(&pred, &sinks);
        for (i, op) in topology.operators.iter().enumerate() {
            if op.role != Role::Sink && !reach_bwd[i] {
                out.push(Violation::new(
                    ViolationKind::CannotReachSink,
                    format!("operator {}", op.id),
                ));
            }
        }
    }

    // Source rates: every source task has a positive rate, nothing else does.
    let mut expected: BTreeSet<TaskId> = BTreeSet::new();
    for op in &topology.operators {
        if op.role == Role::Source {
            for k in 0..op.parallelism {
                expected.insert(TaskId::new(op.id.clone(), k));
            }
        }
    }
    for (task, &rate) in &topology.source_rates {
        if !expected.contains(task) {
            out.push(Violation::new(
                ViolationKind::BadSourceRate,
                format!("{task} is not a source task"),
            ));
        } else if !(rate > 0.0) {
            out.push(Violation::new(
                ViolationKind::BadSourceRate,
                format!("{task} has non-positive rate {rate}"),
            ));
        }
    }
    for task in &expected {
        if !topology.source_rates.contains_key(task) {
            out.push(Violation::new(
                ViolationKind::BadSourceRate,
                format!("missing rate for source task {task}"),
            ));
        }
    }

    out
}

/// Pattern cardinality rules, applied to the default wiring or to an explicit
/// connection map when one is present.
fn check_edge_wiring(
    topology: &Topology,
    edge: &super::PartitionEdge,
    f: usize,
    t: usize,
    out: &mut Vec<Violation>,
) {
    let n1 = topology.operators[f].parallelism;
    let n2 = topology.operators[t].parallelism;
    if n1 == 0 || n2 == 0 {
        return; // reported separately
    }
    let label = format!("{} -> {} ({})", edge.from, edge.to, edge.pattern);

    match &edge.connections {
        None => match edge.pattern {
            Pattern::OneToOne => {
                if n1 != n2 {
                    out.push(Violation::new(
                        ViolationKind::CardinalityMismatch,
                        format!("{label}: one_to_one requires equal parallelism, got {n1} and {n2}"),
                    ));
                }
            }
            Pattern::Split => {
                if n2 % n1 != 0 || n2 / n1 < 2 {
                    out.push(Violation::new(
                        ViolationKind::CardinalityMismatch,
                        format!(
                            "{label}: default split wiring needs downstream parallelism to be a multiple (>= 2x) of upstream, got {n1} and {n2}"
                        ),
                    ));
                }
            }
            Pattern::Merge => {
                if n1 % n2 != 0 || n1 / n2 < 2 {
                    out.push(Violation::new(
                        ViolationKind::CardinalityMismatch,
                        format!(
                            "{label}: default merge wiring needs upstream parallelism to be a multiple (>= 2x) of downstream, got {n1} and {n2}"
                        ),
                    ));
                }
            }
            Pattern::Full => {}
        },
        Some(conns) => check_explicit_map(conns, edge.pattern, n1, n2, &label, out),
    }
}

fn check_explicit_map(
    conns: &[Connection],
    pattern: Pattern,
    n1: usize,
    n2: usize,
    label: &str,
    out: &mut Vec<Violation>,
) {
    let mut up_seen = vec![false; n1];
    let mut down_in_deg = vec![0usize; n2];

    for c in conns {
        if c.up >= n1 {
            out.push(Violation::new(
                ViolationKind::BadConnectionMap,
                format!("{label}: upstream index {} out of range", c.up),
            ));
            return;
        }
        if up_seen[c.up] {
            out.push(Violation::new(
                ViolationKind::BadConnectionMap,
                format!("{label}: upstream task {} listed twice", c.up),
            ));
            return;
        }
        up_seen[c.up] = true;
        let mut local = BTreeSet::new();
        for &d in &c.down {
            if d >= n2 {
                out.push(Violation::new(
                    ViolationKind::BadConnectionMap,
                    format!("{label}: downstream index {d} out of range"),
                ));
                return;
            }
            if !local.insert(d) {
                out.push(Violation::new(
                    ViolationKind::BadConnectionMap,
                    format!("{label}: downstream task {d} listed twice for upstream {}", c.up),
                ));
                return;
            }
            down_in_deg[d] += 1;
        }
        if let Some(w) = &c.weights {
            if w.len() != c.down.len() {
                out.push(Violation::new(
                    ViolationKind::BadConnectionMap,
                    format!("{label}: weights length {} != fan-out {}", w.len(), c.down.len()),
                ));
                return;
            }
            if w.iter().any(|x| !(*x >= 0.0)) {
                out.push(Violation::new(
                    ViolationKind::BadConnectionMap,
                    format!("{label}: negative weight for upstream {}", c.up),
                ));
                return;
            }
            if !c.down.is_empty() && w.iter().sum::<f64>() <= 0.0 {
                out.push(Violation::new(
                    ViolationKind::BadConnectionMap,
                    format!("{label}: weights for upstream {} sum to zero", c.up),
                ));
                return;
            }
        }
    }
    if let Some(missing) = up_seen.iter().position(|s| !s) {
        out.push(Violation::new(
            ViolationKind::BadConnectionMap,
            format!("{label}: upstream task {missing} has no connections"),
        ));
        return;
    }

    let fan_out = |c: &Connection| c.down.len();
    match pattern {
        Pattern::OneToOne => {
            if n1 != n2 {
                out.push(Violation::new(
                    ViolationKind::CardinalityMismatch,
                    format!("{label}: one_to_one requires equal parallelism, got {n1} and {n2}"),
                ));
                return;
            }
            for c in conns {
                if c.down != [c.up] {
                    out.push(Violation::new(
                        ViolationKind::CardinalityMismatch,
                        format!("{label}: one_to_one requires task {0} -> task {0}", c.up),
                    ));
                    return;
                }
            }
        }
        Pattern::Split => {
            for c in conns {
                if fan_out(c) < 2 {
                    out.push(Violation::new(
                        ViolationKind::CardinalityMismatch,
                        format!("{label}: split requires every upstream task to feed >= 2 downstream tasks"),
                    ));
                    return;
                }
            }
            if down_in_deg.iter().any(|&d| d != 1) {
                out.push(Violation::new(
                    ViolationKind::CardinalityMismatch,
                    format!("{label}: split requires every downstream task to have exactly one feeder"),
                ));
            }
        }
        Pattern::Merge => {
            for c in conns {
                if fan_out(c) != 1 {
                    out.push(Violation::new(
                        ViolationKind::CardinalityMismatch,
                        format!("{label}: merge requires every upstream task to feed exactly one downstream task"),
                    ));
                    return;
                }
            }
            if down_in_deg.iter().any(|&d| d < 2) {
                out.push(Violation::new(
                    ViolationKind::CardinalityMismatch,
                    format!("{label}: merge requires every downstream task to have >= 2 feeders"),
                ));
            }
        }
        Pattern::Full => {
            if conns.iter().any(|c| fan_out(c) != n2) {
                out.push(Violation::new(
                    ViolationKind::CardinalityMismatch,
                    format!("{label}: full requires every upstream task to feed all {n2} downstream tasks"),
                ));
            }
        }
    }
}

fn reach(adj: &[Vec<usize>], starts: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack: Vec<usize> = starts.to_vec();
    for &s in starts {
        seen[s] = true;
    }
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

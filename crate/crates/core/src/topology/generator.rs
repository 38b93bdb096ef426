//! Seeded random topology generation.
//!
//! Topologies are drawn as inward trees converging on a single sink: every
//! non-sink operator feeds exactly one downstream operator, so joins appear
//! as operators with several upstream feeders. Parallelism is assigned from
//! the sink upward so that each edge can be given a pattern whose
//! cardinality rules hold by construction. Full topologies come out as
//! chains with full partitioning on every edge.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{
    Connection, InputKind, OperatorSpec, PartitionEdge, Pattern, Role, TaskId, Topology,
    TopologyError,
};

/// Distribution of per-task workload within an operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkloadSkew {
    Uniform,
    /// Task `k` carries weight `(k+1)^-s`.
    Zipfian(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    /// Non-full patterns everywhere, full allowed only on edges into the sink.
    Structured,
    /// A chain with full partitioning on every edge.
    Full,
    /// Any pattern anywhere.
    Mixed,
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    /// Inclusive range for the number of operators (sources and sink included).
    pub operator_count: (usize, usize),
    /// Inclusive range for per-operator parallelism.
    pub parallelism: (usize, usize),
    pub skew: WorkloadSkew,
    /// Fraction of multi-input internal operators marked correlated.
    pub join_fraction: f64,
    pub kind: TopologyKind,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check(&self) -> Result<(), TopologyError> {
        let (olo, ohi) = self.operator_count;
        let (plo, phi) = self.parallelism;
        if olo > ohi || olo == 0 {
            return Err(TopologyError::InfeasibleSpec(format!(
                "empty operator count range {olo}:{ohi}"
            )));
        }
        if ohi < 2 {
            return Err(TopologyError::InfeasibleSpec(
                "need at least 2 operators (a source and a sink)".into(),
            ));
        }
        if plo > phi || plo == 0 {
            return Err(TopologyError::InfeasibleSpec(format!(
                "empty parallelism range {plo}:{phi}"
            )));
        }
        if !(0.0..=1.0).contains(&self.join_fraction) {
            return Err(TopologyError::InfeasibleSpec(format!(
                "join fraction {} outside [0,1]",
                self.join_fraction
            )));
        }
        if let WorkloadSkew::Zipfian(s) = self.skew {
            if !(s > 0.0) {
                return Err(TopologyError::InfeasibleSpec(format!(
                    "zipfian parameter {s} must be > 0"
                )));
            }
        }
        Ok(())
    }
}

/// Generates a topology. Deterministic for a fixed spec and seed; the result
/// always passes validation.
pub fn generate_random(spec: &GeneratorSpec) -> Result<Topology, TopologyError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let (olo, ohi) = spec.operator_count;
    let n = rng.gen_range(olo.max(2)..=ohi);

    // Shape: operator i feeds target[i] (> i); the last operator is the sink.
    let targets: Vec<usize> = match spec.kind {
        TopologyKind::Full => (0..n - 1).map(|i| i + 1).collect(),
        _ => (0..n - 1).map(|i| rng.gen_range(i + 1..n)).collect(),
    };
    let mut in_deg = vec![0usize; n];
    for &t in &targets {
        in_deg[t] += 1;
    }

    // Parallelism and patterns, sink first. target[i] > i guarantees the
    // downstream end is already fixed when operator i is processed.
    let (plo, phi) = spec.parallelism;
    let mut par = vec![0usize; n];
    let mut patterns = vec![Pattern::Full; n.saturating_sub(1)];
    par[n - 1] = rng.gen_range(plo..=phi);
    for i in (0..n - 1).rev() {
        let down = par[targets[i]];
        let into_sink = targets[i] == n - 1;
        let (pattern, p) = match spec.kind {
            TopologyKind::Full => (Pattern::Full, rng.gen_range(plo..=phi)),
            TopologyKind::Structured => {
                pick_pattern(&mut rng, down, plo, phi, into_sink, false)
            }
            TopologyKind::Mixed => pick_pattern(&mut rng, down, plo, phi, true, true),
        };
        patterns[i] = pattern;
        par[i] = p;
    }

    // Correlated joins: a fixed fraction of the multi-input operators.
    let mut multi: Vec<usize> = (0..n).filter(|&i| in_deg[i] >= 2).collect();
    let picks = ((spec.join_fraction * multi.len() as f64).round() as usize).min(multi.len());
    multi.shuffle(&mut rng);
    let mut correlated = vec![false; n];
    for &op in multi.iter().take(picks) {
        correlated[op] = true;
    }

    // Per-task workload weights.
    let weight = |k: usize| -> f64 {
        match spec.skew {
            WorkloadSkew::Uniform => 1.0,
            WorkloadSkew::Zipfian(s) => ((k + 1) as f64).powf(-s),
        }
    };

    let mut operators = Vec::with_capacity(n);
    let mut source_rates = BTreeMap::new();
    for i in 0..n {
        let id = format!("O{}", i + 1);
        let role = if i == n - 1 {
            Role::Sink
        } else if in_deg[i] == 0 {
            Role::Source
        } else {
            Role::Internal
        };
        let kind = if correlated[i] {
            InputKind::Correlated
        } else {
            InputKind::Independent
        };
        if role == Role::Source {
            let base = rng.gen_range(50.0..150.0);
            for k in 0..par[i] {
                source_rates.insert(TaskId::new(id.clone(), k), base * weight(k));
            }
        }
        operators.push(OperatorSpec::new(id, par[i], kind, role));
    }

    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n - 1 {
        let mut edge = PartitionEdge::new(
            operators[i].id.clone(),
            operators[targets[i]].id.clone(),
            patterns[i],
        );
        // Under a skewed workload the fan-out edges carry explicit weights so
        // that downstream tasks inherit the skew.
        if matches!(spec.skew, WorkloadSkew::Zipfian(_)) {
            edge.connections =
                skewed_connections(patterns[i], par[i], par[targets[i]], &weight);
        }
        edges.push(edge);
    }

    let topology = Topology::new(operators, edges, source_rates);
    debug_assert!(super::validate(&topology).is_empty());
    Ok(topology)
}

/// Chooses a pattern for an edge whose downstream parallelism is fixed, and
/// draws a compatible upstream parallelism from the range. One-to-one is
/// always available, so the choice set is never empty. Split and merge stay
/// strictly away from the degenerate corner where they coincide with full.
fn pick_pattern<R: Rng>(
    rng: &mut R,
    down: usize,
    plo: usize,
    phi: usize,
    allow_full: bool,
    full_anywhere: bool,
) -> (Pattern, usize) {
    let mut options: Vec<(Pattern, Vec<usize>)> = vec![(Pattern::OneToOne, vec![down])];

    // split: downstream = k * upstream with k >= 2, upstream >= 2
    let split_ups: Vec<usize> = (plo.max(2)..=phi)
        .filter(|&u| down % u == 0 && down / u >= 2)
        .collect();
    if !split_ups.is_empty() {
        options.push((Pattern::Split, split_ups));
    }

    // merge: upstream = k * downstream with k >= 2, downstream >= 2
    if down >= 2 {
        let merge_ups: Vec<usize> = (plo..=phi)
            .filter(|&u| u % down == 0 && u / down >= 2)
            .collect();
        if !merge_ups.is_empty() {
            options.push((Pattern::Merge, merge_ups));
        }
    }

    if allow_full || full_anywhere {
        options.push((Pattern::Full, (plo..=phi).collect()));
    }

    let (pattern, ups) = &options[rng.gen_range(0..options.len())];
    let up = ups[rng.gen_range(0..ups.len())];
    (*pattern, up)
}

/// Reproduces the default wiring of a pattern with explicit zipf-shaped
/// weights on every fan-out. Patterns with fan-out 1 need no weights.
fn skewed_connections(
    pattern: Pattern,
    n1: usize,
    n2: usize,
    weight: &dyn Fn(usize) -> f64,
) -> Option<Vec<Connection>> {
    match pattern {
        Pattern::OneToOne | Pattern::Merge => None,
        Pattern::Split => {
            let block = n2 / n1;
            Some(
                (0..n1)
                    .map(|u| {
                        let down: Vec<usize> = (u * block..(u + 1) * block).collect();
                        let weights = down.iter().map(|&d| weight(d)).collect();
                        Connection {
                            up: u,
                            down,
                            weights: Some(weights),
                        }
                    })
                    .collect(),
            )
        }
        Pattern::Full => Some(
            (0..n1)
                .map(|u| Connection {
                    up: u,
                    down: (0..n2).collect(),
                    weights: Some((0..n2).map(weight).collect()),
                })
                .collect(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::validate;

    fn spec(kind: TopologyKind) -> GeneratorSpec {
        GeneratorSpec {
            operator_count: (5, 10),
            parallelism: (2, 6),
            skew: WorkloadSkew::Zipfian(0.1),
            join_fraction: 0.5,
            kind,
            seed: 7,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = spec(TopologyKind::Mixed);
        assert_eq!(generate_random(&s).unwrap(), generate_random(&s).unwrap());
        let other = generate_random(&s.clone().with_seed(8)).unwrap();
        assert_ne!(generate_random(&s).unwrap(), other);
    }

    #[test]
    fn full_kind_is_an_all_full_chain() {
        let s = GeneratorSpec {
            operator_count: (3, 3),
            parallelism: (2, 2),
            skew: WorkloadSkew::Uniform,
            join_fraction: 0.0,
            kind: TopologyKind::Full,
            seed: 1,
        };
        let t = generate_random(&s).unwrap();
        assert_eq!(t.operators.len(), 3);
        assert!(t.edges.iter().all(|e| e.pattern == Pattern::Full));
        assert_eq!(t.edges.len(), 2);
        let tg = t.materialize().unwrap();
        assert_eq!(tg.substreams().len(), 8);
    }

    #[test]
    fn zero_join_fraction_means_no_correlated_operators() {
        for seed in 0..20 {
            let mut s = spec(TopologyKind::Mixed).with_seed(seed);
            s.join_fraction = 0.0;
            let t = generate_random(&s).unwrap();
            assert!(t
                .operators
                .iter()
                .all(|o| o.input_kind == InputKind::Independent));
        }
    }

    #[test]
    fn structured_kind_keeps_full_out_of_the_interior() {
        for seed in 0..50 {
            let t = generate_random(&spec(TopologyKind::Structured).with_seed(seed)).unwrap();
            let sink = &t.operators.last().unwrap().id;
            for e in &t.edges {
                if e.pattern == Pattern::Full {
                    assert_eq!(&e.to, sink, "seed {seed}: full edge not into sink");
                }
            }
        }
    }

    #[test]
    fn operator_count_one_is_infeasible() {
        let mut s = spec(TopologyKind::Structured);
        s.operator_count = (1, 1);
        assert!(matches!(
            generate_random(&s),
            Err(TopologyError::InfeasibleSpec(_))
        ));
    }

    #[test]
    fn generated_topologies_validate() {
        for kind in [
            TopologyKind::Structured,
            TopologyKind::Full,
            TopologyKind::Mixed,
        ] {
            for seed in 0..100 {
                let t = generate_random(&spec(kind).with_seed(seed)).unwrap();
                let v = validate(&t);
                assert!(v.is_empty(), "kind {kind:?} seed {seed}: {v:?}");
            }
        }
    }
}

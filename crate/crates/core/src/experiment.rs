//! Batch comparison of planners over random topologies.
//!
//! An experiment sweeps one configuration family (workload skew,
//! parallelism range, structured-vs-full, or join fraction), generating a
//! fresh set of topologies per variant and planning each at every
//! replication ratio with every algorithm. The same topologies are reused
//! across ratios and algorithms so rows are directly comparable. Trials run
//! in parallel; rows and per-trial seeds are deterministic for a fixed
//! spec.

use rayon::prelude::*;

use crate::planner::{plan_with, Algorithm, PlannerError};
use crate::topology::{
    generate_random, GeneratorSpec, TaskGraph, TopologyError, TopologyKind, WorkloadSkew,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Skew,
    Parallelism,
    Structure,
    Join,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Skew,
        Family::Parallelism,
        Family::Structure,
        Family::Join,
    ];
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "skew" => Ok(Family::Skew),
            "parallelism" => Ok(Family::Parallelism),
            "structure" => Ok(Family::Structure),
            "join" => Ok(Family::Join),
            other => Err(format!("unknown family {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub base: GeneratorSpec,
    pub family: Family,
    /// Replication budgets as fractions of the task count, each in (0, 1].
    pub ratios: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub config: String,
    pub ratio: f64,
    pub algorithm: Algorithm,
    /// None when every trial was skipped (resource guards).
    pub mean_of: Option<f64>,
    pub stddev: Option<f64>,
    pub trials: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

/// The configuration variants a family compares.
fn variants(spec: &ExperimentSpec) -> Vec<(String, GeneratorSpec)> {
    let base = &spec.base;
    match spec.family {
        Family::Skew => vec![
            ("skew_uniform".to_string(), GeneratorSpec {
                skew: WorkloadSkew::Uniform,
                ..base.clone()
            }),
            ("skew_zipf_0.1".to_string(), GeneratorSpec {
                skew: WorkloadSkew::Zipfian(0.1),
                ..base.clone()
            }),
        ],
        Family::Parallelism => {
            let (lo, hi) = base.parallelism;
            let width = hi - lo + 1;
            vec![
                (format!("par_{lo}:{hi}"), base.clone()),
                (format!("par_{}:{}", lo + width, hi + width), GeneratorSpec {
                    parallelism: (lo + width, hi + width),
                    ..base.clone()
                }),
            ]
        }
        Family::Structure => vec![
            ("kind_structured".to_string(), GeneratorSpec {
                kind: TopologyKind::Structured,
                ..base.clone()
            }),
            ("kind_full".to_string(), GeneratorSpec {
                kind: TopologyKind::Full,
                ..base.clone()
            }),
        ],
        Family::Join => vec![
            ("join_0.0".to_string(), GeneratorSpec {
                join_fraction: 0.0,
                ..base.clone()
            }),
            ("join_0.5".to_string(), GeneratorSpec {
                join_fraction: 0.5,
                ..base.clone()
            }),
        ],
    }
}

/// Per-trial generator seed: decorrelated from the experiment seed and the
/// variant index, stable across runs.
fn trial_seed(seed: u64, variant: usize, trial: usize) -> u64 {
    let mut x = seed
        ^ (variant as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (trial as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRow>, ExperimentError> {
    if spec.trials == 0 {
        return Err(ExperimentError::InvalidSpec("trials must be >= 1".into()));
    }
    if spec.ratios.is_empty() || spec.algorithms.is_empty() {
        return Err(ExperimentError::InvalidSpec(
            "need at least one ratio and one algorithm".into(),
        ));
    }
    for &r in &spec.ratios {
        if !(r > 0.0 && r <= 1.0) {
            return Err(ExperimentError::InvalidSpec(format!(
                "ratio {r} outside (0, 1]"
            )));
        }
    }

    let mut rows = Vec::new();
    for (vi, (name, gen)) in variants(spec).into_iter().enumerate() {
        let graphs: Vec<TaskGraph> = (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let g = gen.clone().with_seed(trial_seed(spec.seed, vi, t));
                generate_random(&g)
                    .expect("variant spec was validated")
                    .materialize()
                    .expect("generated topologies validate")
            })
            .collect();

        for &ratio in &spec.ratios {
            for &algorithm in &spec.algorithms {
                let objectives: Vec<Option<f64>> = graphs
                    .par_iter()
                    .map(|tg| {
                        let budget = (ratio * tg.len() as f64).floor() as usize;
                        match plan_with(tg, algorithm, budget) {
                            Ok(plan) => Some(Ok(plan.objective)),
                            // Resource guards skip the trial instead of
                            // failing the sweep.
                            Err(PlannerError::TreeCap(_))
                            | Err(PlannerError::TooManyTasks(_)) => None,
                            Err(e) => Some(Err(e)),
                        }
                        .transpose()
                    })
                    .collect::<Result<_, _>>()?;
                let values: Vec<f64> = objectives.into_iter().flatten().collect();
                let (mean, stddev) = if values.is_empty() {
                    (None, None)
                } else {
                    let mean = values.iter().sum::<f64>() / values.len() as f64;
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                        / values.len() as f64;
                    (Some(mean), Some(var.sqrt()))
                };
                rows.push(ExperimentRow {
                    config: name.clone(),
                    ratio,
                    algorithm,
                    mean_of: mean,
                    stddev,
                    trials: values.len(),
                });
            }
        }
    }
    Ok(rows)
}

/// Fixed-order CSV rendering: `config,ratio,algorithm,mean_of,stddev,trials`.
pub fn rows_to_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from("config,ratio,algorithm,mean_of,stddev,trials\n");
    for r in rows {
        let mean = r
            .mean_of
            .map(|m| format!("{m:.6}"))
            .unwrap_or_else(|| "skipped".to_string());
        let sd = r
            .stddev
            .map(|s| format!("{s:.6}"))
            .unwrap_or_else(|| "skipped".to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.config, r.ratio, r.algorithm, mean, sd, r.trials
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            base: GeneratorSpec {
                operator_count: (4, 6),
                parallelism: (2, 3),
                skew: WorkloadSkew::Zipfian(0.1),
                join_fraction: 0.5,
                kind: TopologyKind::Mixed,
                seed: 0,
            },
            family: Family::Skew,
            ratios: vec![0.2, 0.4],
            algorithms: vec![Algorithm::Sa, Algorithm::Greedy],
            trials: 3,
            seed: 42,
        }
    }

    #[test]
    fn row_count_is_variants_by_ratios_by_algorithms() {
        let rows = run_experiment(&small_spec()).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = run_experiment(&small_spec()).unwrap();
        let b = run_experiment(&small_spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(rows_to_csv(&a), rows_to_csv(&b));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let rows = run_experiment(&small_spec()).unwrap();
        let csv = rows_to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "config,ratio,algorithm,mean_of,stddev,trials"
        );
        assert_eq!(lines.count(), rows.len());
    }

    #[test]
    fn bad_ratio_is_rejected() {
        let mut spec = small_spec();
        spec.ratios = vec![1.5];
        assert!(matches!(
            run_experiment(&spec),
            Err(ExperimentError::InvalidSpec(_))
        ));
    }
}

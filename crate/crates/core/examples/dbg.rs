use std::time::Instant;
use ppa_core::experiment::{run_experiment, ExperimentSpec, Family};
use ppa_core::planner::Algorithm;
use ppa_core::topology::{GeneratorSpec, TopologyKind, WorkloadSkew};

fn main() {
    let started = Instant::now();
    for family in Family::ALL {
        let spec = ExperimentSpec {
            base: GeneratorSpec {
                operator_count: (5, 10),
                parallelism: (8, 14),
                skew: WorkloadSkew::Zipfian(0.1),
                join_fraction: 0.5,
                kind: TopologyKind::Mixed,
                seed: 0,
            },
            family,
            ratios: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            algorithms: vec![Algorithm::Sa, Algorithm::Greedy],
            trials: 30,
            seed: 7,
        };
        let rows = run_experiment(&spec).unwrap();
        for pair in rows.chunks(2) {
            let (sa, gr) = (&pair[0], &pair[1]);
            let (m_sa, m_gr) = (sa.mean_of.unwrap(), gr.mean_of.unwrap());
            let flag = if m_sa >= m_gr { "ok " } else { "LOSS" };
            println!("{flag} {family:?} {} ratio {:.1}: sa {m_sa:.4} greedy {m_gr:.4} margin {:+.4}", sa.config, sa.ratio, m_sa - m_gr);
        }
    }
    println!("elapsed: {:?} (trials=30, all families)", started.elapsed());
}

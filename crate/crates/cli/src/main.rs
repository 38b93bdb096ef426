//! Command-line front end: topology generation, plan computation, fidelity
//! evaluation, simulation, and experiment sweeps.
//!
//! Exit codes: 0 success, 2 usage or validation problem, 3 resource cap
//! exceeded, 4 topology/plan digest mismatch.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use ppa_core::experiment::{rows_to_csv, run_experiment, ExperimentSpec, Family};
use ppa_core::fidelity::{internal_completeness, output_fidelity, FailureScenario};
use ppa_core::planner::{plan_exhaustive, plan_with, Algorithm, PlanFile, PlannerError};
use ppa_core::simulator::{run as run_sim, FailureSpec, SimConfig, SimSummary};
use ppa_core::topology::{
    generate_random, load_topology, save_topology, topology_digest, validate, GeneratorSpec,
    TaskGraph, TaskId, Topology, TopologyKind, WorkloadSkew,
};

const EXIT_USAGE: u8 = 2;
const EXIT_RESOURCE: u8 = 3;
const EXIT_DIGEST: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ppa",
    about = "Partially active replication planning and failure simulation for parallel stream topologies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random topology file.
    Gen(GenArgs),
    /// Compute a replication plan for a topology.
    Plan(PlanArgs),
    /// Evaluate output fidelity and internal completeness for a scenario.
    Eval(EvalArgs),
    /// Simulate a topology under a plan and a correlated failure.
    Simulate(SimulateArgs),
    /// Sweep planners over random topologies and emit a CSV matrix.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Operator count range, inclusive (e.g. 5:10).
    #[arg(long, default_value = "5:10")]
    ops: String,
    /// Parallelism range, inclusive (e.g. 2:6).
    #[arg(long, default_value = "2:6")]
    par: String,
    /// Workload skew: `uniform` or `zipf:<s>`.
    #[arg(long, default_value = "uniform")]
    skew: String,
    /// Fraction of multi-input operators marked correlated, in [0,1].
    #[arg(long, default_value_t = 0.0)]
    join: f64,
    /// Topology kind: structured, full, or mixed.
    #[arg(long, default_value = "mixed")]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    /// Planner: dp, greedy, sa, or exhaustive.
    #[arg(short, long)]
    algorithm: Algorithm,
    /// Absolute replication budget (tasks).
    #[arg(short = 'r', long, conflicts_with = "ratio")]
    budget: Option<usize>,
    /// Budget as a fraction of the task count, in (0,1].
    #[arg(long)]
    ratio: Option<f64>,
    /// Also run the exhaustive oracle and print the gap.
    #[arg(long)]
    oracle: bool,
    /// Plan output file.
    #[arg(short, long)]
    output: Option<PathBuf>,
    topology: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    topology: PathBuf,
    /// Plan file; evaluates the plan's worst-case correlated failure.
    #[arg(long, conflicts_with = "fail")]
    plan: Option<PathBuf>,
    /// Comma-separated failed tasks (e.g. O2#1,O3#0).
    #[arg(long, value_delimiter = ',')]
    fail: Option<Vec<String>>,
}

#[derive(Args)]
struct SimulateArgs {
    topology: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    /// Failure instant in logical ms.
    #[arg(long, default_value_t = 30_000)]
    fail_at: u64,
    /// Comma-separated failed tasks.
    #[arg(long, value_delimiter = ',', conflicts_with = "worst_case")]
    fail: Option<Vec<String>>,
    /// Fail every task outside the plan.
    #[arg(long)]
    worst_case: bool,
    #[arg(long, default_value_t = 1_000)]
    batch_ms: u64,
    #[arg(long, default_value_t = 10_000)]
    checkpoint_ms: u64,
    #[arg(long, default_value_t = 1_000)]
    sync_ms: u64,
    #[arg(long, default_value_t = 5_000)]
    detect_ms: u64,
    #[arg(long, default_value_t = 10)]
    tuple_cost_us: u64,
    #[arg(long, default_value_t = 5)]
    net_ms: u64,
    #[arg(long, default_value_t = 0.05)]
    restore_ms_per_unit: f64,
    #[arg(long, default_value_t = 50.0)]
    replay_bw: f64,
    #[arg(long, default_value_t = 120_000)]
    run_ms: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fabricate batch-over punctuations for failed tasks.
    #[arg(long)]
    tentative: bool,
    /// Trace CSV output.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Summary JSON output.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Per-batch completeness CSV output.
    #[arg(long)]
    completeness: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Configuration family: skew, parallelism, structure, or join.
    #[arg(long)]
    family: Family,
    #[arg(long, default_value = "5:10")]
    ops: String,
    #[arg(long, default_value = "8:14")]
    par: String,
    #[arg(long, default_value = "zipf:0.1")]
    skew: String,
    #[arg(long, default_value_t = 0.5)]
    join: f64,
    #[arg(long, default_value = "mixed")]
    kind: String,
    /// Comma-separated replication ratios in (0,1].
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
    ratios: Vec<f64>,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',', default_value = "sa,greedy")]
    algos: Vec<Algorithm>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output file (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

struct CmdError {
    code: u8,
    message: String,
}

impl CmdError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl<E: std::fmt::Display> From<E> for CmdError {
    fn from(e: E) -> Self {
        CmdError::usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn parse_range(text: &str) -> Result<(usize, usize), CmdError> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| CmdError::usage(format!("range {text:?} must look like lo:hi")))?;
    let lo = lo.parse::<usize>().map_err(|e| CmdError::usage(e.to_string()))?;
    let hi = hi.parse::<usize>().map_err(|e| CmdError::usage(e.to_string()))?;
    if lo > hi || lo == 0 {
        return Err(CmdError::usage(format!("empty range {text:?}")));
    }
    Ok((lo, hi))
}

fn parse_skew(text: &str) -> Result<WorkloadSkew, CmdError> {
    if text == "uniform" {
        return Ok(WorkloadSkew::Uniform);
    }
    if let Some(s) = text.strip_prefix("zipf:") {
        let s = s.parse::<f64>().map_err(|e| CmdError::usage(e.to_string()))?;
        if !(s > 0.0) {
            return Err(CmdError::usage("zipf parameter must be > 0"));
        }
        return Ok(WorkloadSkew::Zipfian(s));
    }
    Err(CmdError::usage(format!(
        "unknown skew {text:?}; expected uniform or zipf:<s>"
    )))
}

fn parse_kind(text: &str) -> Result<TopologyKind, CmdError> {
    match text {
        "structured" => Ok(TopologyKind::Structured),
        "full" => Ok(TopologyKind::Full),
        "mixed" => Ok(TopologyKind::Mixed),
        other => Err(CmdError::usage(format!("unknown topology kind {other:?}"))),
    }
}

/// PPA_SEED overrides any --seed flag when set.
fn effective_seed(flag: u64) -> Result<u64, CmdError> {
    match std::env::var("PPA_SEED") {
        Ok(text) => text
            .parse::<u64>()
            .map_err(|_| CmdError::usage(format!("PPA_SEED={text:?} is not a u64"))),
        Err(_) => Ok(flag),
    }
}

fn load_checked(path: &PathBuf) -> Result<(Topology, TaskGraph, String), CmdError> {
    let topology = load_topology(path)?;
    let violations = validate(&topology);
    if let Some(v) = violations.first() {
        return Err(CmdError::usage(format!(
            "invalid topology {}: {v} ({} violations total)",
            path.display(),
            violations.len()
        )));
    }
    let digest = topology_digest(&topology);
    let tg = topology.materialize()?;
    Ok((topology, tg, digest))
}

fn parse_tasks(items: &[String]) -> Result<BTreeSet<TaskId>, CmdError> {
    items
        .iter()
        .map(|t| TaskId::parse(t).map_err(|e| CmdError::usage(e.to_string())))
        .collect()
}

fn cmd_gen(args: GenArgs) -> Result<(), CmdError> {
    if !(0.0..=1.0).contains(&args.join) {
        return Err(CmdError::usage(format!(
            "--join {} outside [0,1]",
            args.join
        )));
    }
    let spec = GeneratorSpec {
        operator_count: parse_range(&args.ops)?,
        parallelism: parse_range(&args.par)?,
        skew: parse_skew(&args.skew)?,
        join_fraction: args.join,
        kind: parse_kind(&args.kind)?,
        seed: effective_seed(args.seed)?,
    };
    let topology = generate_random(&spec)?;
    save_topology(&topology, &args.output)?;
    println!("digest {}", topology_digest(&topology));
    Ok(())
}

fn cmd_plan(args: PlanArgs) -> Result<(), CmdError> {
    let (_, tg, digest) = load_checked(&args.topology)?;
    let budget = match (args.budget, args.ratio) {
        (Some(r), None) => r,
        (None, Some(ratio)) => {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(CmdError::usage(format!("--ratio {ratio} outside (0,1]")));
            }
            (ratio * tg.len() as f64).floor() as usize
        }
        _ => return Err(CmdError::usage("exactly one of -r/--budget or --ratio is required")),
    };

    let started = Instant::now();
    let plan = plan_with(&tg, args.algorithm, budget).map_err(planner_exit)?;
    let elapsed = started.elapsed();
    println!(
        "algorithm {} budget {} tasks {} objective {:.6} elapsed_ms {:.1}",
        args.algorithm,
        budget,
        plan.len(),
        plan.objective,
        elapsed.as_secs_f64() * 1e3
    );
    if args.oracle {
        let oracle = plan_exhaustive(&tg, budget).map_err(planner_exit)?;
        println!(
            "oracle objective {:.6} gap {:.6}",
            oracle.objective,
            oracle.objective - plan.objective
        );
    }
    if let Some(path) = args.output {
        let file = PlanFile::new(&plan, &args.algorithm.to_string(), &digest);
        std::fs::write(path, file.to_json())?;
    }
    Ok(())
}

fn planner_exit(e: PlannerError) -> CmdError {
    let code = match &e {
        PlannerError::TreeCap(_) | PlannerError::TooManyTasks(_) => EXIT_RESOURCE,
        _ => EXIT_USAGE,
    };
    CmdError {
        code,
        message: e.to_string(),
    }
}

fn load_plan(path: &PathBuf, digest: &str) -> Result<PlanFile, CmdError> {
    let text = std::fs::read_to_string(path)?;
    let file = PlanFile::from_json(&text)?;
    if file.topology_digest != digest {
        return Err(CmdError {
            code: EXIT_DIGEST,
            message: format!(
                "plan {} was computed for a different topology (digest {} != {})",
                path.display(),
                file.topology_digest,
                digest
            ),
        });
    }
    Ok(file)
}

fn cmd_eval(args: EvalArgs) -> Result<(), CmdError> {
    let (_, tg, digest) = load_checked(&args.topology)?;
    let scenario = match (&args.plan, &args.fail) {
        (Some(plan_path), None) => {
            let plan = load_plan(plan_path, &digest)?;
            FailureScenario::complement_of(&tg, &plan.task_set()?)
        }
        (None, Some(failed)) => FailureScenario::new(parse_tasks(failed)?),
        (None, None) => FailureScenario::none(),
        _ => unreachable!("clap conflicts_with"),
    };
    let report = output_fidelity(&tg, &scenario)?;
    let ic = internal_completeness(&tg, &scenario)?;
    println!("of {:.6} ic {:.6} failed {}", report.of, ic, scenario.failed.len());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CmdError> {
    let (_, tg, digest) = load_checked(&args.topology)?;
    let plan_file = load_plan(&args.plan, &digest)?;
    let tasks = plan_file.task_set()?;
    let objective = ppa_core::fidelity::plan_fidelity(&tg, &tasks)?;
    let plan = ppa_core::planner::ReplicationPlan {
        tasks,
        budget: plan_file.budget,
        objective,
    };

    let failed_tasks = match (&args.fail, args.worst_case) {
        (Some(failed), false) => parse_tasks(failed)?,
        (None, true) => FailureSpec::worst_case(&tg, &plan.tasks, 0).failed_tasks,
        (None, false) => BTreeSet::new(),
        (Some(_), true) => unreachable!("clap conflicts_with"),
    };
    let failure = FailureSpec {
        fail_time_ms: args.fail_at,
        failed_tasks,
    };
    let config = SimConfig {
        batch_interval_ms: args.batch_ms,
        checkpoint_interval_ms: args.checkpoint_ms,
        replica_sync_interval_ms: args.sync_ms,
        failure_detection_delay_ms: args.detect_ms,
        per_tuple_cost_us: args.tuple_cost_us,
        network_delay_ms: args.net_ms,
        restore_cost_ms_per_unit: args.restore_ms_per_unit,
        replay_bandwidth_tuples_per_ms: args.replay_bw,
        run_length_ms: args.run_ms,
        seed: effective_seed(args.seed)?,
        tentative_mode: args.tentative,
    };

    let trace = run_sim(&tg, &plan, &config, &failure)?;
    let summary = SimSummary::from_trace(&trace);
    print!("{}", summary.to_json());
    if let Some(path) = args.output {
        std::fs::write(path, trace.events_csv())?;
    }
    if let Some(path) = args.completeness {
        std::fs::write(path, trace.completeness_csv())?;
    }
    if let Some(path) = args.summary {
        std::fs::write(path, summary.to_json())?;
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), CmdError> {
    if !(0.0..=1.0).contains(&args.join) {
        return Err(CmdError::usage(format!(
            "--join {} outside [0,1]",
            args.join
        )));
    }
    let spec = ExperimentSpec {
        base: GeneratorSpec {
            operator_count: parse_range(&args.ops)?,
            parallelism: parse_range(&args.par)?,
            skew: parse_skew(&args.skew)?,
            join_fraction: args.join,
            kind: parse_kind(&args.kind)?,
            seed: 0,
        },
        family: args.family,
        ratios: args.ratios,
        algorithms: args.algos,
        trials: args.trials,
        seed: effective_seed(args.seed)?,
    };
    let rows = run_experiment(&spec)?;
    let csv = rows_to_csv(&rows);
    match args.output {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid input (instance, tables or files),
//! 2 a hard check failed, 64 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::io::{self, IoError};
use crate::model::{
    Instance, PriceAtom, ProblemInstance, SalesVector, SellerSpec, DEFAULT_MAX_STATES,
};
use crate::oracle::{self, OracleDiff, OracleState};
use crate::properties::{self, DEFAULT_COUNTEREXAMPLES};
use crate::simulator::{self, CapacityMode, SimulationConfig, SimulationReport};
use crate::solver::{self, SolveOptions, ValueTables};
use crate::stage_game::{self, NashSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

static QUIET: AtomicBool = AtomicBool::new(false);

macro_rules! say {
    ($($arg:tt)*) => {
        if !QUIET.load(Ordering::Relaxed) {
            println!($($arg)*);
        }
    };
}

const ORACLE_TOL: f64 = 1e-9;
const DEFAULT_SEED: u64 = 20_240_601;
const DEFAULT_REPLICATIONS: usize = 100_000;

#[derive(Debug, Parser)]
#[command(
    name = "knapsack-game",
    version,
    about = "Stochastic knapsack game: solve, verify, simulate"
)]
struct Cli {
    /// Suppress progress output; errors still go to stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve an instance and write value tables and policy (CSV + JSON).
    Solve(SolveArgs),
    /// Check the equilibrium of every stage game by exhaustive enumeration.
    VerifyNash(CheckArgs),
    /// Check the monotonicity and submodularity properties of the tables.
    CheckProperties(PropertyArgs),
    /// Compare solver values against the history-tree oracle (tiny instances).
    OracleCheck(OracleArgs),
    /// Monte Carlo simulation of the equilibrium policy.
    Simulate(SimulateArgs),
    /// Run the full pipeline on a built-in two-seller instance.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, or a `.csv` file path.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// JSON tables path (defaults next to the CSV).
    #[arg(long)]
    json: Option<PathBuf>,
    /// State-count budget for the solver.
    #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
    max_states: usize,
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group = ArgGroup::new("input").required(true).args(["config", "tables"]))]
struct Source {
    /// Instance file; tables are solved in-process.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tables JSON file or a directory containing tables.json.
    #[arg(long)]
    tables: Option<PathBuf>,
    /// State-count budget for the solver.
    #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
    max_states: usize,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    source: Source,
    /// JSON report path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PropertyArgs {
    #[command(flatten)]
    source: Source,
    /// JSON report path.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_COUNTEREXAMPLES)]
    counterexamples: usize,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON report path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Sampled,
    Fixed,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    replications: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "sampled")]
    mode: ModeArg,
    /// 1-based focal seller whose capacity stays at its actual value.
    #[arg(long)]
    focal: Option<usize>,
    /// JSON report path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// CSV summary path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-period trace CSV of the first replications.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    trace_replications: usize,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long, default_value = "demo-out")]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    replications: usize,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Check(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<solver::SolverError> for Failure {
    fn from(e: solver::SolverError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    QUIET.store(cli.quiet, Ordering::Relaxed);
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::VerifyNash(a) => cmd_verify_nash(&a),
        Command::CheckProperties(a) => cmd_check_properties(&a),
        Command::OracleCheck(a) => cmd_oracle_check(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Demo(a) => cmd_demo(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            EXIT_CHECK_FAILED
        }
    }
}

fn solve_instance(instance: &Instance, max_states: usize) -> Result<ValueTables, Failure> {
    Ok(solver::solve(instance, &SolveOptions { max_states })?)
}

fn load_tables(source: &Source) -> Result<ValueTables, Failure> {
    match (&source.config, &source.tables) {
        (Some(config), _) => solve_instance(&io::load_instance(config)?, source.max_states),
        (None, Some(tables)) => Ok(io::read_tables(tables, source.max_states)?),
        (None, None) => unreachable!("clap enforces the source group"),
    }
}

fn write_tables(tables: &ValueTables, csv_path: &Path, json_path: &Path) -> Outcome {
    io::write_file(csv_path, &io::tables_csv(tables)?)?;
    io::write_json(json_path, &io::tables_document(tables))?;
    say!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> Outcome {
    let instance = io::load_instance(&a.config)?;
    let tables = solve_instance(&instance, a.max_states)?;
    let (csv_path, default_json) = if a.out.extension().is_some_and(|e| e == "csv") {
        (a.out.clone(), a.out.with_extension("json"))
    } else {
        (a.out.join("tables.csv"), a.out.join("tables.json"))
    };
    let json_path = a.json.clone().unwrap_or(default_json);
    say!(
        "solved {} states ({} tie decisions)",
        tables.space().state_count(),
        tables.ties()
    );
    write_tables(&tables, &csv_path, &json_path)
}

fn nash_outcome(summary: &NashSummary) -> Outcome {
    say!(
        "stage games: {}, balance profile is an equilibrium: {}, unique and matching: {}, with ties: {}",
        summary.games, summary.balance_is_equilibrium, summary.unique_and_matching, summary.games_with_ties
    );
    if summary.passed() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "{} stage games contradict the balance rule",
            summary.failures
        )))
    }
}

fn cmd_verify_nash(a: &CheckArgs) -> Outcome {
    let tables = load_tables(&a.source)?;
    let summary = stage_game::verify_all_stages(&tables)?;
    if let Some(path) = &a.json {
        io::write_json(path, &summary)?;
    }
    nash_outcome(&summary)
}

fn property_outcome(report: &properties::PropertyReport) -> Outcome {
    say!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check("asserted properties violated".into()))
    }
}

fn cmd_check_properties(a: &PropertyArgs) -> Outcome {
    let tables = load_tables(&a.source)?;
    let report = properties::check_all(&tables, a.counterexamples);
    if let Some(path) = &a.json {
        io::write_json(path, &report)?;
    }
    property_outcome(&report)
}

#[derive(Debug, Serialize)]
struct OracleReport {
    instance_hash: String,
    tolerance: f64,
    max_abs_diff: f64,
    passed: bool,
    rows: Vec<OracleDiff>,
}

fn oracle_report(tables: &ValueTables) -> Result<OracleReport, Failure> {
    let instance = tables.instance();
    let zeros = SalesVector::zeros(instance.num_sellers());
    let mut rows = Vec::new();
    for n in 0..instance.num_sellers() {
        for c in instance.prior(n).support() {
            let solver_value = tables.value(n, 1, c, &zeros)?;
            let oracle_value = oracle::history_tree_value(instance, c, n)
                .map_err(|e| Failure::Invalid(e.to_string()))?;
            rows.push(OracleDiff {
                state: OracleState {
                    seller: n + 1,
                    t: 1,
                    d: c,
                    s: zeros.as_slice().to_vec(),
                },
                solver_value,
                oracle_value,
                abs_diff: (solver_value - oracle_value).abs(),
            });
        }
    }
    let max_abs_diff = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    Ok(OracleReport {
        instance_hash: instance.content_hash().to_string(),
        tolerance: ORACLE_TOL,
        max_abs_diff,
        passed: max_abs_diff <= ORACLE_TOL,
        rows,
    })
}

fn oracle_outcome(report: &OracleReport) -> Outcome {
    say!(
        "oracle comparisons: {}, max |diff| = {:.3e}",
        report.rows.len(),
        report.max_abs_diff
    );
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "solver and history-tree oracle differ by {:.3e}",
            report.max_abs_diff
        )))
    }
}

fn cmd_oracle_check(a: &OracleArgs) -> Outcome {
    let instance = io::load_instance(&a.config)?;
    let tables = solve_instance(&instance, DEFAULT_MAX_STATES)?;
    let report = oracle_report(&tables)?;
    if let Some(path) = &a.json {
        io::write_json(path, &report)?;
    }
    oracle_outcome(&report)
}

fn print_simulation(report: &SimulationReport) {
    say!(
        "replications {}, seed {}, mode {:?}, focal {:?}, no-sale frequency {:.4}",
        report.replications,
        report.seed,
        report.mode,
        report.focal,
        report.no_sale_frequency
    );
    for (n, s) in report.sellers.iter().enumerate() {
        let target = s.target.map_or("-".to_string(), |t| format!("{t:.6}"));
        let z = s.z_score.map_or("-".to_string(), |z| format!("{z:+.3}"));
        say!(
            "  seller {} ({}): mean {:.6} +- {:.6}, target {target}, z {z}, sellout {:.4}",
            n + 1,
            s.name,
            s.mean_revenue,
            s.std_error,
            s.sellout_frequency
        );
    }
    if let Some(note) = &report.note {
        say!("  {note}");
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome {
    let tables = load_tables(&a.source)?;
    let focal = match a.focal {
        Some(0) => return Err(Failure::Invalid("--focal is 1-based".into())),
        other => other.map(|f| f - 1),
    };
    let config = SimulationConfig {
        replications: a.replications,
        seed: a.seed,
        mode: match a.mode {
            ModeArg::Sampled => CapacityMode::Sampled,
            ModeArg::Fixed => CapacityMode::Fixed,
        },
        focal,
    };
    let trace_reps = if a.trace.is_some() {
        a.trace_replications
    } else {
        0
    };
    let (report, trace) = simulator::simulate_with_trace(&tables, &config, trace_reps)
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    print_simulation(&report);
    if let Some(path) = &a.json {
        io::write_json(path, &report)?;
    }
    if let Some(path) = &a.out {
        io::write_file(path, &io::simulation_csv(std::slice::from_ref(&report))?)?;
    }
    if let Some(path) = &a.trace {
        io::write_file(path, &io::trace_csv(&report.instance_hash, &trace)?)?;
    }
    Ok(())
}

/// Two sellers over five periods; the 1.0 atom stands in for "no arrival".
pub fn demo_instance() -> ProblemInstance {
    ProblemInstance {
        horizon: 5,
        prices: vec![
            PriceAtom {
                price: 12.0,
                prob: 0.3,
            },
            PriceAtom {
                price: 7.0,
                prob: 0.4,
            },
            PriceAtom {
                price: 1.0,
                prob: 0.3,
            },
        ],
        sellers: vec![
            SellerSpec {
                name: "incumbent".into(),
                pi: 0.55,
                capacity_prior: BTreeMap::from([(1, 0.2), (2, 0.8)]),
                actual_capacity: Some(2),
            },
            SellerSpec {
                name: "entrant".into(),
                pi: 0.35,
                capacity_prior: BTreeMap::from([(0, 0.1), (1, 0.5), (2, 0.4)]),
                actual_capacity: Some(1),
            },
        ],
    }
}

fn cmd_demo(a: &DemoArgs) -> Outcome {
    let raw = demo_instance();
    let dir = &a.out;
    io::write_json(&dir.join("instance.json"), &raw)?;
    let instance = Instance::new(raw).map_err(|r| Failure::Invalid(r.to_string()))?;

    let tables = solve_instance(&instance, DEFAULT_MAX_STATES)?;
    write_tables(&tables, &dir.join("tables.csv"), &dir.join("tables.json"))?;

    let nash = stage_game::verify_all_stages(&tables)?;
    io::write_json(&dir.join("nash.json"), &nash)?;

    let props = properties::check_all(&tables, DEFAULT_COUNTEREXAMPLES);
    io::write_json(&dir.join("properties.json"), &props)?;

    let oracle = oracle_report(&tables)?;
    io::write_json(&dir.join("oracle.json"), &oracle)?;

    let mut sims = Vec::new();
    for focal in 0..instance.num_sellers() {
        let config = SimulationConfig {
            replications: a.replications,
            seed: a.seed,
            mode: CapacityMode::Sampled,
            focal: Some(focal),
        };
        let report =
            simulator::simulate(&tables, &config).map_err(|e| Failure::Invalid(e.to_string()))?;
        print_simulation(&report);
        sims.push(report);
    }
    io::write_json(&dir.join("simulation.json"), &sims)?;
    io::write_file(&dir.join("simulation.csv"), &io::simulation_csv(&sims)?)?;

    let checks = [
        nash_outcome(&nash),
        property_outcome(&props),
        oracle_outcome(&oracle),
    ];
    say!("demo outputs in {}", dir.display());
    checks.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run(["knapsack-game"]), EXIT_USAGE);
        assert_eq!(run(["knapsack-game", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["knapsack-game", "simulate"]), EXIT_USAGE);
        assert_eq!(
            run([
                "knapsack-game",
                "simulate",
                "--config",
                "a.json",
                "--tables",
                "b"
            ]),
            EXIT_USAGE
        );
        assert_eq!(run(["knapsack-game", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_instance_is_invalid() {
        assert_eq!(
            run([
                "knapsack-game",
                "solve",
                "--config",
                "/nonexistent/instance.json"
            ]),
            EXIT_INVALID
        );
    }

    #[test]
    fn demo_instance_is_valid_and_oracle_sized() {
        let inst = Instance::new(demo_instance()).unwrap();
        assert!(inst.horizon() <= oracle::MAX_HORIZON);
        assert!(inst.prices().len() <= oracle::MAX_ATOMS);
    }
}

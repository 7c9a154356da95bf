//! Command-line front end: simulation, plan synthesis, adjoint checks, and
//! the Monte Carlo table harnesses.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde_json::json;

use migractl::costate::{
    check_pmp_consistency, integrate_costate_final, integrate_costate_integral, CostVariant,
};
use migractl::dynamics::{simulate_opts, Trajectory, DEFAULT_STEP};
use migractl::error::{Error, Result};
use migractl::experiments::{
    brute_force_oracle, reports_json, sample_initial, table1_csv, table1_experiment, table2_csv,
    table2_experiment, trial_rng,
};
use migractl::model::{canonical_order_xi, mean, project, Ensemble};
use migractl::plan::{ControlPlan, ControlRule, DEFAULT_MERGE_TOL};
use migractl::strategies::{
    full_control_plan_budget, inactivation_plan, inactivation_scan, staged_switch_times_budget,
    two_agent_plan,
};

/// Violation level above which a pmp-check reports inconsistency.
const PMP_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "migractl",
    version,
    about = "Control synthesis and experiments for a velocity-alignment migration model"
)]
struct Cli {
    /// Worker threads for the experiment harnesses (default: all cores;
    /// the MIGRACTL_THREADS environment variable is honored too).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the projected system under a strategy; writes trajectory CSV.
    Simulate(SimulateArgs),
    /// Classify a two-agent instance and emit its optimal plan as JSON.
    Plan2(Plan2Args),
    /// Switch times of the staged full-control plan.
    Stages(StagesArgs),
    /// Scan the inactivation time and report (delta, V_delta, V_fc).
    ScanDelta(ScanDeltaArgs),
    /// Check a stored trajectory against the maximum principle.
    PmpCheck(PmpCheckArgs),
    /// Monte Carlo inactivation frequency over an (agents x horizons) grid.
    Table1(TableArgs),
    /// Monte Carlo relative improvement of the scanned optimum.
    Table2(TableArgs),
    /// Brute-force random-control baseline for one instance.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of agents (random initial data).
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Ambient dimension for random full-ensemble initial data
    /// (0 = draw projected scalars directly).
    #[arg(long, default_value_t = 0)]
    dim: usize,
    /// Control budget.
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long)]
    horizon: f64,
    /// Integrator step.
    #[arg(long, default_value_t = DEFAULT_STEP)]
    dt: f64,
    /// zero | instant | full | inactivation | integral | plan:FILE
    #[arg(long, default_value = "full")]
    strategy: String,
    /// random | file:PATH
    #[arg(long, default_value = "random")]
    init: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Merge tolerance of the feedback rules.
    #[arg(long, default_value_t = DEFAULT_MERGE_TOL)]
    merge_tol: f64,
}

#[derive(Args)]
struct Plan2Args {
    #[arg(long)]
    xi1: f64,
    #[arg(long)]
    xi2: f64,
    #[arg(long)]
    m: f64,
    #[arg(long)]
    horizon: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StagesArgs {
    /// random | file:PATH
    #[arg(long, default_value = "random")]
    init: String,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Block budget (at most 1).
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanDeltaArgs {
    /// random | file:PATH
    #[arg(long, default_value = "random")]
    init: String,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 512)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PmpCheckArgs {
    /// Trajectory CSV produced by `simulate`.
    #[arg(long)]
    traj: PathBuf,
    /// final | integral
    #[arg(long)]
    cost: String,
    /// Budget defining the admissible set (not stored in the CSV).
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,50")]
    agents: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,7")]
    horizons: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional full-metadata JSON (per-trial records included).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// random | file:PATH
    #[arg(long, default_value = "random")]
    init: String,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long)]
    m: f64,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 6)]
    pieces: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let from_env = std::env::var("MIGRACTL_THREADS").ok().and_then(|v| v.parse().ok());
    if let Some(threads) = flag.or(from_env) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => simulate_cmd(args),
        Command::Plan2(args) => plan2_cmd(args),
        Command::Stages(args) => stages_cmd(args),
        Command::ScanDelta(args) => scan_delta_cmd(args),
        Command::PmpCheck(args) => pmp_check_cmd(args),
        Command::Table1(args) => table_cmd(args, true),
        Command::Table2(args) => table_cmd(args, false),
        Command::Oracle(args) => oracle_cmd(args),
    }
}

fn write_output(path: &Option<PathBuf>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| Error::invalid_input(format!("write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Load projected initial data: `random` draws by the experiment protocol
/// (`--dim D` switches to a random full ensemble that is then projected);
/// `file:PATH` reads either a one-row `xi_1..xi_N` CSV or a per-agent
/// `x_1..x_d,v_1..v_d` CSV with the target at the origin.
fn load_initial(init: &str, n: usize, dim: usize, seed: u64) -> Result<Vec<f64>> {
    if init == "random" {
        if dim == 0 {
            if n < 2 {
                return Err(Error::invalid_input("random projected init needs --n >= 2"));
            }
            return Ok(sample_initial(n, seed));
        }
        let mut rng = trial_rng(seed, 0);
        loop {
            let positions =
                (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let velocities =
                (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let ensemble = Ensemble::new(positions, velocities, vec![0.0; dim])?;
            if let Ok(state) = project(&ensemble) {
                if state.xibar > 1e-6 {
                    return Ok(state.xi);
                }
            }
        }
    }
    let path = init
        .strip_prefix("file:")
        .ok_or_else(|| Error::invalid_input(format!("--init must be 'random' or 'file:PATH', got '{init}'")))?;
    read_initial_file(Path::new(path))
}

fn read_initial_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid_input(format!("read {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::invalid_input("empty initial file"))?;
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let parse_row = |line: &str| -> Result<Vec<f64>> {
        line.trim()
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid_input(format!("{}: {e}", path.display())))
    };
    if cols.first().is_some_and(|c| c.starts_with("xi_")) {
        let row = lines
            .next()
            .ok_or_else(|| Error::invalid_input("projected file needs one data row"))?;
        let xi = parse_row(row)?;
        if xi.len() != cols.len() {
            return Err(Error::invalid_input("column count mismatch in projected file"));
        }
        return Ok(xi);
    }
    if cols.first().is_some_and(|c| c.starts_with("x_")) {
        let d = cols.iter().filter(|c| c.starts_with("x_")).count();
        if cols.len() != 2 * d || !cols[d].starts_with("v_") {
            return Err(Error::invalid_input(
                "full-mode header must be x_1..x_d,v_1..v_d",
            ));
        }
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        for line in lines {
            let row = parse_row(line)?;
            if row.len() != 2 * d {
                return Err(Error::invalid_input("row length mismatch in full-mode file"));
            }
            positions.push(row[..d].to_vec());
            velocities.push(row[d..].to_vec());
        }
        let ensemble = Ensemble::new(positions, velocities, vec![0.0; d])?;
        return Ok(project(&ensemble)?.xi);
    }
    Err(Error::invalid_input("initial file header must start with xi_1 or x_1"))
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let raw = load_initial(&args.init, args.n, args.dim, args.seed)?;
    let (plan, xi0) = if let Some(path) = args.strategy.strip_prefix("plan:") {
        let plan = ControlPlan::from_json(&fs::read_to_string(path).map_err(|e| {
            Error::invalid_input(format!("read {path}: {e}"))
        })?)?;
        if (plan.horizon - args.horizon).abs() > 1e-9 {
            return Err(Error::invalid_input(format!(
                "plan horizon {} does not match --horizon {}",
                plan.horizon, args.horizon
            )));
        }
        // plans from files refer to the caller's agent numbering
        (plan, raw)
    } else {
        // built-in strategies act on the canonical (descending) ordering
        let (xi0, _) = canonical_order_xi(&raw);
        let plan = build_strategy_plan(&args.strategy, &xi0, args.m, args.horizon)?;
        (plan, xi0)
    };
    let traj = simulate_opts(&xi0, &plan, args.dt, args.merge_tol)?;
    write_output(&args.out, &traj.to_csv_string())
}

fn build_strategy_plan(strategy: &str, xi0: &[f64], m: f64, horizon: f64) -> Result<ControlPlan> {
    match strategy {
        "zero" => Ok(ControlPlan::zero(xi0.len(), m, horizon)),
        "instant" => Ok(ControlPlan::feedback(ControlRule::InstantaneousDecrease, m, horizon)),
        "full" => Ok(full_control_plan_budget(xi0, horizon, m)?.to_control_plan()),
        "inactivation" => {
            if (m - 1.0).abs() > 1e-9 {
                return Err(Error::BudgetOutOfRange {
                    budget: m,
                    expected: "exactly 1 for the inactivation strategy".into(),
                });
            }
            let scan = inactivation_scan(xi0, horizon, 512)?;
            inactivation_plan(xi0, horizon, scan.delta)
        }
        "integral" => {
            if m < 1.0 - 1e-9 {
                return Err(Error::BudgetOutOfRange {
                    budget: m,
                    expected: "at least 1 for the full-strength integral rule".into(),
                });
            }
            Ok(ControlPlan::feedback(ControlRule::IntegralCostArgmax, m, horizon))
        }
        other => Err(Error::invalid_input(format!(
            "unknown strategy '{other}' (zero|instant|full|inactivation|integral|plan:FILE)"
        ))),
    }
}

fn plan2_cmd(args: Plan2Args) -> Result<()> {
    if args.xi1 < args.xi2 {
        return Err(Error::invalid_input("plan2 expects xi1 >= xi2 (canonical order)"));
    }
    let (regime, plan) = two_agent_plan([args.xi1, args.xi2], args.m, args.horizon)?;
    let mut thresholds = serde_json::Map::new();
    if let Some(t0) = regime.t0 {
        thresholds.insert("t0".into(), json!(t0));
    }
    if let Some(t1) = regime.t1 {
        thresholds.insert("t1".into(), json!(t1));
    }
    if let Some(t2) = regime.t2 {
        thresholds.insert("t2".into(), json!(t2));
    }
    let mut doc = json!({
        "case_id": regime.case_id.id(),
        "budget": regime.budget,
        "thresholds": thresholds,
        "plan": serde_json::from_str::<serde_json::Value>(&plan.to_json()).expect("plan json"),
    });
    if let Some(tstar) = regime.tstar {
        doc["tstar"] = json!(tstar);
    }
    let mut text = serde_json::to_string_pretty(&doc).expect("json");
    text.push('\n');
    write_output(&args.out, &text)
}

fn stages_cmd(args: StagesArgs) -> Result<()> {
    let raw = load_initial(&args.init, args.n, 0, args.seed)?;
    let (xi0, _) = canonical_order_xi(&raw);
    let times = staged_switch_times_budget(&xi0, mean(&xi0), args.m)?;
    let mut text = serde_json::to_string_pretty(&json!({
        "n": xi0.len(),
        "budget": args.m,
        "xi0": xi0,
        "switch_times": times,
    }))
    .expect("json");
    text.push('\n');
    write_output(&args.out, &text)
}

fn scan_delta_cmd(args: ScanDeltaArgs) -> Result<()> {
    let raw = load_initial(&args.init, args.n, 0, args.seed)?;
    let (xi0, _) = canonical_order_xi(&raw);
    let scan = inactivation_scan(&xi0, args.horizon, args.grid)?;
    let mut text = serde_json::to_string_pretty(&json!({
        "delta": scan.delta,
        "v_delta": scan.v_delta,
        "v_fc": scan.v_fc,
        "horizon": args.horizon,
        "grid": args.grid,
    }))
    .expect("json");
    text.push('\n');
    write_output(&args.out, &text)
}

fn pmp_check_cmd(args: PmpCheckArgs) -> Result<()> {
    let file = fs::File::open(&args.traj)
        .map_err(|e| Error::invalid_input(format!("open {}: {e}", args.traj.display())))?;
    let traj = Trajectory::read_csv(BufReader::new(file), args.m)?;
    let (variant, costate) = match args.cost.as_str() {
        "final" => (CostVariant::FinalCost, integrate_costate_final(&traj)),
        "integral" => (CostVariant::IntegralCost, integrate_costate_integral(&traj)),
        other => {
            return Err(Error::invalid_input(format!(
                "--cost must be 'final' or 'integral', got '{other}'"
            )));
        }
    };
    let report = check_pmp_consistency(&traj, &costate);
    let mut text = serde_json::to_string_pretty(&json!({
        "cost": match variant {
            CostVariant::FinalCost => "final",
            CostVariant::IntegralCost => "integral",
        },
        "budget": args.m,
        "samples": report.samples,
        "max_violation": report.max_violation,
        "worst_time": report.worst_time,
        "consistent": report.consistent(PMP_TOL),
        "tolerance": PMP_TOL,
    }))
    .expect("json");
    text.push('\n');
    write_output(&args.out, &text)
}

fn table_cmd(args: TableArgs, table1: bool) -> Result<()> {
    if args.trials == 0 {
        return Err(Error::invalid_input("--trials must be at least 1"));
    }
    let reports = if table1 {
        table1_experiment(&args.agents, &args.horizons, args.trials, args.seed)
    } else {
        table2_experiment(&args.agents, &args.horizons, args.trials, args.seed)
    };
    let csv = if table1 { table1_csv(&reports) } else { table2_csv(&reports) };
    write_output(&args.out, &csv)?;
    if let Some(json_path) = &args.json {
        fs::write(json_path, reports_json(&reports))
            .map_err(|e| Error::invalid_input(format!("write {}: {e}", json_path.display())))?;
    }
    Ok(())
}

fn oracle_cmd(args: OracleArgs) -> Result<()> {
    let init_seed = args.seed ^ 0x9E37_79B9_7F4A_7C15;
    let raw = load_initial(&args.init, args.n, 0, init_seed)?;
    let (xi0, _) = canonical_order_xi(&raw);
    let result = brute_force_oracle(&xi0, args.m, args.horizon, args.pieces, args.samples, args.seed)?;
    let mut text = serde_json::to_string_pretty(&json!({
        "xi0": xi0,
        "budget": args.m,
        "horizon": args.horizon,
        "pieces": args.pieces,
        "samples": args.samples,
        "seed": args.seed,
        "best_v": result.best_v,
        "best_plan": serde_json::from_str::<serde_json::Value>(&result.best_plan.to_json())
            .expect("plan json"),
    }))
    .expect("json");
    text.push('\n');
    write_output(&args.out, &text)
}

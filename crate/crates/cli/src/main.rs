//! `voltplan` command line: load flow, criticality ranking, attack
//! scenarios, DG optimization and scenario bundles on radial feeders.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use voltplan::attack::{self, AttackSpec, DynamicAttackSpec, OscillationCoupling};
use voltplan::dgopt::{self, ObjectiveWeights, PsoConfig};
use voltplan::net::NetworkCase;
use voltplan::powerflow::{self, SolveOptions, VoltageBand};
use voltplan_cli::resolve_case;
use voltplan_cli::scenario::{run_scenario, ScenarioError};

#[derive(Parser)]
#[command(
    name = "voltplan",
    version,
    about = "Radial feeder planning under load-altering attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CaseArgs {
    /// Case file path or the bundled name `ieee33`
    case: String,
    /// Override the slack voltage, p.u.
    #[arg(long = "slack-v")]
    slack_v: Option<f64>,
    /// Solver tolerance on voltage change, p.u.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Iteration cap for the sweep
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

impl CaseArgs {
    fn load(&self) -> Result<NetworkCase, CliError> {
        let cwd = std::env::current_dir().unwrap_or_else(|_| PathBuf::from("."));
        let (mut case, _) = resolve_case(&self.case, &cwd)?;
        if let Some(slack) = self.slack_v {
            case = case.with_slack_voltage(slack)?;
        }
        Ok(case)
    }

    fn options(&self) -> SolveOptions {
        SolveOptions {
            tolerance: self.tol,
            max_iterations: self.max_iter,
        }
    }
}

#[derive(Args)]
struct BandArgs {
    /// Band floor, p.u.
    #[arg(long, default_value_t = 0.917)]
    vmin: f64,
    /// Band ceiling, p.u.
    #[arg(long, default_value_t = 1.042)]
    vmax: f64,
}

impl BandArgs {
    fn band(&self) -> VoltageBand {
        VoltageBand::new(self.vmin, self.vmax)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the steady state and report losses and extremes
    Loadflow {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        band: BandArgs,
        /// Write bus/branch CSVs into this directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank buses by voltage magnitude, most vulnerable first
    Rank {
        #[command(flatten)]
        case: CaseArgs,
        /// How many critical buses to list
        #[arg(short)]
        k: Option<usize>,
    },
    /// Apply a sustained load increase at target buses and solve
    AttackStep {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        band: BandArgs,
        /// Target bus ids, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<u32>,
        /// Relative load increase (0.15 = +15%)
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a ramped oscillating attack as a quasi-static time series
    AttackDynamic {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        band: BandArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<u32>,
        /// Peak relative increase reached after the ramp
        #[arg(long)]
        peak: f64,
        /// Oscillation amplitude relative to the peak
        #[arg(long, default_value_t = 0.5)]
        osc: f64,
        /// Oscillation frequency, Hz
        #[arg(long, default_value_t = 1.0 / 60.0)]
        freq: f64,
        /// Ramp duration, seconds
        #[arg(long, default_value_t = 300.0)]
        ramp: f64,
        /// Horizon, seconds
        #[arg(long, default_value_t = 900.0)]
        horizon: f64,
        /// Sample step, seconds
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        /// Add the oscillation to the ramp instead of scaling with it
        #[arg(long)]
        additive: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Site and size three DG units with the particle swarm optimizer
    OptimizeDg {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        band: BandArgs,
        #[arg(long, default_value_t = 500)]
        swarm: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Weight on real loss, p.u.
        #[arg(long, default_value_t = 8.0)]
        alpha: f64,
        /// Weight on reactive loss, p.u.
        #[arg(long, default_value_t = 8.0)]
        beta: f64,
        /// Reference voltage, p.u.
        #[arg(long, default_value_t = 1.0)]
        vref: f64,
        /// Quadratic penalty weight on band violations
        #[arg(long, default_value_t = 100.0)]
        band_penalty: f64,
        /// Write the optimization report JSON here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a scenario file and write its report bundle
    Run {
        scenario: PathBuf,
        /// Replace the scenario's output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Case(#[from] voltplan::net::CaseError),
    #[error(transparent)]
    PowerFlow(#[from] voltplan::powerflow::PowerFlowError),
    #[error(transparent)]
    Attack(#[from] voltplan::attack::AttackError),
    #[error(transparent)]
    Dgopt(#[from] voltplan::dgopt::DgoptError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Io(String),
    #[error("power flow did not converge within the iteration cap")]
    Unconverged,
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Case(_) => "case",
            CliError::PowerFlow(_) => "powerflow",
            CliError::Attack(_) => "attack",
            CliError::Dgopt(_) => "dgopt",
            CliError::Scenario(_) => "scenario",
            CliError::Io(_) => "io",
            CliError::Unconverged => "unconverged",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = serde_json::json!({
                "error": err.kind(),
                "message": err.to_string(),
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Loadflow { case, band, out } => loadflow(case, band, out),
        Command::Rank { case, k } => rank(case, k),
        Command::AttackStep { case, band, targets, delta, out } => {
            attack_step(case, band, targets, delta, out)
        }
        Command::AttackDynamic {
            case, band, targets, peak, osc, freq, ramp, horizon, dt, additive, out,
        } => attack_dynamic(case, band, targets, peak, osc, freq, ramp, horizon, dt, additive, out),
        Command::OptimizeDg {
            case, band, swarm, iters, seed, alpha, beta, vref, band_penalty, out,
        } => optimize_dg(case, band, swarm, iters, seed, alpha, beta, vref, band_penalty, out),
        Command::Run { scenario, out } => {
            let outcome = run_scenario(&scenario, out.as_deref())?;
            println!("bundle written to {}", outcome.dir.display());
            println!(
                "{} artifacts, case {}..",
                outcome.manifest.artifacts.len(),
                &outcome.manifest.case_sha256[..12]
            );
            Ok(())
        }
    }
}

fn solve_checked(
    case: &NetworkCase,
    options: &SolveOptions,
) -> Result<powerflow::PowerFlowSolution, CliError> {
    let solution = powerflow::solve(case, options)?;
    if !solution.converged() {
        return Err(CliError::Unconverged);
    }
    Ok(solution)
}

fn loadflow(args: CaseArgs, band: BandArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let case = args.load()?;
    let solution = solve_checked(&case, &args.options())?;
    let (p, q) = powerflow::total_losses(&solution)?;
    let report = powerflow::check_limits(&solution, &band.band())?;
    println!(
        "converged in {} iterations (max change {:.3e} p.u.)",
        solution.iterations(),
        solution.max_mismatch()
    );
    println!("total losses: {p:.2} kW / {q:.2} kVAr");
    println!(
        "voltage range: {:.4} p.u. at bus {} .. {:.4} p.u. at bus {}",
        report.min_v, report.min_bus, report.max_v, report.max_bus
    );
    if report.breach {
        println!(
            "band [{:.3}, {:.3}] violated at {} bus(es)",
            band.vmin,
            band.vmax,
            report.violations.len()
        );
    } else {
        println!("all voltages within [{:.3}, {:.3}]", band.vmin, band.vmax);
    }
    if let Some(dir) = out {
        write_solution(&dir, "loadflow", &solution)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn rank(args: CaseArgs, k: Option<usize>) -> Result<(), CliError> {
    let case = args.load()?;
    let solution = solve_checked(&case, &args.options())?;
    let ranking = powerflow::rank_vm(&solution)?;
    let k = k.unwrap_or(ranking.entries().len());
    let selected = ranking.select_critical(k)?;
    println!("rank,bus_id,v_pu");
    for entry in ranking.entries().iter().take(k) {
        println!("{},{},{:.6}", entry.rank, entry.bus, entry.vm);
    }
    println!(
        "critical set: {}",
        selected
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(())
}

fn attack_step(
    args: CaseArgs,
    band: BandArgs,
    targets: Vec<u32>,
    delta: f64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let case = args.load()?;
    let spec = AttackSpec::new(targets, delta)?;
    let result = attack::run_step_attack(&case, &spec, &args.options())?;
    let (bp, bq) = result.baseline_losses;
    let (ap, aq) = result.attacked_losses;
    let (min_bus, min_v) = result.attacked.min_voltage();
    println!("baseline losses: {bp:.2} kW / {bq:.2} kVAr");
    println!(
        "attacked losses: {ap:.2} kW / {aq:.2} kVAr (delta {:+.2} kW / {:+.2} kVAr)",
        ap - bp,
        aq - bq
    );
    println!("attacked minimum voltage: {min_v:.4} p.u. at bus {min_bus}");
    let floor = band.band().v_min;
    if min_v < floor {
        println!("band floor {floor:.3} p.u. breached");
    } else {
        println!("within the {floor:.3} p.u. band floor");
    }
    if let Some(dir) = out {
        write_solution(&dir, "attacked", &result.attacked)?;
        write_solution(&dir, "baseline", &result.baseline)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn attack_dynamic(
    args: CaseArgs,
    band: BandArgs,
    targets: Vec<u32>,
    peak: f64,
    osc: f64,
    freq: f64,
    ramp: f64,
    horizon: f64,
    dt: f64,
    additive: bool,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let case = args.load()?;
    let coupling = if additive {
        OscillationCoupling::Additive
    } else {
        OscillationCoupling::Multiplicative
    };
    let spec =
        DynamicAttackSpec::with_timing(targets, peak, osc, freq, ramp, horizon, dt, coupling)?;
    let band = band.band();
    let series = match attack::run_time_series(&case, &spec, &band, &args.options()) {
        Ok(series) => series,
        Err(voltplan::attack::TimeSeriesError::Invalid(e)) => return Err(e.into()),
        Err(voltplan::attack::TimeSeriesError::Aborted { failed_t_s, .. }) => {
            eprintln!("aborted: power flow diverged at t = {failed_t_s} s");
            return Err(CliError::Unconverged);
        }
    };
    println!(
        "{} samples over {horizon} s (dt = {dt} s)",
        series.samples.len()
    );
    println!(
        "global minimum: {:.4} p.u. at bus {} (t = {} s)",
        series.summary.global_min_v_pu,
        series.summary.global_min_bus,
        series.summary.global_min_t_s
    );
    match series.summary.first_breach_t_s {
        Some(t) => println!("band floor {:.3} first breached at t = {t} s", band.v_min),
        None => println!("no breach of the {:.3} p.u. floor", band.v_min),
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(dir.join("series.csv"), attack::series_csv(&series))
            .map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(dir.join("voltages.csv"), attack::voltages_csv(&series))
            .map_err(|e| CliError::Io(e.to_string()))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn optimize_dg(
    args: CaseArgs,
    band: BandArgs,
    swarm: usize,
    iters: usize,
    seed: u64,
    alpha: f64,
    beta: f64,
    vref: f64,
    band_penalty: f64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let case = args.load()?;
    let weights = ObjectiveWeights {
        v_ref: vref,
        alpha,
        beta,
        band_penalty,
        band: band.band(),
    };
    let config = PsoConfig {
        swarm_size: swarm,
        iterations: iters,
        seed,
        ..Default::default()
    };
    let result = dgopt::pso_optimize(&case, &weights, &config)?;
    let augmented = case.apply_dg(&result.best_placement)?;
    let solution = solve_checked(&augmented, &args.options())?;
    let (p, q) = powerflow::total_losses(&solution)?;
    let (min_bus, min_v) = solution.min_voltage();
    println!("best objective: {:.6} (seed {seed})", result.best_objective);
    for unit in result.best_placement.units() {
        println!("  DG at bus {}: {:.1} kW", unit.bus, unit.p_dg_kw);
    }
    println!("post-placement losses: {p:.2} kW / {q:.2} kVAr");
    println!("post-placement minimum voltage: {min_v:.4} p.u. at bus {min_bus}");
    if let Some(path) = out {
        let report = serde_json::json!({
            "result": result,
            "weights": weights,
            "post_placement": {
                "total_p_loss_kw": p,
                "total_q_loss_kvar": q,
                "min_v_pu": min_v,
                "min_v_bus": min_bus,
            },
        });
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| CliError::Io(e.to_string()))?;
            }
        }
        std::fs::write(&path, text).map_err(|e| CliError::Io(e.to_string()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn write_solution(
    dir: &PathBuf,
    prefix: &str,
    solution: &powerflow::PowerFlowSolution,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(dir.join(format!("{prefix}.bus.csv")), powerflow::bus_csv(solution))
        .map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(
        dir.join(format!("{prefix}.branch.csv")),
        powerflow::branch_csv(solution),
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

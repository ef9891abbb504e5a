//! Scenario files and their execution.
//!
//! A scenario pins everything a run needs: the case, the operating profile
//! (slack voltage and allowed band), an ordered list of actions and the
//! output directory. Given the same inputs and seeds, a rerun reproduces
//! every artifact byte for byte; only the manifest timestamp differs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use voltplan::attack::{self, AttackSpec, DynamicAttackSpec, OscillationCoupling, TimeSeriesError};
use voltplan::dgopt::{self, ObjectiveWeights, PsoConfig};
use voltplan::net::{BusId, CaseError, NetworkCase};
use voltplan::powerflow::{self, PowerFlowSolution, SolveOptions, VoltageBand};

use crate::bundle::{BundleError, BundleWriter, ErrorRecord, Manifest};
use crate::table::{emit_summary_table, SummaryEntry};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse scenario: {0}")]
    Parse(String),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("step '{label}' failed: {message} (partial bundle at {dir})")]
    Action {
        label: String,
        message: String,
        dir: PathBuf,
    },
}

/// Operating profile a scenario runs under.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Profile {
    /// Override of the case's slack voltage, p.u.
    #[serde(default)]
    pub slack_voltage_pu: Option<f64>,
    #[serde(default = "default_v_min")]
    pub v_min_pu: f64,
    #[serde(default = "default_v_max")]
    pub v_max_pu: f64,
}

impl Default for Profile {
    fn default() -> Self {
        Self {
            slack_voltage_pu: None,
            v_min_pu: default_v_min(),
            v_max_pu: default_v_max(),
        }
    }
}

impl Profile {
    pub fn band(&self) -> VoltageBand {
        VoltageBand::new(self.v_min_pu, self.v_max_pu)
    }
}

fn default_v_min() -> f64 {
    0.917
}

fn default_v_max() -> f64 {
    1.042
}

/// Optional overrides of the default objective weights.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct WeightOverrides {
    pub v_ref: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub band_penalty: Option<f64>,
}

impl WeightOverrides {
    fn apply(&self, band: VoltageBand) -> ObjectiveWeights {
        let defaults = ObjectiveWeights::default();
        ObjectiveWeights {
            v_ref: self.v_ref.unwrap_or(defaults.v_ref),
            alpha: self.alpha.unwrap_or(defaults.alpha),
            beta: self.beta.unwrap_or(defaults.beta),
            band_penalty: self.band_penalty.unwrap_or(defaults.band_penalty),
            band,
        }
    }
}

/// One scenario action. Labels name the artifacts each action emits.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Step {
    Solve {
        label: String,
    },
    Rank {
        label: String,
        #[serde(default)]
        k: Option<usize>,
    },
    StepAttack {
        label: String,
        targets: Vec<BusId>,
        delta: f64,
    },
    DynamicAttack {
        label: String,
        targets: Vec<BusId>,
        peak_delta: f64,
        #[serde(default)]
        oscillation_ratio: f64,
        #[serde(default = "default_frequency")]
        frequency_hz: f64,
        #[serde(default = "default_ramp")]
        ramp_s: f64,
        #[serde(default = "default_horizon")]
        horizon_s: f64,
        #[serde(default = "default_time_step")]
        time_step_s: f64,
        #[serde(default)]
        coupling: OscillationCoupling,
    },
    OptimizeDg {
        label: String,
        #[serde(default = "default_swarm")]
        swarm: usize,
        #[serde(default = "default_iterations")]
        iterations: usize,
        seed: u64,
        /// When set, later actions run against the DG-augmented case.
        #[serde(default)]
        use_result: bool,
        #[serde(default)]
        weights: WeightOverrides,
    },
}

impl Step {
    pub fn label(&self) -> &str {
        match self {
            Step::Solve { label }
            | Step::Rank { label, .. }
            | Step::StepAttack { label, .. }
            | Step::DynamicAttack { label, .. }
            | Step::OptimizeDg { label, .. } => label,
        }
    }
}

fn default_frequency() -> f64 {
    1.0 / 60.0
}

fn default_ramp() -> f64 {
    300.0
}

fn default_horizon() -> f64 {
    900.0
}

fn default_time_step() -> f64 {
    1.0
}

fn default_swarm() -> usize {
    500
}

fn default_iterations() -> usize {
    100
}

/// A reproducible run recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Bundled case name or a path relative to the scenario file.
    pub case: String,
    #[serde(default)]
    pub profile: Profile,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub solver: SolveOptions,
    pub steps: Vec<Step>,
}

/// Post-placement operating summary attached to optimization reports.
#[derive(Debug, Clone, Serialize)]
struct PlacementSummary {
    total_p_loss_kw: f64,
    total_q_loss_kvar: f64,
    min_v_pu: f64,
    min_v_bus: BusId,
}

#[derive(Debug, Clone, Serialize)]
struct OptimizationReport<'a> {
    result: &'a dgopt::OptimizationResult,
    weights: &'a ObjectiveWeights,
    post_placement: PlacementSummary,
}

#[derive(Debug, Clone, Serialize)]
struct AttackImpact<'a> {
    targets: &'a [BusId],
    delta: f64,
    baseline_p_loss_kw: f64,
    baseline_q_loss_kvar: f64,
    attacked_p_loss_kw: f64,
    attacked_q_loss_kvar: f64,
    attacked_min_v_pu: f64,
    band_breach: bool,
}

/// Outcome of a finished run: where the bundle landed and its manifest.
#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Parses a scenario file.
pub fn load_scenario(path: &Path) -> Result<(Scenario, Vec<u8>), ScenarioError> {
    let bytes = std::fs::read(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let scenario: Scenario =
        serde_json::from_slice(&bytes).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    Ok((scenario, bytes))
}

/// Executes a scenario file and writes its report bundle. `out_override`
/// replaces the scenario's own output directory when given. On an action
/// failure the bundle still lands with the artifacts produced so far plus
/// an error manifest, and the error is returned.
pub fn run_scenario(path: &Path, out_override: Option<&Path>) -> Result<RunOutcome, ScenarioError> {
    let (scenario, scenario_bytes) = load_scenario(path)?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let (mut case, case_bytes) = crate::resolve_case(&scenario.case, base_dir)?;
    if let Some(slack) = scenario.profile.slack_voltage_pu {
        case = case.with_slack_voltage(slack)?;
    }
    let band = scenario.profile.band();
    let options = scenario.solver;

    let out_dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| scenario.output_dir.clone());
    let mut writer = BundleWriter::create(&out_dir)?;

    let manifest = Manifest {
        tool: "voltplan".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        created_utc: chrono::Utc::now().to_rfc3339(),
        scenario_name: scenario.name.clone(),
        scenario_sha256: crate::bundle::sha256_hex(&scenario_bytes),
        case_ref: scenario.case.clone(),
        case_sha256: crate::bundle::sha256_hex(&case_bytes),
        artifacts: Vec::new(),
        error: None,
    };

    // rows for the final summary table: (nodes, n_dgs, delta, solution)
    let mut summary_rows: Vec<(Vec<BusId>, usize, f64, PowerFlowSolution)> = Vec::new();

    let mut failure: Option<(String, String)> = None;
    for step in &scenario.steps {
        let outcome = execute_step(
            step,
            &mut case,
            &band,
            &options,
            &mut writer,
            &mut summary_rows,
        );
        if let Err(message) = outcome {
            failure = Some((step.label().to_string(), message));
            break;
        }
    }

    // an empty scenario produces a manifest-only bundle
    if failure.is_none() && !scenario.steps.is_empty() {
        let entries: Vec<SummaryEntry> = summary_rows
            .iter()
            .map(|(nodes, n_dgs, delta, solution)| SummaryEntry {
                attacked_nodes: nodes.clone(),
                n_dgs: *n_dgs,
                load_increase: *delta,
                solution,
            })
            .collect();
        match emit_summary_table(&entries) {
            Ok(csv) => {
                if let Err(e) = writer.write_artifact("summary.csv", csv.as_bytes()) {
                    failure = Some(("summary".into(), e.to_string()));
                }
            }
            Err(e) => failure = Some(("summary".into(), e.to_string())),
        }
    }

    let error_record = failure.clone().map(|(step, message)| ErrorRecord { step, message });
    let (dir, manifest) = writer.finish(manifest, error_record)?;
    match failure {
        None => Ok(RunOutcome { dir, manifest }),
        Some((label, message)) => Err(ScenarioError::Action { label, message, dir }),
    }
}

fn execute_step(
    step: &Step,
    case: &mut NetworkCase,
    band: &VoltageBand,
    options: &SolveOptions,
    writer: &mut BundleWriter,
    summary_rows: &mut Vec<(Vec<BusId>, usize, f64, PowerFlowSolution)>,
) -> Result<(), String> {
    match step {
        Step::Solve { label } => {
            let solution = solve_converged(case, options)?;
            writer
                .write_artifact(
                    &format!("{label}.bus.csv"),
                    powerflow::bus_csv(&solution).as_bytes(),
                )
                .map_err(stringify)?;
            writer
                .write_artifact(
                    &format!("{label}.branch.csv"),
                    powerflow::branch_csv(&solution).as_bytes(),
                )
                .map_err(stringify)?;
            summary_rows.push((Vec::new(), case.dg_units().len(), 0.0, solution));
            Ok(())
        }
        Step::Rank { label, k } => {
            let solution = solve_converged(case, options)?;
            let ranking = powerflow::rank_vm(&solution).map_err(stringify)?;
            let mut csv = String::from("rank,bus_id,v_pu\n");
            for entry in ranking.entries() {
                csv.push_str(&format!("{},{},{:.6}\n", entry.rank, entry.bus, entry.vm));
            }
            writer
                .write_artifact(&format!("{label}.rank.csv"), csv.as_bytes())
                .map_err(stringify)?;
            if let Some(k) = k {
                let critical = ranking.select_critical(*k).map_err(stringify)?;
                let json = serde_json::to_string_pretty(&critical).expect("ids serialize");
                writer
                    .write_artifact(&format!("{label}.targets.json"), json.as_bytes())
                    .map_err(stringify)?;
            }
            Ok(())
        }
        Step::StepAttack { label, targets, delta } => {
            let spec = AttackSpec::new(targets.iter().copied(), *delta).map_err(stringify)?;
            let result = attack::run_step_attack(case, &spec, options).map_err(stringify)?;
            writer
                .write_artifact(
                    &format!("{label}.bus.csv"),
                    powerflow::bus_csv(&result.attacked).as_bytes(),
                )
                .map_err(stringify)?;
            writer
                .write_artifact(
                    &format!("{label}.branch.csv"),
                    powerflow::branch_csv(&result.attacked).as_bytes(),
                )
                .map_err(stringify)?;
            let impact = AttackImpact {
                targets,
                delta: *delta,
                baseline_p_loss_kw: result.baseline_losses.0,
                baseline_q_loss_kvar: result.baseline_losses.1,
                attacked_p_loss_kw: result.attacked_losses.0,
                attacked_q_loss_kvar: result.attacked_losses.1,
                attacked_min_v_pu: result.attacked.min_voltage().1,
                band_breach: result.attacked.min_voltage().1 < band.v_min,
            };
            let json = serde_json::to_string_pretty(&impact).expect("impact serializes");
            writer
                .write_artifact(&format!("{label}.impact.json"), json.as_bytes())
                .map_err(stringify)?;
            summary_rows.push((
                targets.clone(),
                case.dg_units().len(),
                *delta,
                result.attacked,
            ));
            Ok(())
        }
        Step::DynamicAttack {
            label,
            targets,
            peak_delta,
            oscillation_ratio,
            frequency_hz,
            ramp_s,
            horizon_s,
            time_step_s,
            coupling,
        } => {
            let spec = DynamicAttackSpec::with_timing(
                targets.iter().copied(),
                *peak_delta,
                *oscillation_ratio,
                *frequency_hz,
                *ramp_s,
                *horizon_s,
                *time_step_s,
                *coupling,
            )
            .map_err(stringify)?;
            let series = match attack::run_time_series(case, &spec, band, options) {
                Ok(series) => series,
                Err(TimeSeriesError::Invalid(e)) => return Err(e.to_string()),
                Err(TimeSeriesError::Aborted { failed_t_s, partial }) => {
                    // keep the partial trace for inspection, then fail the step
                    let _ = writer.write_artifact(
                        &format!("{label}.series.csv"),
                        attack::series_csv(&partial).as_bytes(),
                    );
                    return Err(format!("power flow diverged at t = {failed_t_s} s"));
                }
            };
            writer
                .write_artifact(
                    &format!("{label}.series.csv"),
                    attack::series_csv(&series).as_bytes(),
                )
                .map_err(stringify)?;
            writer
                .write_artifact(
                    &format!("{label}.voltages.csv"),
                    attack::voltages_csv(&series).as_bytes(),
                )
                .map_err(stringify)?;
            let json =
                serde_json::to_string_pretty(&series.summary).expect("summary serializes");
            writer
                .write_artifact(&format!("{label}.summary.json"), json.as_bytes())
                .map_err(stringify)?;
            Ok(())
        }
        Step::OptimizeDg {
            label,
            swarm,
            iterations,
            seed,
            use_result,
            weights,
        } => {
            let weights = weights.apply(*band);
            let config = PsoConfig {
                swarm_size: *swarm,
                iterations: *iterations,
                seed: *seed,
                ..Default::default()
            };
            let result = dgopt::pso_optimize(case, &weights, &config).map_err(stringify)?;
            let augmented = case.apply_dg(&result.best_placement).map_err(stringify)?;
            let solution = solve_converged(&augmented, options)?;
            let (p, q) = powerflow::total_losses(&solution).map_err(stringify)?;
            let (min_v_bus, min_v_pu) = solution.min_voltage();
            let report = OptimizationReport {
                result: &result,
                weights: &weights,
                post_placement: PlacementSummary {
                    total_p_loss_kw: p,
                    total_q_loss_kvar: q,
                    min_v_pu,
                    min_v_bus,
                },
            };
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            writer
                .write_artifact(&format!("{label}.opt.json"), json.as_bytes())
                .map_err(stringify)?;
            if *use_result {
                *case = augmented;
            }
            Ok(())
        }
    }
}

fn solve_converged(case: &NetworkCase, options: &SolveOptions) -> Result<PowerFlowSolution, String> {
    let solution = powerflow::solve(case, options).map_err(stringify)?;
    if !solution.converged() {
        return Err(format!(
            "power flow did not converge within {} iterations (last change {:.3e} p.u.)",
            solution.iterations(),
            solution.max_mismatch()
        ));
    }
    Ok(solution)
}

fn stringify(e: impl std::fmt::Display) -> String {
    e.to_string()
}

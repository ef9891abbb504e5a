//! Load-altering attack scenarios: instantaneous step attacks and
//! quasi-static oscillating time series.
//!
//! Dynamic attacks are a sequence of independent steady states. No state is
//! carried between samples, so the trace at a time instant depends only on
//! that instant, never on the sample grid.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{BusId, CaseError, NetworkCase};
use crate::powerflow::{self, PowerFlowError, PowerFlowSolution, SolveOptions, VoltageBand};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error("attack needs at least one target bus")]
    NoTargets,
    #[error("the slack bus cannot be an attack target")]
    SlackTarget,
    #[error("relative load change must stay above -1, got {0}")]
    DeltaRange(f64),
    #[error("invalid dynamic attack: {0}")]
    InvalidDynamicSpec(String),
    #[error("t = {t} s outside [0, {horizon}] s")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("power flow did not converge under the attack")]
    Unconverged,
}

/// A sustained relative load increase at a set of target buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    targets: BTreeSet<BusId>,
    delta: f64,
}

impl AttackSpec {
    pub fn new(targets: impl IntoIterator<Item = BusId>, delta: f64) -> Result<Self, AttackError> {
        let targets: BTreeSet<BusId> = targets.into_iter().collect();
        if targets.is_empty() {
            return Err(AttackError::NoTargets);
        }
        if !(delta > -1.0) {
            return Err(AttackError::DeltaRange(delta));
        }
        Ok(Self { targets, delta })
    }

    pub fn targets(&self) -> &BTreeSet<BusId> {
        &self.targets
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Whether the sinusoidal component scales with the ramp or adds to it.
///
/// `Multiplicative` is the default reading: the oscillation rides on the
/// ramped amplitude, `m(t) = 1 + A r(t) (1 + B sin 2πft)`. `Additive`
/// decouples them: `m(t) = 1 + A r(t) + A B sin 2πft`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OscillationCoupling {
    #[default]
    Multiplicative,
    Additive,
}

/// A ramped, oscillating load manipulation evaluated quasi-statically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicAttackSpec {
    pub targets: BTreeSet<BusId>,
    /// Peak relative increase A reached at the end of the ramp.
    pub peak_delta: f64,
    /// Relative oscillation amplitude B on top of the ramped peak.
    pub oscillation_ratio: f64,
    /// Oscillation frequency f, Hz.
    pub frequency_hz: f64,
    pub ramp_duration_s: f64,
    pub horizon_s: f64,
    pub time_step_s: f64,
    pub coupling: OscillationCoupling,
}

impl DynamicAttackSpec {
    /// Defaults mirroring the bundled dynamic case study: one oscillation
    /// cycle per minute, five minute ramp, fifteen minute horizon.
    pub fn new(
        targets: impl IntoIterator<Item = BusId>,
        peak_delta: f64,
        oscillation_ratio: f64,
    ) -> Result<Self, AttackError> {
        Self::with_timing(
            targets,
            peak_delta,
            oscillation_ratio,
            1.0 / 60.0,
            300.0,
            900.0,
            1.0,
            OscillationCoupling::Multiplicative,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_timing(
        targets: impl IntoIterator<Item = BusId>,
        peak_delta: f64,
        oscillation_ratio: f64,
        frequency_hz: f64,
        ramp_duration_s: f64,
        horizon_s: f64,
        time_step_s: f64,
        coupling: OscillationCoupling,
    ) -> Result<Self, AttackError> {
        let spec = Self {
            targets: targets.into_iter().collect(),
            peak_delta,
            oscillation_ratio,
            frequency_hz,
            ramp_duration_s,
            horizon_s,
            time_step_s,
            coupling,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if self.targets.is_empty() {
            return Err(AttackError::NoTargets);
        }
        if !(self.peak_delta > -1.0) {
            return Err(AttackError::DeltaRange(self.peak_delta));
        }
        if self.oscillation_ratio < 0.0 {
            return Err(AttackError::InvalidDynamicSpec(
                "oscillation ratio must be non-negative".into(),
            ));
        }
        if self.frequency_hz < 0.0 {
            return Err(AttackError::InvalidDynamicSpec(
                "frequency must be non-negative".into(),
            ));
        }
        if !(self.time_step_s > 0.0 && self.time_step_s <= self.horizon_s) {
            return Err(AttackError::InvalidDynamicSpec(format!(
                "time step {} s must lie in (0, horizon {} s]",
                self.time_step_s, self.horizon_s
            )));
        }
        if self.ramp_duration_s < 0.0 || self.ramp_duration_s > self.horizon_s {
            return Err(AttackError::InvalidDynamicSpec(
                "ramp duration must lie within the horizon".into(),
            ));
        }
        // worst-case multiplier over r in [0,1], sin in [-1,1] must stay
        // positive or target loads would flip sign
        let a = self.peak_delta;
        let b = self.oscillation_ratio;
        let worst = match self.coupling {
            OscillationCoupling::Multiplicative => {
                1.0 + (a * (1.0 - b)).min(a * (1.0 + b)).min(0.0)
            }
            OscillationCoupling::Additive => 1.0 + (a.min(0.0)) - (a * b).abs(),
        };
        if worst <= 0.0 {
            return Err(AttackError::InvalidDynamicSpec(format!(
                "multiplier can reach {worst:.3}, loads would go non-positive"
            )));
        }
        Ok(())
    }
}

/// Load multiplier at time `t`: ramp factor `r(t) = min(t / ramp, 1)`
/// applied to the peak delta, with the sinusoid coupled per the spec.
pub fn multiplier_at(spec: &DynamicAttackSpec, t: f64) -> Result<f64, AttackError> {
    if !(0.0..=spec.horizon_s).contains(&t) {
        return Err(AttackError::TimeOutOfRange {
            t,
            horizon: spec.horizon_s,
        });
    }
    let ramp = if spec.ramp_duration_s == 0.0 {
        1.0
    } else {
        (t / spec.ramp_duration_s).min(1.0)
    };
    let osc = spec.oscillation_ratio * (TAU * spec.frequency_hz * t).sin();
    Ok(match spec.coupling {
        OscillationCoupling::Multiplicative => 1.0 + spec.peak_delta * ramp * (1.0 + osc),
        OscillationCoupling::Additive => 1.0 + spec.peak_delta * (ramp + osc),
    })
}

/// Outcome of a step attack: the attacked steady state next to the
/// unattacked baseline, with loss deltas precomputed.
#[derive(Debug, Clone)]
pub struct StepAttackResult {
    pub baseline: PowerFlowSolution,
    pub attacked: PowerFlowSolution,
    pub baseline_losses: (f64, f64),
    pub attacked_losses: (f64, f64),
}

impl StepAttackResult {
    /// Loss increase caused by the attack, (kW, kVAr).
    pub fn loss_delta(&self) -> (f64, f64) {
        (
            self.attacked_losses.0 - self.baseline_losses.0,
            self.attacked_losses.1 - self.baseline_losses.1,
        )
    }
}

/// Scales the target loads by `1 + delta` and solves; the baseline solve of
/// the untouched case rides along for delta reporting.
pub fn run_step_attack(
    case: &NetworkCase,
    spec: &AttackSpec,
    options: &SolveOptions,
) -> Result<StepAttackResult, AttackError> {
    if spec.targets.contains(&case.slack_id()) {
        return Err(AttackError::SlackTarget);
    }
    let attacked_case = case.scale_loads(&spec.targets, spec.delta)?;
    let baseline = powerflow::solve(case, options)?;
    let attacked = powerflow::solve(&attacked_case, options)?;
    if !baseline.converged() || !attacked.converged() {
        return Err(AttackError::Unconverged);
    }
    let baseline_losses = powerflow::total_losses(&baseline)?;
    let attacked_losses = powerflow::total_losses(&attacked)?;
    Ok(StepAttackResult {
        baseline,
        attacked,
        baseline_losses,
        attacked_losses,
    })
}

/// One quasi-static sample of a dynamic attack.
#[derive(Debug, Clone, Serialize)]
pub struct TimeSample {
    pub t_s: f64,
    /// Voltage magnitudes in case bus order, p.u.
    pub v_mag: Vec<f64>,
    pub p_loss_kw: f64,
    pub q_loss_kvar: f64,
    pub min_v_pu: f64,
    pub min_bus: BusId,
    pub breach: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimeSeriesSummary {
    pub global_min_v_pu: f64,
    pub global_min_t_s: f64,
    pub global_min_bus: BusId,
    /// Earliest sample time with the minimum voltage below the band floor.
    pub first_breach_t_s: Option<f64>,
}

/// Full quasi-static trace of a dynamic attack.
#[derive(Debug, Clone, Serialize)]
pub struct TimeSeriesResult {
    pub bus_ids: Vec<BusId>,
    pub samples: Vec<TimeSample>,
    pub summary: TimeSeriesSummary,
}

/// Failure modes of a time-series run. An invalid spec never starts the
/// sweep; a non-converging sample aborts it but keeps the trace up to the
/// failing timestep.
#[derive(Debug, Error)]
pub enum TimeSeriesError {
    #[error(transparent)]
    Invalid(#[from] AttackError),
    #[error("time series aborted at t = {failed_t_s} s: power flow did not converge")]
    Aborted {
        failed_t_s: f64,
        partial: TimeSeriesResult,
    },
}

/// Sweeps the horizon on the sample grid `t = k * time_step`, scaling the
/// target loads by [`multiplier_at`] and solving each instant
/// independently. Samples are solved in parallel; the trace comes back in
/// time order.
pub fn run_time_series(
    case: &NetworkCase,
    spec: &DynamicAttackSpec,
    band: &VoltageBand,
    options: &SolveOptions,
) -> Result<TimeSeriesResult, TimeSeriesError> {
    spec.validate()?;
    if spec.targets.contains(&case.slack_id()) {
        return Err(AttackError::SlackTarget.into());
    }

    let steps = (spec.horizon_s / spec.time_step_s).floor() as usize;
    let sample_times: Vec<f64> = (0..=steps).map(|k| k as f64 * spec.time_step_s).collect();

    let outcomes: Vec<Result<TimeSample, f64>> = sample_times
        .par_iter()
        .map(|&t| sample_at(case, spec, band, options, t).map_err(|_| t))
        .collect();

    let mut samples = Vec::with_capacity(outcomes.len());
    let mut failed_at = None;
    for outcome in outcomes {
        match outcome {
            Ok(sample) => samples.push(sample),
            Err(t) => {
                failed_at = Some(t);
                break;
            }
        }
    }

    let bus_ids = case.buses().iter().map(|b| b.id).collect();
    let result = TimeSeriesResult {
        summary: summarize(&samples),
        bus_ids,
        samples,
    };
    match failed_at {
        None => Ok(result),
        Some(t) => Err(TimeSeriesError::Aborted {
            failed_t_s: t,
            partial: result,
        }),
    }
}

fn sample_at(
    case: &NetworkCase,
    spec: &DynamicAttackSpec,
    band: &VoltageBand,
    options: &SolveOptions,
    t: f64,
) -> Result<TimeSample, AttackError> {
    let m = multiplier_at(spec, t)?;
    let scaled = case.scale_loads(&spec.targets, m - 1.0)?;
    let sol = powerflow::solve(&scaled, options)?;
    if !sol.converged() {
        return Err(AttackError::Unconverged);
    }
    let (p_loss_kw, q_loss_kvar) = powerflow::total_losses(&sol)?;
    let (min_bus, min_v_pu) = sol.min_voltage();
    Ok(TimeSample {
        t_s: t,
        v_mag: sol.voltage_magnitudes(),
        p_loss_kw,
        q_loss_kvar,
        min_v_pu,
        min_bus,
        breach: min_v_pu < band.v_min,
    })
}

fn summarize(samples: &[TimeSample]) -> TimeSeriesSummary {
    let mut summary = TimeSeriesSummary {
        global_min_v_pu: f64::INFINITY,
        global_min_t_s: 0.0,
        global_min_bus: 0,
        first_breach_t_s: None,
    };
    for s in samples {
        if s.min_v_pu < summary.global_min_v_pu {
            summary.global_min_v_pu = s.min_v_pu;
            summary.global_min_t_s = s.t_s;
            summary.global_min_bus = s.min_bus;
        }
        if s.breach && summary.first_breach_t_s.is_none() {
            summary.first_breach_t_s = Some(s.t_s);
        }
    }
    summary
}

/// Trace summary as CSV: `t_s,min_v_pu,p_loss_kw,q_loss_kvar,breach`.
pub fn series_csv(series: &TimeSeriesResult) -> String {
    let mut out = String::from("t_s,min_v_pu,p_loss_kw,q_loss_kvar,breach\n");
    for s in &series.samples {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{}\n",
            s.t_s, s.min_v_pu, s.p_loss_kw, s.q_loss_kvar, s.breach
        ));
    }
    out
}

/// Wide per-bus voltage trace as CSV: `t_s,v_<id>,...` one column per bus.
pub fn voltages_csv(series: &TimeSeriesResult) -> String {
    let mut out = String::from("t_s");
    for id in &series.bus_ids {
        out.push_str(&format!(",v_{id}"));
    }
    out.push('\n');
    for s in &series.samples {
        out.push_str(&format!("{}", s.t_s));
        for v in &s.v_mag {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
    }
    out
}

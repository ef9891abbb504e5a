//! DG siting and sizing: placement objective and a global-best particle
//! swarm optimizer over a mixed bus/size encoding.
//!
//! A particle is six coordinates: three bus positions and three sizes in
//! kW. [`decode_particle`] turns any finite position into a valid
//! three-unit placement by clamping, rounding and duplicate repair, so the
//! swarm never produces an infeasible candidate. Randomness lives entirely
//! in the sequential init/update steps; fitness evaluations are pure and
//! run in parallel, which keeps results bit-identical for a given seed
//! regardless of thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{BusId, CaseError, DgPlacement, NetworkCase, DG_MAX_KW, DG_MIN_KW};
use crate::powerflow::{self, PowerFlowError, PowerFlowSolution, SolveOptions, VoltageBand};

/// Objective value assigned to a placement whose power flow diverges. Large
/// but finite so the swarm can keep moving.
pub const DIVERGENCE_PENALTY: f64 = 1e12;

#[derive(Debug, Error)]
pub enum DgoptError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error("invalid objective weights: {0}")]
    InvalidWeights(String),
    #[error("invalid PSO configuration: {0}")]
    InvalidConfig(String),
    #[error("case needs at least three non-slack buses to host a placement")]
    TooFewBuses,
}

/// Weights of the placement objective.
///
/// The objective sums, over non-slack buses, the squared deviation from
/// `v_ref` plus `alpha`/`beta` times the parent-branch real/reactive loss
/// in per unit, plus `band_penalty` times the squared band violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub v_ref: f64,
    pub alpha: f64,
    pub beta: f64,
    pub band_penalty: f64,
    pub band: VoltageBand,
}

impl Default for ObjectiveWeights {
    /// Loss weights of 8.0 balance the 32-bus deviation sum against p.u.
    /// losses so that optimized placements cut losses to paper-like levels
    /// instead of overbuilding for flat voltage alone.
    fn default() -> Self {
        Self {
            v_ref: 1.0,
            alpha: 8.0,
            beta: 8.0,
            band_penalty: 100.0,
            band: VoltageBand::default(),
        }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<(), DgoptError> {
        if !(0.9..=1.1).contains(&self.v_ref) {
            return Err(DgoptError::InvalidWeights(format!(
                "v_ref {} outside [0.9, 1.1]",
                self.v_ref
            )));
        }
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("band_penalty", self.band_penalty),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(DgoptError::InvalidWeights(format!(
                    "{name} must be finite and non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Objective of an already-solved state.
pub fn objective_of_solution(
    solution: &PowerFlowSolution,
    weights: &ObjectiveWeights,
) -> Result<f64, PowerFlowError> {
    if !solution.converged() {
        return Err(PowerFlowError::Unconverged);
    }
    let s_base_kva = solution.s_base_mva() * 1000.0;
    let voltages = solution.voltages_raw();
    let parent_branch = solution.parent_branch_raw();
    let losses = solution.branch_losses();
    let mut deviation = 0.0;
    let mut p_loss_kw = 0.0;
    let mut q_loss_kvar = 0.0;
    let mut band_violation = 0.0;
    for i in 0..voltages.len() {
        if i == solution.slack_index() {
            continue;
        }
        let vm = voltages[i].norm();
        deviation += (vm - weights.v_ref) * (vm - weights.v_ref);
        let pb = parent_branch[i].expect("non-slack bus has a parent branch");
        p_loss_kw += losses[pb].0;
        q_loss_kvar += losses[pb].1;
        let low = (weights.band.v_min - vm).max(0.0);
        let high = (vm - weights.band.v_max).max(0.0);
        band_violation += low * low + high * high;
    }
    Ok(deviation
        + weights.alpha * p_loss_kw / s_base_kva
        + weights.beta * q_loss_kvar / s_base_kva
        + weights.band_penalty * band_violation)
}

/// Applies the placement, solves, and scores the result. A diverging power
/// flow yields [`DIVERGENCE_PENALTY`] rather than an error so optimization
/// can continue past infeasible corners of the search space.
pub fn evaluate_objective(
    case: &NetworkCase,
    placement: &DgPlacement,
    weights: &ObjectiveWeights,
) -> Result<f64, DgoptError> {
    weights.validate()?;
    let with_dg = case.apply_dg(placement)?;
    let solution = powerflow::solve(&with_dg, &SolveOptions::default())?;
    if !solution.converged() {
        return Ok(DIVERGENCE_PENALTY);
    }
    Ok(objective_of_solution(&solution, weights)?)
}

/// Swarm controls. `velocity_clamp` is the per-dimension speed limit as a
/// fraction of that dimension's search range. `size_grid`, when set,
/// snaps decoded sizes to the nearest grid value, restricting the search
/// to discrete unit sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    pub velocity_clamp: f64,
    #[serde(default)]
    pub size_grid: Option<Vec<f64>>,
}

impl Default for PsoConfig {
    /// Constriction-style coefficients with the conventional swarm size.
    fn default() -> Self {
        Self {
            swarm_size: 500,
            iterations: 100,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            seed: 42,
            velocity_clamp: 0.2,
            size_grid: None,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), DgoptError> {
        if self.swarm_size == 0 {
            return Err(DgoptError::InvalidConfig("swarm_size must be at least 1".into()));
        }
        for (name, w) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(DgoptError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {w}"
                )));
            }
        }
        if !(self.velocity_clamp > 0.0 && self.velocity_clamp.is_finite()) {
            return Err(DgoptError::InvalidConfig(
                "velocity_clamp must be a positive fraction".into(),
            ));
        }
        if let Some(grid) = &self.size_grid {
            if grid.is_empty() {
                return Err(DgoptError::InvalidConfig("size_grid must not be empty".into()));
            }
            for &g in grid {
                if !(DG_MIN_KW..=DG_MAX_KW).contains(&g) {
                    return Err(DgoptError::InvalidConfig(format!(
                        "size_grid value {g} kW outside [{DG_MIN_KW}, {DG_MAX_KW}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Optimization outcome with the full convergence trace and config echo.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub best_placement: DgPlacement,
    pub best_objective: f64,
    /// Global best objective after initialization and after each iteration;
    /// non-increasing by construction.
    pub history: Vec<f64>,
    pub evaluations: u64,
    /// Evaluations that hit [`DIVERGENCE_PENALTY`].
    pub infeasible_evaluations: u64,
    pub config: PsoConfig,
}

/// Decodes a raw particle position into a valid placement: bus coordinates
/// clamp to the non-slack id range and round to the nearest id, duplicates
/// advance upward (wrapping) to the nearest free id; sizes clamp to the
/// Eq-bounds `[100, 5000]` kW.
pub fn decode_particle(position: &[f64; 6], case: &NetworkCase) -> DgPlacement {
    decode_with_grid(position, &case.non_slack_ids(), None)
}

fn decode_with_grid(
    position: &[f64; 6],
    candidates: &[BusId],
    size_grid: Option<&[f64]>,
) -> DgPlacement {
    assert!(candidates.len() >= 3, "decode needs three candidate buses");
    let lo = *candidates.first().unwrap() as f64;
    let hi = *candidates.last().unwrap() as f64;
    let mut taken: Vec<BusId> = Vec::with_capacity(3);
    let mut units = [(0 as BusId, 0.0f64); 3];
    for i in 0..3 {
        let rounded = position[i].clamp(lo, hi).round() as BusId;
        let bus = next_free_bus(rounded, candidates, &taken);
        taken.push(bus);
        units[i].0 = bus;
    }
    for i in 0..3 {
        let raw = position[i + 3];
        units[i].1 = match size_grid {
            Some(grid) => snap_to_grid(raw, grid),
            None => {
                let clamped = raw.clamp(DG_MIN_KW, DG_MAX_KW);
                // NaN clamps stay NaN; fall back to the floor
                if clamped.is_finite() { clamped } else { DG_MIN_KW }
            }
        };
    }
    DgPlacement::new(units).expect("decode yields distinct buses and bounded sizes")
}

/// Nearest candidate id at or above `target`, skipping occupied ids and
/// wrapping past the end.
fn next_free_bus(target: BusId, candidates: &[BusId], taken: &[BusId]) -> BusId {
    let start = candidates.partition_point(|&id| id < target) % candidates.len();
    for k in 0..candidates.len() {
        let id = candidates[(start + k) % candidates.len()];
        if !taken.contains(&id) {
            return id;
        }
    }
    unreachable!("fewer than three units over three or more candidates")
}

fn snap_to_grid(value: f64, grid: &[f64]) -> f64 {
    let mut best = grid[0];
    let mut best_d = (value - grid[0]).abs();
    for &g in &grid[1..] {
        let d = (value - g).abs();
        if d < best_d {
            best = g;
            best_d = d;
        }
    }
    best
}

/// Global-best PSO over the six-dimensional placement encoding.
/// Deterministic for a given seed.
pub fn pso_optimize(
    case: &NetworkCase,
    weights: &ObjectiveWeights,
    config: &PsoConfig,
) -> Result<OptimizationResult, DgoptError> {
    config.validate()?;
    weights.validate()?;
    let candidates = case.non_slack_ids();
    if candidates.len() < 3 {
        return Err(DgoptError::TooFewBuses);
    }

    let (size_lo, size_hi) = match &config.size_grid {
        Some(grid) => (
            grid.iter().cloned().fold(f64::INFINITY, f64::min),
            grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ),
        None => (DG_MIN_KW, DG_MAX_KW),
    };
    let bus_lo = *candidates.first().unwrap() as f64;
    let bus_hi = *candidates.last().unwrap() as f64;
    let lo = [bus_lo, bus_lo, bus_lo, size_lo, size_lo, size_lo];
    let hi = [bus_hi, bus_hi, bus_hi, size_hi, size_hi, size_hi];
    let vmax: [f64; 6] = std::array::from_fn(|d| {
        let range = hi[d] - lo[d];
        if range > 0.0 { config.velocity_clamp * range } else { 1.0 }
    });

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let swarm = config.swarm_size;
    let mut positions: Vec<[f64; 6]> = (0..swarm)
        .map(|_| std::array::from_fn(|d| sample_uniform(&mut rng, lo[d], hi[d])))
        .collect();
    let mut velocities = vec![[0.0f64; 6]; swarm];

    let grid = config.size_grid.as_deref();
    let evaluate = |positions: &[[f64; 6]]| -> Vec<f64> {
        positions
            .par_iter()
            .map(|p| {
                let placement = decode_with_grid(p, &candidates, grid);
                evaluate_objective(case, &placement, weights)
                    .expect("decoded placements satisfy objective preconditions")
            })
            .collect()
    };

    let mut fitness = evaluate(&positions);
    let mut evaluations = swarm as u64;
    let mut infeasible = count_infeasible(&fitness);

    let mut pbest_pos = positions.clone();
    let mut pbest_fit = fitness.clone();
    let mut gbest_idx = argmin(&pbest_fit);
    let mut gbest_pos = pbest_pos[gbest_idx];
    let mut gbest_fit = pbest_fit[gbest_idx];
    let mut history = Vec::with_capacity(config.iterations + 1);
    history.push(gbest_fit);

    for _ in 0..config.iterations {
        for p in 0..swarm {
            for d in 0..6 {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = config.inertia * velocities[p][d]
                    + config.cognitive * r1 * (pbest_pos[p][d] - positions[p][d])
                    + config.social * r2 * (gbest_pos[d] - positions[p][d]);
                velocities[p][d] = v.clamp(-vmax[d], vmax[d]);
                positions[p][d] = (positions[p][d] + velocities[p][d]).clamp(lo[d], hi[d]);
            }
        }

        fitness = evaluate(&positions);
        evaluations += swarm as u64;
        infeasible += count_infeasible(&fitness);

        for p in 0..swarm {
            if fitness[p] < pbest_fit[p] {
                pbest_fit[p] = fitness[p];
                pbest_pos[p] = positions[p];
            }
        }
        gbest_idx = argmin(&pbest_fit);
        if pbest_fit[gbest_idx] < gbest_fit {
            gbest_fit = pbest_fit[gbest_idx];
            gbest_pos = pbest_pos[gbest_idx];
        }
        history.push(gbest_fit);
    }

    Ok(OptimizationResult {
        best_placement: decode_with_grid(&gbest_pos, &candidates, grid),
        best_objective: gbest_fit,
        history,
        evaluations,
        infeasible_evaluations: infeasible,
        config: config.clone(),
    })
}

fn sample_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn count_infeasible(fitness: &[f64]) -> u64 {
    fitness.iter().filter(|f| **f >= DIVERGENCE_PENALTY).count() as u64
}

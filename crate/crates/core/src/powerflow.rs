//! Steady-state power flow for radial cases via backward/forward sweep,
//! plus loss accounting, voltage-magnitude criticality ranking and band
//! checks.
//!
//! The sweep accumulates branch currents from the leaves to the slack bus
//! (backward) and updates voltages from the slack outwards (forward),
//! starting flat at the slack voltage, until the largest per-bus voltage
//! change drops below tolerance. Loads are constant-power.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{BusId, CaseError, NetworkCase};

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("operation requires a converged solution")]
    Unconverged,
    #[error("bus {0} is the slack bus")]
    SlackBus(BusId),
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("k = {k} outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
}

/// Sweep iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Convergence threshold on the largest per-bus voltage change, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100,
        }
    }
}

/// Allowable steady-state voltage range, p.u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageBand {
    pub v_min: f64,
    pub v_max: f64,
}

impl VoltageBand {
    pub fn new(v_min: f64, v_max: f64) -> Self {
        assert!(v_min < v_max, "voltage band floor must be below ceiling");
        Self { v_min, v_max }
    }
}

impl Default for VoltageBand {
    /// The planning band used throughout: [0.917, 1.042] p.u.
    fn default() -> Self {
        Self::new(0.917, 1.042)
    }
}

/// Converged (or diagnosed) state of one sweep run.
#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    bus_ids: Vec<BusId>,
    slack_idx: usize,
    /// Complex bus voltages, p.u.
    voltages: Vec<Complex64>,
    /// Per-branch endpoints as (from, to) ids, case order.
    branch_ends: Vec<(BusId, BusId)>,
    /// Sending-end complex power per branch, p.u.
    branch_flows: Vec<Complex64>,
    /// Per-branch losses, (kW, kVAr).
    branch_losses: Vec<(f64, f64)>,
    /// Per bus index, the branch feeding it.
    parent_branch: Vec<Option<usize>>,
    s_base_mva: f64,
    iterations: usize,
    max_mismatch: f64,
    converged: bool,
}

/// Solves the case. Non-convergence is not an error: the returned solution
/// carries diagnostics with `converged() == false`, and downstream
/// operations refuse to consume it.
pub fn solve(case: &NetworkCase, options: &SolveOptions) -> Result<PowerFlowSolution, PowerFlowError> {
    if !(options.tolerance > 0.0) {
        return Err(PowerFlowError::InvalidOptions(format!(
            "tolerance must be positive, got {}",
            options.tolerance
        )));
    }
    if options.max_iterations == 0 {
        return Err(PowerFlowError::InvalidOptions(
            "max_iterations must be at least 1".into(),
        ));
    }
    let topo = case.validate_radial()?;
    let pu = case.to_per_unit();
    let n = pu.bus_ids.len();
    let net_load = pu.net_load();

    let mut v = vec![Complex64::new(pu.slack_voltage, 0.0); n];
    let mut branch_current = vec![Complex64::new(0.0, 0.0); pu.branches.len()];
    let mut injection = vec![Complex64::new(0.0, 0.0); n];

    let mut iterations = 0;
    let mut max_dv = f64::INFINITY;
    let mut converged = false;
    while iterations < options.max_iterations {
        iterations += 1;

        // Backward sweep: accumulate branch currents leaf to root. The
        // demand current at each bus uses the present voltage iterate.
        for inj in injection.iter_mut() {
            *inj = Complex64::new(0.0, 0.0);
        }
        for cur in branch_current.iter_mut() {
            *cur = Complex64::new(0.0, 0.0);
        }
        for &b in topo.order.iter().rev() {
            let Some(pb) = topo.parent_branch[b] else { continue };
            injection[b] += (net_load[b] / v[b]).conj();
            let current = injection[b];
            branch_current[pb] = current;
            injection[topo.parent_bus[b].expect("non-slack bus has parent")] += current;
        }

        // Forward sweep: push voltages from the slack outwards.
        max_dv = 0.0;
        for &b in &topo.order {
            let Some(pb) = topo.parent_branch[b] else { continue };
            let parent = topo.parent_bus[b].expect("non-slack bus has parent");
            let v_new = v[parent] - pu.branches[pb].z * branch_current[pb];
            let dv = (v_new - v[b]).norm();
            if dv > max_dv {
                max_dv = dv;
            }
            v[b] = v_new;
        }

        if max_dv < options.tolerance {
            converged = true;
            break;
        }
    }

    // Outputs come from the final (current, voltage) pair of the last
    // iteration, which is branch-wise consistent: the forward sweep defined
    // each downstream voltage from exactly these currents.
    let s_base_kva = pu.s_base_mva * 1000.0;
    let mut branch_flows = vec![Complex64::new(0.0, 0.0); pu.branches.len()];
    let mut branch_losses = vec![(0.0, 0.0); pu.branches.len()];
    for (bi, br) in pu.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        // Branch orientation in the tree may oppose the case file's
        // from/to; flows are reported at the tree-parent end.
        let (send_idx, current) = orient(&topo, bi, br.from_idx, br.to_idx, branch_current[bi]);
        branch_flows[bi] = v[send_idx] * current.conj();
        let loss = current.norm_sqr() * br.z;
        branch_losses[bi] = (loss.re * s_base_kva, loss.im * s_base_kva);
    }

    Ok(PowerFlowSolution {
        bus_ids: pu.bus_ids,
        slack_idx: pu.slack_idx,
        voltages: v,
        branch_ends: case.branches().iter().map(|b| (b.from, b.to)).collect(),
        branch_flows,
        branch_losses,
        parent_branch: topo.parent_branch,
        s_base_mva: pu.s_base_mva,
        iterations,
        max_mismatch: max_dv,
        converged,
    })
}

/// Picks the sending end of a branch: the tree parent of its child bus.
fn orient(
    topo: &crate::net::RadialTopology,
    branch_idx: usize,
    from_idx: usize,
    to_idx: usize,
    current: Complex64,
) -> (usize, Complex64) {
    if topo.parent_branch[to_idx] == Some(branch_idx) {
        (from_idx, current)
    } else {
        (to_idx, current)
    }
}

impl PowerFlowSolution {
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Largest per-bus voltage change of the final iteration, p.u.
    pub fn max_mismatch(&self) -> f64 {
        self.max_mismatch
    }

    pub fn bus_ids(&self) -> &[BusId] {
        &self.bus_ids
    }

    pub fn slack_id(&self) -> BusId {
        self.bus_ids[self.slack_idx]
    }

    pub fn s_base_mva(&self) -> f64 {
        self.s_base_mva
    }

    /// Complex voltage of a bus, p.u.
    pub fn voltage(&self, bus: BusId) -> Option<Complex64> {
        self.index_of(bus).map(|i| self.voltages[i])
    }

    /// Voltage magnitude of a bus, p.u.
    pub fn voltage_magnitude(&self, bus: BusId) -> Option<f64> {
        self.voltage(bus).map(|v| v.norm())
    }

    /// All voltage magnitudes in case bus order, p.u.
    pub fn voltage_magnitudes(&self) -> Vec<f64> {
        self.voltages.iter().map(|v| v.norm()).collect()
    }

    /// Lowest voltage magnitude over all buses, with its bus id.
    pub fn min_voltage(&self) -> (BusId, f64) {
        let mut best = (self.bus_ids[0], self.voltages[0].norm());
        for (i, v) in self.voltages.iter().enumerate() {
            let m = v.norm();
            if m < best.1 || (m == best.1 && self.bus_ids[i] < best.0) {
                best = (self.bus_ids[i], m);
            }
        }
        best
    }

    /// Sending-end complex power of every branch, p.u.
    pub fn branch_flows(&self) -> &[Complex64] {
        &self.branch_flows
    }

    /// Per-branch losses in case branch order, (kW, kVAr).
    pub fn branch_losses(&self) -> &[(f64, f64)] {
        &self.branch_losses
    }

    /// Net power drawn from the slack bus, p.u.
    pub fn slack_injection_pu(&self) -> Complex64 {
        self.parent_branch
            .iter()
            .enumerate()
            .filter_map(|(bus_idx, pb)| {
                pb.filter(|_| self.parent_of(bus_idx) == Some(self.slack_idx))
            })
            .map(|pb| self.branch_flows[pb])
            .sum()
    }

    fn parent_of(&self, bus_idx: usize) -> Option<usize> {
        let pb = self.parent_branch[bus_idx]?;
        let (from, to) = self.branch_ends[pb];
        let from_idx = self.index_of(from)?;
        let to_idx = self.index_of(to)?;
        Some(if to_idx == bus_idx { from_idx } else { to_idx })
    }

    fn index_of(&self, bus: BusId) -> Option<usize> {
        self.bus_ids.iter().position(|&id| id == bus)
    }

    pub(crate) fn voltages_raw(&self) -> &[Complex64] {
        &self.voltages
    }

    pub(crate) fn parent_branch_raw(&self) -> &[Option<usize>] {
        &self.parent_branch
    }

    pub(crate) fn slack_index(&self) -> usize {
        self.slack_idx
    }

    fn require_converged(&self) -> Result<(), PowerFlowError> {
        if self.converged {
            Ok(())
        } else {
            Err(PowerFlowError::Unconverged)
        }
    }
}

/// Sums losses over all in-service branches, (kW, kVAr).
///
/// Accumulation runs bus by bus over each parent branch, in case bus order,
/// so it matches a [`branch_loss_at`] sum term for term.
pub fn total_losses(solution: &PowerFlowSolution) -> Result<(f64, f64), PowerFlowError> {
    solution.require_converged()?;
    let mut p = 0.0;
    let mut q = 0.0;
    for pb in solution.parent_branch.iter().flatten() {
        let (lp, lq) = solution.branch_losses[*pb];
        p += lp;
        q += lq;
    }
    Ok((p, q))
}

/// Loss of the unique parent branch feeding `bus`, (kW, kVAr). Summed over
/// all non-slack buses this partitions [`total_losses`] exactly.
pub fn branch_loss_at(solution: &PowerFlowSolution, bus: BusId) -> Result<(f64, f64), PowerFlowError> {
    solution.require_converged()?;
    let idx = solution
        .index_of(bus)
        .ok_or(PowerFlowError::UnknownBus(bus))?;
    let pb = solution.parent_branch[idx].ok_or(PowerFlowError::SlackBus(bus))?;
    Ok(solution.branch_losses[pb])
}

/// One entry of a criticality ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedBus {
    pub bus: BusId,
    pub vm: f64,
    pub rank: usize,
}

/// Non-slack buses ordered ascending by voltage magnitude; the lowest (most
/// vulnerable) bus comes first. Ties break on ascending bus id.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalityRanking {
    entries: Vec<RankedBus>,
}

impl CriticalityRanking {
    pub fn entries(&self) -> &[RankedBus] {
        &self.entries
    }

    /// The `k` most vulnerable bus ids.
    pub fn select_critical(&self, k: usize) -> Result<Vec<BusId>, PowerFlowError> {
        if k == 0 || k > self.entries.len() {
            return Err(PowerFlowError::KOutOfRange {
                k,
                max: self.entries.len(),
            });
        }
        Ok(self.entries[..k].iter().map(|e| e.bus).collect())
    }
}

/// Ranks non-slack buses by voltage magnitude, most vulnerable first.
pub fn rank_vm(solution: &PowerFlowSolution) -> Result<CriticalityRanking, PowerFlowError> {
    solution.require_converged()?;
    let mut entries: Vec<RankedBus> = solution
        .bus_ids
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != solution.slack_idx)
        .map(|(i, &bus)| RankedBus {
            bus,
            vm: solution.voltages[i].norm(),
            rank: 0,
        })
        .collect();
    entries.sort_by(|a, b| a.vm.total_cmp(&b.vm).then(a.bus.cmp(&b.bus)));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(CriticalityRanking { entries })
}

/// Band check outcome over all buses.
#[derive(Debug, Clone, Serialize)]
pub struct LimitReport {
    /// Buses outside the band with their magnitudes.
    pub violations: Vec<(BusId, f64)>,
    pub min_bus: BusId,
    pub min_v: f64,
    pub max_bus: BusId,
    pub max_v: f64,
    pub breach: bool,
}

/// Lists every bus outside the band and the global extremes.
pub fn check_limits(
    solution: &PowerFlowSolution,
    band: &VoltageBand,
) -> Result<LimitReport, PowerFlowError> {
    solution.require_converged()?;
    let mut violations = Vec::new();
    let mut min = (solution.bus_ids[0], f64::INFINITY);
    let mut max = (solution.bus_ids[0], f64::NEG_INFINITY);
    for (i, v) in solution.voltages.iter().enumerate() {
        let bus = solution.bus_ids[i];
        let m = v.norm();
        if m < band.v_min || m > band.v_max {
            violations.push((bus, m));
        }
        if m < min.1 {
            min = (bus, m);
        }
        if m > max.1 {
            max = (bus, m);
        }
    }
    Ok(LimitReport {
        breach: !violations.is_empty(),
        violations,
        min_bus: min.0,
        min_v: min.1,
        max_bus: max.0,
        max_v: max.1,
    })
}

/// Bus results as CSV: `bus_id,v_pu,angle_deg`.
pub fn bus_csv(solution: &PowerFlowSolution) -> String {
    let mut out = String::from("bus_id,v_pu,angle_deg\n");
    for (i, &bus) in solution.bus_ids.iter().enumerate() {
        let v = solution.voltages[i];
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            bus,
            v.norm(),
            v.arg().to_degrees()
        ));
    }
    out
}

/// Branch results as CSV: `branch_id,from,to,p_loss_kw,q_loss_kvar`.
pub fn branch_csv(solution: &PowerFlowSolution) -> String {
    let mut out = String::from("branch_id,from,to,p_loss_kw,q_loss_kvar\n");
    for (bi, &(from, to)) in solution.branch_ends.iter().enumerate() {
        let (p, q) = solution.branch_losses[bi];
        out.push_str(&format!("{},{},{},{:.6},{:.6}\n", bi + 1, from, to, p, q));
    }
    out
}

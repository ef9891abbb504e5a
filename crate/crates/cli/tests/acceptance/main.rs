//! Acceptance suite. Every test prints one `ACCEPTANCE C<n> PASS|FAIL`
//! line (visible with `--nocapture`) before asserting, so a full run
//! doubles as the verification report.
//!
//! Reference values reported in the literature live in
//! `cases/reported_values.json` and are logged against, not asserted,
//! wherever the bundled standard dataset cannot reproduce them; the two
//! checks that encode such unreproducible outcomes (the post-DG critical
//! set and the dynamic-attack band breach) are expected to stay red and
//! say so in their output.

mod oracle;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;
use std::time::Instant;

use serde::Deserialize;

use voltplan::attack::{self, AttackSpec, DynamicAttackSpec, OscillationCoupling};
use voltplan::casegen;
use voltplan::dgopt::{self, ObjectiveWeights, OptimizationResult, PsoConfig};
use voltplan::net::{bundled_ieee33, Branch, Bus, BusId, DgPlacement, NetworkCase};
use voltplan::powerflow::{self, SolveOptions, VoltageBand};

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[derive(Deserialize)]
struct ReportedValues {
    base_case_step_attacks: ReportedAttacks,
    dg_placement: ReportedPlacement,
    dynamic_attack: ReportedDynamic,
}

#[derive(Deserialize)]
struct ReportedAttacks {
    targets: Vec<BusId>,
    rows: Vec<ReportedAttackRow>,
}

#[derive(Deserialize)]
struct ReportedAttackRow {
    load_increase: f64,
    real_pl_kw: f64,
    reactive_pl_kvar: f64,
}

#[derive(Deserialize)]
struct ReportedPlacement {
    units: Vec<ReportedUnit>,
}

#[derive(Deserialize)]
struct ReportedUnit {
    bus: BusId,
    p_dg_kw: f64,
}

#[derive(Deserialize)]
struct ReportedDynamic {
    targets: Vec<BusId>,
    peak_delta: f64,
    oscillation_ratio: f64,
    horizon_s: f64,
    reported_min_v_pu: f64,
}

fn reported_values() -> ReportedValues {
    let text = std::fs::read_to_string(workspace_file("cases/reported_values.json"))
        .expect("reported values file ships with the repo");
    serde_json::from_str(&text).expect("reported values parse")
}

fn reported_placement(values: &ReportedValues) -> DgPlacement {
    let u = &values.dg_placement.units;
    DgPlacement::new([
        (u[0].bus, u[0].p_dg_kw),
        (u[1].bus, u[1].p_dg_kw),
        (u[2].bus, u[2].p_dg_kw),
    ])
    .expect("reported placement is valid")
}

/// The replication profile: slack at 0.99 p.u., band [0.917, 1.042].
fn replication_case() -> NetworkCase {
    bundled_ieee33().with_slack_voltage(0.99).unwrap()
}

fn band() -> VoltageBand {
    VoltageBand::new(0.917, 1.042)
}

fn tight_options() -> SolveOptions {
    SolveOptions {
        tolerance: 1e-9,
        max_iterations: 300,
    }
}

/// Random feeder sizes for the oracle-equivalence set: 50 seeded cases
/// spanning 5 to 40 buses.
fn oracle_fleet() -> Vec<NetworkCase> {
    (0..50u64)
        .map(|seed| casegen::random_radial_case(seed, 5 + (seed as usize * 7) % 36))
        .collect()
}

/// Optimization under the default profile, shared by the criteria that
/// consume the optimized placement.
static OPTIMIZED: LazyLock<(OptimizationResult, f64)> = LazyLock::new(|| {
    let case = bundled_ieee33();
    let started = Instant::now();
    let result = dgopt::pso_optimize(&case, &ObjectiveWeights::default(), &PsoConfig::default())
        .expect("optimization runs");
    (result, started.elapsed().as_secs_f64())
});

#[test]
fn criterion_01_oracle_equivalence() {
    let started = Instant::now();
    let opts = SolveOptions {
        tolerance: 1e-8,
        max_iterations: 300,
    };
    let mut cases = vec![bundled_ieee33()];
    cases.extend(oracle_fleet());

    let mut worst_dv = 0.0f64;
    let mut worst_loss_dev = 0.0f64;
    let mut max_oracle_iterations = 0usize;
    for (i, case) in cases.iter().enumerate() {
        let sweep = powerflow::solve(case, &opts).expect("sweep runs");
        assert!(sweep.converged(), "sweep diverged on case {i}");
        let reference = oracle::solve_gauss_seidel(case, 1e-12, 200_000);
        assert!(reference.converged, "oracle diverged on case {i}");
        max_oracle_iterations = max_oracle_iterations.max(reference.iterations);
        for (a, b) in sweep
            .voltage_magnitudes()
            .iter()
            .zip(reference.voltages.iter().map(|v| v.norm()))
        {
            worst_dv = worst_dv.max((a - b).abs());
        }
        let (sweep_p, _) = powerflow::total_losses(&sweep).unwrap();
        if reference.total_loss.0 > 1e-9 {
            worst_loss_dev = worst_loss_dev
                .max((sweep_p - reference.total_loss.0).abs() / reference.total_loss.0);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst_dv < 1e-4 && worst_loss_dev < 1e-3 && elapsed < 10.0;
    println!(
        "ACCEPTANCE C1 {} oracle equivalence over {} cases: max |dV| {worst_dv:.3e} p.u. \
         (< 1e-4), worst loss deviation {:.4}% (< 0.1%), {elapsed:.2} s (< 10 s, oracle \
         needed up to {max_oracle_iterations} Gauss-Seidel iterations)",
        if pass { "PASS" } else { "FAIL" },
        cases.len(),
        worst_loss_dev * 100.0,
    );
    assert!(worst_dv < 1e-4, "voltage deviation {worst_dv}");
    assert!(worst_loss_dev < 1e-3, "loss deviation {worst_loss_dev}");
    assert!(elapsed < 10.0, "runtime {elapsed} s");
}

#[test]
fn criterion_02_power_balance() {
    let opts = tight_options();
    let mut solutions: Vec<(NetworkCase, powerflow::PowerFlowSolution)> = Vec::new();

    for case in oracle_fleet() {
        let sol = powerflow::solve(&case, &opts).unwrap();
        assert!(sol.converged());
        solutions.push((case, sol));
    }
    // DG and attack variants of the reference feeder
    let values = reported_values();
    let with_dg = replication_case()
        .apply_dg(&reported_placement(&values))
        .unwrap();
    let attacked = with_dg
        .scale_loads(&BTreeSet::from([10, 17, 18]), 1.0)
        .unwrap();
    for case in [bundled_ieee33(), replication_case(), with_dg, attacked] {
        let sol = powerflow::solve(&case, &opts).unwrap();
        assert!(sol.converged());
        solutions.push((case, sol));
    }

    let mut worst = 0.0f64;
    for (case, sol) in &solutions {
        let s_base_kva = case.s_base_mva() * 1000.0;
        let (load_p, load_q) = case.total_load();
        let slack = sol.slack_injection_pu();
        let (loss_p, loss_q) = powerflow::total_losses(sol).unwrap();
        let p = slack.re + case.total_dg_kw() / s_base_kva
            - load_p / s_base_kva
            - loss_p / s_base_kva;
        let q = slack.im - load_q / s_base_kva - loss_q / s_base_kva;
        worst = worst.max(p.abs()).max(q.abs());
    }
    let pass = worst < 1e-6;
    println!(
        "ACCEPTANCE C2 {} power balance on {} converged solutions: worst imbalance \
         {worst:.3e} p.u. (< 1e-6)",
        if pass { "PASS" } else { "FAIL" },
        solutions.len(),
    );
    assert!(worst < 1e-6, "imbalance {worst}");
}

#[test]
fn criterion_03_criticality_reproduction() {
    let opts = tight_options();
    let values = reported_values();

    let base = powerflow::solve(&replication_case(), &opts).unwrap();
    let base_bottom: BTreeSet<BusId> = powerflow::rank_vm(&base)
        .unwrap()
        .select_critical(3)
        .unwrap()
        .into_iter()
        .collect();
    let base_ok = base_bottom == BTreeSet::from([16, 17, 18]);

    let with_dg = replication_case()
        .apply_dg(&reported_placement(&values))
        .unwrap();
    let dg_sol = powerflow::solve(&with_dg, &opts).unwrap();
    let dg_bottom: BTreeSet<BusId> = powerflow::rank_vm(&dg_sol)
        .unwrap()
        .select_critical(3)
        .unwrap()
        .into_iter()
        .collect();
    let dg_ok = dg_bottom == BTreeSet::from([10, 17, 18]);

    let pass = base_ok && dg_ok;
    println!(
        "ACCEPTANCE C3 {} criticality reproduction: base bottom-3 {base_bottom:?} \
         (expected {{16, 17, 18}}: {}), post-DG bottom-3 {dg_bottom:?} (expected \
         {{10, 17, 18}}: {}). The post-DG set is not reproducible from the standard \
         dataset: the reported placement lifts the main-line buses past the 31-33 \
         lateral, whose heavy reactive demand P-only DG cannot relieve.",
        if pass { "PASS" } else { "FAIL" },
        if base_ok { "ok" } else { "MISMATCH" },
        if dg_ok { "ok" } else { "MISMATCH" },
    );
    assert!(base_ok, "base-case bottom-3 was {base_bottom:?}");
    assert!(dg_ok, "post-DG bottom-3 was {dg_bottom:?}");
}

#[test]
fn criterion_04_attack_severity() {
    let opts = tight_options();
    let values = reported_values();
    let case = replication_case();
    let targets: Vec<BusId> = values.base_case_step_attacks.targets.clone();

    // log each reported row, then assert the 15% breach
    let mut log = String::new();
    let mut min_v_at_15 = f64::INFINITY;
    for row in &values.base_case_step_attacks.rows {
        let spec = AttackSpec::new(targets.iter().copied(), row.load_increase).unwrap();
        let result = attack::run_step_attack(&case, &spec, &opts).unwrap();
        let (p, q) = result.attacked_losses;
        log.push_str(&format!(
            " [{:.0}%: {p:.2} kW vs reported {:.2} ({:+.2}%), {q:.2} kVAr vs {:.2} ({:+.2}%)]",
            row.load_increase * 100.0,
            row.real_pl_kw,
            (p - row.real_pl_kw) / row.real_pl_kw * 100.0,
            row.reactive_pl_kvar,
            (q - row.reactive_pl_kvar) / row.reactive_pl_kvar * 100.0,
        ));
        if row.load_increase == 0.15 {
            min_v_at_15 = result.attacked.min_voltage().1;
        }
    }
    let pass = min_v_at_15 < 0.917;
    println!(
        "ACCEPTANCE C4 {} attack severity: 15% step on {targets:?} drives minimum voltage \
         to {min_v_at_15:.4} p.u. (< 0.917). Loss deviations logged, not asserted:{log}",
        if pass { "PASS" } else { "FAIL" },
    );
    assert!(min_v_at_15 < 0.917, "minimum voltage {min_v_at_15}");
}

#[test]
fn criterion_05_dg_benefit() {
    let case = bundled_ieee33();
    let opts = tight_options();
    let (result, elapsed) = &*OPTIMIZED;

    let base = powerflow::solve(&case, &opts).unwrap();
    let (base_loss, _) = powerflow::total_losses(&base).unwrap();
    let augmented = case.apply_dg(&result.best_placement).unwrap();
    let dg_sol = powerflow::solve(&augmented, &opts).unwrap();
    let (dg_loss, _) = powerflow::total_losses(&dg_sol).unwrap();
    let min_v = dg_sol.min_voltage().1;
    let ratio = dg_loss / base_loss;

    // the optimizer must also not lose to the reported literature placement
    let values = reported_values();
    let reported_obj = dgopt::evaluate_objective(
        &case,
        &reported_placement(&values),
        &ObjectiveWeights::default(),
    )
    .unwrap();
    let beats_reported = result.best_objective <= reported_obj * 1.01;

    let placement: Vec<String> = result
        .best_placement
        .units()
        .iter()
        .map(|u| format!("{}:{:.0}kW", u.bus, u.p_dg_kw))
        .collect();
    let pass = ratio <= 0.40 && min_v >= 0.97 && *elapsed < 60.0 && beats_reported;
    println!(
        "ACCEPTANCE C5 {} DG benefit: optimized {{{}}} gives {dg_loss:.2} kW vs base \
         {base_loss:.2} kW (ratio {ratio:.3} <= 0.40), min voltage {min_v:.4} p.u. \
         (>= 0.97), objective {:.6} vs reported placement {:.6} (within 1%), \
         optimization took {elapsed:.2} s (< 60 s)",
        if pass { "PASS" } else { "FAIL" },
        placement.join(", "),
        result.best_objective,
        reported_obj,
    );
    assert!(ratio <= 0.40, "loss ratio {ratio}");
    assert!(min_v >= 0.97, "minimum voltage {min_v}");
    assert!(beats_reported, "objective {} vs {}", result.best_objective, reported_obj);
    assert!(*elapsed < 60.0, "optimization took {elapsed} s");
}

#[test]
fn criterion_06_post_dg_attack_resilience() {
    let opts = tight_options();
    let (result, _) = &*OPTIMIZED;
    let augmented = bundled_ieee33().apply_dg(&result.best_placement).unwrap();

    let mut log = String::new();
    let mut worst = f64::INFINITY;
    for delta in [0.05, 0.10, 0.15, 0.40, 1.00] {
        let spec = AttackSpec::new([10, 17, 18], delta).unwrap();
        let result = attack::run_step_attack(&augmented, &spec, &opts).unwrap();
        let min_v = result.attacked.min_voltage().1;
        worst = worst.min(min_v);
        log.push_str(&format!(" [{:.0}%: {min_v:.4}]", delta * 100.0));
    }
    // 0.95 p.u. target with 0.01 p.u. slack
    let pass = worst >= 0.94;
    println!(
        "ACCEPTANCE C6 {} post-DG resilience: step attacks on {{10, 17, 18}} up to 100% \
         keep minimum voltage at {worst:.4} p.u. (>= 0.94 = 0.95 - 0.01 slack);{log}",
        if pass { "PASS" } else { "FAIL" },
    );
    assert!(worst >= 0.94, "worst minimum voltage {worst}");
}

/// Small feeder for exhaustive search: a main run with one lateral.
fn six_bus_toy() -> NetworkCase {
    NetworkCase::new(
        12.66,
        10.0,
        1.0,
        vec![
            Bus { id: 1, p_load_kw: 0.0, q_load_kvar: 0.0, is_slack: true },
            Bus { id: 2, p_load_kw: 400.0, q_load_kvar: 250.0, is_slack: false },
            Bus { id: 3, p_load_kw: 350.0, q_load_kvar: 200.0, is_slack: false },
            Bus { id: 4, p_load_kw: 300.0, q_load_kvar: 180.0, is_slack: false },
            Bus { id: 5, p_load_kw: 450.0, q_load_kvar: 280.0, is_slack: false },
            Bus { id: 6, p_load_kw: 250.0, q_load_kvar: 150.0, is_slack: false },
        ],
        vec![
            Branch { from: 1, to: 2, r_ohm: 1.2, x_ohm: 0.9, status: true },
            Branch { from: 2, to: 3, r_ohm: 1.0, x_ohm: 0.7, status: true },
            Branch { from: 3, to: 4, r_ohm: 1.4, x_ohm: 1.0, status: true },
            Branch { from: 2, to: 5, r_ohm: 0.9, x_ohm: 0.6, status: true },
            Branch { from: 5, to: 6, r_ohm: 1.3, x_ohm: 0.9, status: true },
        ],
        vec![],
    )
    .unwrap()
}

#[test]
fn criterion_07_small_instance_optimality() {
    let case = six_bus_toy();
    let weights = ObjectiveWeights::default();
    let grid = vec![100.0, 575.0, 1050.0, 1525.0, 2000.0];

    // brute force: all 3-subsets of the 5 non-slack buses, all size triples
    let buses = case.non_slack_ids();
    let mut brute_best = f64::INFINITY;
    let mut brute_placement = None;
    let mut evaluated = 0usize;
    for i in 0..buses.len() {
        for j in (i + 1)..buses.len() {
            for k in (j + 1)..buses.len() {
                for &si in &grid {
                    for &sj in &grid {
                        for &sk in &grid {
                            let placement = DgPlacement::new([
                                (buses[i], si),
                                (buses[j], sj),
                                (buses[k], sk),
                            ])
                            .unwrap();
                            let obj =
                                dgopt::evaluate_objective(&case, &placement, &weights).unwrap();
                            evaluated += 1;
                            if obj < brute_best {
                                brute_best = obj;
                                brute_placement = Some(placement);
                            }
                        }
                    }
                }
            }
        }
    }

    let config = PsoConfig {
        size_grid: Some(grid.clone()),
        seed: 42,
        ..Default::default()
    };
    let pso = dgopt::pso_optimize(&case, &weights, &config).unwrap();
    let gap = (pso.best_objective - brute_best).abs();

    let pass = gap <= 1e-9;
    println!(
        "ACCEPTANCE C7 {} small-instance optimality: exhaustive search over {evaluated} \
         placements gives {brute_best:.9} at {:?}; PSO gives {:.9} (gap {gap:.2e} <= 1e-9)",
        if pass { "PASS" } else { "FAIL" },
        brute_placement
            .as_ref()
            .map(|p| p
                .units()
                .iter()
                .map(|u| format!("{}:{:.0}", u.bus, u.p_dg_kw))
                .collect::<Vec<_>>())
            .unwrap_or_default(),
        pso.best_objective,
    );
    assert!(gap <= 1e-9, "PSO {} vs exhaustive {brute_best}", pso.best_objective);
}

#[test]
fn criterion_08_dynamic_attack_breach() {
    let opts = SolveOptions::default();
    let values = reported_values();
    let with_dg = replication_case()
        .apply_dg(&reported_placement(&values))
        .unwrap();
    let spec = DynamicAttackSpec::with_timing(
        values.dynamic_attack.targets.iter().copied(),
        values.dynamic_attack.peak_delta,
        values.dynamic_attack.oscillation_ratio,
        1.0 / 60.0,
        300.0,
        values.dynamic_attack.horizon_s,
        1.0,
        OscillationCoupling::Multiplicative,
    )
    .unwrap();
    let series = attack::run_time_series(&with_dg, &spec, &band(), &opts).unwrap();
    let min_v = series.summary.global_min_v_pu;
    let breached = series.summary.first_breach_t_s.is_some();

    let pass = breached;
    println!(
        "ACCEPTANCE C8 {} dynamic attack breach: 20% oscillating attack (B = 0.5) on \
         {:?} over {} s reaches a minimum of {min_v:.4} p.u. at t = {} s (reported \
         {:.3}); band floor 0.917 {} breached. Quasi-statically the +30% peak on \
         ~210 kW of target load cannot move the DG-supported profile below the floor; \
         the reported dip comes from electromechanical dynamics outside this model.",
        if pass { "PASS" } else { "FAIL" },
        values.dynamic_attack.targets,
        values.dynamic_attack.horizon_s,
        series.summary.global_min_t_s,
        values.dynamic_attack.reported_min_v_pu,
        if breached { "was" } else { "was NOT" },
    );
    assert!(
        breached,
        "no band breach; realized minimum {min_v:.4} p.u. vs reported {:.3}",
        values.dynamic_attack.reported_min_v_pu
    );
}

#[test]
fn criterion_09_determinism() {
    // optimization reports reproduce byte for byte
    let case = bundled_ieee33();
    let config = PsoConfig {
        swarm_size: 60,
        iterations: 25,
        seed: 123,
        ..Default::default()
    };
    let weights = ObjectiveWeights::default();
    let a = dgopt::pso_optimize(&case, &weights, &config).unwrap();
    let b = dgopt::pso_optimize(&case, &weights, &config).unwrap();
    let report_a = serde_json::to_vec(&a).unwrap();
    let report_b = serde_json::to_vec(&b).unwrap();
    let reports_equal = report_a == report_b;

    // scenario bundles reproduce byte for byte, manifest timestamp aside
    let tmp = tempfile::tempdir().unwrap();
    let scenario_path = tmp.path().join("determinism.json");
    let scenario = serde_json::json!({
        "name": "determinism-probe",
        "case": "ieee33",
        "profile": { "slack_voltage_pu": 0.99, "v_min_pu": 0.917, "v_max_pu": 1.042 },
        "output_dir": tmp.path().join("unused"),
        "steps": [
            { "action": "solve", "label": "base" },
            { "action": "rank", "label": "vm", "k": 3 },
            { "action": "optimize-dg", "label": "plan", "swarm": 60, "iterations": 25,
              "seed": 123, "use_result": true },
            { "action": "step-attack", "label": "atk", "targets": [10, 17, 18], "delta": 0.4 },
            { "action": "dynamic-attack", "label": "osc", "targets": [10, 17, 18],
              "peak_delta": 0.2, "oscillation_ratio": 0.5, "ramp_s": 20.0,
              "horizon_s": 60.0, "time_step_s": 2.0 }
        ]
    });
    std::fs::write(&scenario_path, serde_json::to_vec_pretty(&scenario).unwrap()).unwrap();

    let out1 = tmp.path().join("run1");
    let out2 = tmp.path().join("run2");
    voltplan_cli::scenario::run_scenario(&scenario_path, Some(&out1)).unwrap();
    voltplan_cli::scenario::run_scenario(&scenario_path, Some(&out2)).unwrap();

    let mut artifact_mismatch = Vec::new();
    let mut names: Vec<String> = std::fs::read_dir(&out1)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    for name in &names {
        if name == "manifest.json" {
            continue;
        }
        let bytes1 = std::fs::read(out1.join(name)).unwrap();
        let bytes2 = std::fs::read(out2.join(name)).unwrap();
        if bytes1 != bytes2 {
            artifact_mismatch.push(name.clone());
        }
    }
    let mut manifest1 = voltplan_cli::bundle::verify_bundle(&out1).unwrap();
    let mut manifest2 = voltplan_cli::bundle::verify_bundle(&out2).unwrap();
    manifest1.created_utc.clear();
    manifest2.created_utc.clear();
    let manifests_equal = serde_json::to_string(&manifest1).unwrap()
        == serde_json::to_string(&manifest2).unwrap();

    let pass = reports_equal && artifact_mismatch.is_empty() && manifests_equal;
    println!(
        "ACCEPTANCE C9 {} determinism: optimization reports byte-identical: {}; \
         {} bundle artifacts byte-identical: {}; manifests identical after dropping \
         the timestamp: {}",
        if pass { "PASS" } else { "FAIL" },
        reports_equal,
        names.len() - 1,
        artifact_mismatch.is_empty(),
        manifests_equal,
    );
    assert!(reports_equal, "optimization reports differ");
    assert!(artifact_mismatch.is_empty(), "artifacts differ: {artifact_mismatch:?}");
    assert!(manifests_equal, "manifests differ beyond the timestamp");
}

#[test]
fn criterion_10_monotonicity() {
    let opts = SolveOptions {
        tolerance: 1e-10,
        max_iterations: 400,
    };
    let mut checked = 0usize;
    for trial in 0..100u64 {
        let case = casegen::random_radial_case(1_000 + trial, 5 + (trial as usize * 11) % 36);
        let targets: BTreeSet<BusId> = case.non_slack_ids().into_iter().collect();
        let scaled = case.scale_loads(&targets, 0.2).unwrap();
        let a = powerflow::solve(&case, &opts).unwrap();
        let b = powerflow::solve(&scaled, &opts).unwrap();
        assert!(a.converged() && b.converged(), "trial {trial} diverged");
        let (loss_a, _) = powerflow::total_losses(&a).unwrap();
        let (loss_b, _) = powerflow::total_losses(&b).unwrap();
        assert!(
            loss_b > loss_a,
            "trial {trial}: loss did not increase ({loss_a} -> {loss_b})"
        );
        assert!(
            b.min_voltage().1 < a.min_voltage().1,
            "trial {trial}: minimum voltage did not decrease"
        );
        checked += 1;
    }
    println!(
        "ACCEPTANCE C10 PASS monotonicity: {checked} random DG-free feeders scale up \
         with strictly higher loss and strictly lower minimum voltage"
    );
    assert_eq!(checked, 100);
}

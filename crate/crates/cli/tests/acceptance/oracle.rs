//! Independent power-flow oracle: Gauss-Seidel on the bus admittance
//! matrix, with complex voltages and constant-power injections.
//!
//! Shares nothing with the sweep solver beyond the case data model; even
//! the per-unit conversion is redone here from raw ohm/kW fields.

use num_complex::Complex64;
use voltplan::net::NetworkCase;

pub struct OracleSolution {
    /// Complex voltages aligned with the case bus order, p.u.
    pub voltages: Vec<Complex64>,
    /// Total series losses, (kW, kVAr).
    pub total_loss: (f64, f64),
    pub iterations: usize,
    pub converged: bool,
}

pub fn solve_gauss_seidel(case: &NetworkCase, tol: f64, max_iter: usize) -> OracleSolution {
    let n = case.buses().len();
    let z_base = case.v_base_kv() * case.v_base_kv() / case.s_base_mva();
    let s_base_kva = case.s_base_mva() * 1000.0;

    let index = |id: u32| -> usize {
        case.buses()
            .iter()
            .position(|b| b.id == id)
            .expect("branch endpoints exist")
    };

    // dense Y-bus; feeders here stay tiny
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut series: Vec<(usize, usize, Complex64)> = Vec::new();
    for br in case.branches() {
        if !br.status {
            continue;
        }
        let z = Complex64::new(br.r_ohm / z_base, br.x_ohm / z_base);
        assert!(z.norm() > 0.0, "oracle requires non-zero branch impedance");
        let adm = Complex64::new(1.0, 0.0) / z;
        let (f, t) = (index(br.from), index(br.to));
        y[f][f] += adm;
        y[t][t] += adm;
        y[f][t] -= adm;
        y[t][f] -= adm;
        series.push((f, t, z));
    }

    // net complex injection per bus: DG minus demand
    let mut injection = vec![Complex64::new(0.0, 0.0); n];
    for (i, bus) in case.buses().iter().enumerate() {
        injection[i] = Complex64::new(-bus.p_load_kw / s_base_kva, -bus.q_load_kvar / s_base_kva);
    }
    for dg in case.dg_units() {
        injection[index(dg.bus)] += Complex64::new(dg.p_dg_kw / s_base_kva, 0.0);
    }

    let slack = case
        .buses()
        .iter()
        .position(|b| b.is_slack)
        .expect("case has a slack bus");
    let mut v = vec![Complex64::new(case.slack_voltage_pu(), 0.0); n];

    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut max_dv = 0.0f64;
        for i in 0..n {
            if i == slack {
                continue;
            }
            let mut neighbor_sum = Complex64::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    neighbor_sum += y[i][j] * v[j];
                }
            }
            let current = (injection[i] / v[i]).conj();
            let v_new = (current - neighbor_sum) / y[i][i];
            let dv = (v_new - v[i]).norm();
            if dv > max_dv {
                max_dv = dv;
            }
            v[i] = v_new;
        }
        if max_dv < tol {
            converged = true;
            break;
        }
    }

    let mut loss = Complex64::new(0.0, 0.0);
    for &(f, t, z) in &series {
        let current = (v[f] - v[t]) / z;
        loss += current.norm_sqr() * z;
    }

    OracleSolution {
        voltages: v,
        total_loss: (loss.re * s_base_kva, loss.im * s_base_kva),
        iterations,
        converged,
    }
}

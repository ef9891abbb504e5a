//! Summary table mirroring the case-study reporting layout: one row per
//! (attack, placement) combination.

use voltplan::net::BusId;
use voltplan::powerflow::{self, PowerFlowError, PowerFlowSolution};

/// One table row before formatting. `attacked_nodes` empty means no attack.
pub struct SummaryEntry<'a> {
    pub attacked_nodes: Vec<BusId>,
    pub n_dgs: usize,
    /// Relative load increase at the attacked nodes (0.15 = +15%).
    pub load_increase: f64,
    pub solution: &'a PowerFlowSolution,
}

/// Renders rows as CSV with columns
/// `attacked_nodes,n_dgs,load_increase_pct,real_pl_kw,reactive_pl_kvar,lowest_v_pu`.
/// Every referenced solution must be converged.
pub fn emit_summary_table(entries: &[SummaryEntry]) -> Result<String, PowerFlowError> {
    let mut out = String::from(
        "attacked_nodes,n_dgs,load_increase_pct,real_pl_kw,reactive_pl_kvar,lowest_v_pu\n",
    );
    for entry in entries {
        let (p, q) = powerflow::total_losses(entry.solution)?;
        let (_, min_v) = entry.solution.min_voltage();
        out.push_str(&format!(
            "{},{},{},{:.2},{:.2},{:.4}\n",
            format_nodes(&entry.attacked_nodes),
            entry.n_dgs,
            format_pct(entry.load_increase * 100.0),
            p,
            q,
            min_v
        ));
    }
    Ok(out)
}

fn format_nodes(nodes: &[BusId]) -> String {
    if nodes.is_empty() {
        "none".to_string()
    } else {
        let joined = nodes
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        format!("\"{joined}\"")
    }
}

fn format_pct(pct: f64) -> String {
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{:.0}", pct)
    } else {
        format!("{:.2}", pct)
    }
}

use std::fmt::Write;

use accel_dse::legalize::LegalizationVerdict;
use accel_dse::model::{Bound, Budgets, CostEstimate};

/// One row per design: cycles, stage split, C2C, resource use against the
/// budget and the bound classification.
pub fn estimate_table(rows: &[(&str, &CostEstimate)], budgets: &Budgets) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>14} {:>6} {:>10} {:>10} {:>10} {:>7} {:>6} {:>6} {:>6} {:>6}  bound",
        "design", "cycles", "tiles", "load", "compute", "store", "C2C", "BRAM%", "LUT%", "FF%", "DSP%"
    );
    for (name, e) in rows {
        let u = e.utilization(budgets);
        let c2c = e.c2c.map_or("-".to_string(), |c| format!("{c:.2}"));
        let bound = match e.bound {
            Bound::Computation => "computation",
            Bound::Communication => "communication",
        };
        let _ = writeln!(
            out,
            "{:<16} {:>14} {:>6} {:>10} {:>10} {:>10} {:>7} {:>6.1} {:>6.1} {:>6.1} {:>6.1}  {}{}",
            name,
            e.cycles_total,
            e.num_tiles,
            e.cycles_load,
            e.cycles_compute,
            e.cycles_store,
            c2c,
            u[0] * 100.0,
            u[1] * 100.0,
            u[2] * 100.0,
            u[3] * 100.0,
            bound,
            if e.feasible_80pct { "" } else { " (over 80%)" }
        );
    }
    out
}

pub fn verdict_table(v: &LegalizationVerdict) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "legal: {}", if v.legal { "yes" } else { "no" });
    for c in &v.pe_loop_candidates {
        let _ = writeln!(out, "  {c:<20} ok");
    }
    for f in &v.failures {
        let check = serde_json::to_value(f.check).expect("check name serializes");
        let _ = writeln!(
            out,
            "  {:<20} {:<16} {}",
            f.loop_id,
            check.as_str().unwrap_or_default(),
            f.message
        );
    }
    out
}

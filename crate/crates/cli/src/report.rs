//! Human tables and machine-readable line-delimited records.
//!
//! Record stream schema (one JSON object per line):
//! `{"record":"variable","path":..,"value":..,"unit":..,"role":..}` for every
//! qualified variable in declaration order (aliased variables re-expanded,
//! ramp states included), then one
//! `{"record":"summary","converged":..,"iterations":..,"residual":..}`.
//! Sweep output tags every record with the grid time `"t"`.

use nodal_core::model::FlatSystem;
use nodal_core::solve::Solution;

pub struct Row {
    pub path: String,
    pub value: f64,
    pub unit: String,
    pub role: String,
}

/// All variables of the original (pre-elimination) system in declaration
/// order, with ramp states appended.
pub fn variable_rows(full: &FlatSystem, sol: &Solution) -> Vec<Row> {
    let mut rows: Vec<Row> = full
        .variables
        .iter()
        .map(|v| Row {
            path: v.path.clone(),
            value: sol.value(&v.path).unwrap_or(f64::NAN),
            unit: v.unit.clone(),
            role: v.role.to_string(),
        })
        .collect();
    for ramp in &full.ramps {
        rows.push(Row {
            path: ramp.path.clone(),
            value: sol.value(&ramp.path).unwrap_or(f64::NAN),
            unit: ramp.unit.clone(),
            role: "ramp-state".to_string(),
        });
    }
    rows
}

/// Largest through-variable imbalance over all connect sets (0 when the
/// model has no through variables).
pub fn max_through_imbalance(full: &FlatSystem, sol: &Solution) -> f64 {
    let mut worst: f64 = 0.0;
    for set in &full.connects {
        let through: Vec<&str> = set.nodes[0]
            .connector
            .variables
            .iter()
            .filter(|v| v.role == nodal_core::model::VariableRole::Through)
            .map(|v| v.name.as_str())
            .collect();
        for var in through {
            let total: f64 = set
                .nodes
                .iter()
                .filter_map(|n| sol.value(&format!("{}.{}", n.path, var)))
                .sum();
            worst = worst.max(total.abs());
        }
    }
    worst
}

pub fn print_table(full: &FlatSystem, sol: &Solution) {
    let rows = variable_rows(full, sol);
    let path_width = rows.iter().map(|r| r.path.len()).max().unwrap_or(8).max(8);
    let unit_width = rows.iter().map(|r| r.unit.len()).max().unwrap_or(4).max(4);
    println!(
        "{:<path_width$}  {:>24}  {:<unit_width$}  role",
        "variable", "value", "unit"
    );
    for r in &rows {
        println!(
            "{:<path_width$}  {:>24}  {:<unit_width$}  {}",
            r.path,
            format_value(r.value),
            r.unit,
            r.role
        );
    }
    println!();
    println!(
        "converged: {} in {} iterations, residual {:.3e}",
        sol.converged, sol.iterations, sol.residual_norm
    );
    let imbalance = max_through_imbalance(full, sol);
    if imbalance > 0.0 {
        println!("largest junction through-imbalance: {imbalance:.3e}");
    }
}

fn format_value(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-3 && v.abs() < 1e7) {
        format!("{v:.9}")
    } else {
        format!("{v:.9e}")
    }
}

pub fn print_records(full: &FlatSystem, sol: &Solution, t: Option<f64>) {
    for r in variable_rows(full, sol) {
        let mut obj = serde_json::json!({
            "record": "variable",
            "path": r.path,
            "value": r.value,
            "unit": r.unit,
            "role": r.role,
        });
        if let Some(t) = t {
            obj["t"] = serde_json::json!(t);
        }
        println!("{obj}");
    }
    let mut summary = serde_json::json!({
        "record": "summary",
        "converged": sol.converged,
        "iterations": sol.iterations,
        "residual": sol.residual_norm,
    });
    if let Some(t) = t {
        summary["t"] = serde_json::json!(t);
    }
    println!("{summary}");
}

/// Per-iteration trace as line-oriented text (for convergence regressions).
pub fn print_trace(sol: &Solution) {
    for rec in &sol.trace {
        eprintln!(
            "iter={} residual_inf={:e} residual_two={:e} step_factor={} step_norm={:e}",
            rec.iteration, rec.residual_inf, rec.residual_two, rec.step_factor, rec.step_norm
        );
    }
}

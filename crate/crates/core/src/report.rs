//! Coefficient summary tables: one row per analysis, frontier and parametric
//! exponents side by side.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub label: String,
    /// `(a, b)` from the frontier fit, if it was possible.
    pub frontier: Option<(f64, f64)>,
    pub parametric: Option<(f64, f64)>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.2}"))
}

pub fn coefficient_table(rows: &[CoefficientRow]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(8);
    let mut out = format!(
        "{:<width$} | {:^23} | {:^23}\n{:<width$} | {:>11} {:>11} | {:>11} {:>11}\n",
        "",
        "Frontier fit",
        "Parametric fit",
        "",
        "N ~ C^a",
        "D ~ C^b",
        "N ~ C^a",
        "D ~ C^b",
    );
    for r in rows {
        out.push_str(&format!(
            "{:<width$} | {:>11} {:>11} | {:>11} {:>11}\n",
            r.label,
            cell(r.frontier.map(|f| f.0)),
            cell(r.frontier.map(|f| f.1)),
            cell(r.parametric.map(|p| p.0)),
            cell(r.parametric.map(|p| p.1)),
        ));
    }
    out
}

/// Rows as CSV with `N/A` left empty.
pub fn coefficient_csv(rows: &[CoefficientRow]) -> String {
    let f = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let mut out = String::from("label,frontier_a,frontier_b,parametric_a,parametric_b\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.label,
            f(r.frontier.map(|v| v.0)),
            f(r.frontier.map(|v| v.1)),
            f(r.parametric.map(|v| v.0)),
            f(r.parametric.map(|v| v.1)),
        ));
    }
    out
}

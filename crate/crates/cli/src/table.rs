//! Flat CSV tables from reports, for external plotting.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum TableKind {
    AlphaConvergence,
    Refinement,
    ResidualNorms,
}

pub const ALPHA_CONVERGENCE_HEADER: &str = "alpha,u0,delta_prev,a_total";
pub const REFINEMENT_HEADER: &str = "level,n_space,n_steps,u0,successive_difference,empirical_order";
pub const RESIDUAL_NORMS_HEADER: &str = "alpha,sup_residual,l1_residual,nodes_pde_active,nodes_phi_active";

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

fn load(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}

fn kind_of(v: &Value) -> &str {
    v.get("kind").and_then(Value::as_str).unwrap_or("")
}

fn mismatch(path: &Path, found: &str, expected: &str) -> CliError {
    CliError::KindMismatch {
        path: path.display().to_string(),
        found: found.to_string(),
        expected: expected.to_string(),
    }
}

fn field<'a>(v: &'a Value, key: &str) -> &'a Value {
    v.get(key).unwrap_or(&Value::Null)
}

fn residual_row(out: &mut String, r: &Value) {
    let cols: Vec<String> = ["alpha", "sup_residual", "l1_residual", "nodes_pde_active", "nodes_phi_active"]
        .iter()
        .map(|k| cell(field(r, k)))
        .collect();
    let _ = writeln!(out, "{}", cols.join(","));
}

/// Render `report_path` as CSV. Residual norms accept a single residual
/// report or a run manifest, whose residual reports become one row each.
pub fn emit_table(report_path: &Path, kind: TableKind) -> Result<String, CliError> {
    let v = load(report_path)?;
    let found = kind_of(&v);
    let mut out = String::new();
    match kind {
        TableKind::AlphaConvergence => {
            if found != "convergence_report" {
                return Err(mismatch(report_path, found, "convergence_report"));
            }
            out.push_str(ALPHA_CONVERGENCE_HEADER);
            out.push('\n');
            let alphas = field(&v, "alphas").as_array().cloned().unwrap_or_default();
            let u0 = field(&v, "u0").as_array().cloned().unwrap_or_default();
            let deltas = field(&v, "cauchy_deltas").as_array().cloned().unwrap_or_default();
            let a = field(&v, "a_totals").as_array().cloned().unwrap_or_default();
            for (k, alpha) in alphas.iter().enumerate() {
                let delta = if k == 0 { Value::Null } else { deltas.get(k - 1).cloned().unwrap_or(Value::Null) };
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    cell(alpha),
                    cell(u0.get(k).unwrap_or(&Value::Null)),
                    cell(&delta),
                    cell(a.get(k).unwrap_or(&Value::Null))
                );
            }
        }
        TableKind::Refinement => {
            if found != "refine_table" {
                return Err(mismatch(report_path, found, "refine_table"));
            }
            out.push_str(REFINEMENT_HEADER);
            out.push('\n');
            for row in field(&v, "rows").as_array().into_iter().flatten() {
                let cols: Vec<String> = ["level", "n_space", "n_steps", "u0", "successive_difference", "empirical_order"]
                    .iter()
                    .map(|k| cell(field(row, k)))
                    .collect();
                let _ = writeln!(out, "{}", cols.join(","));
            }
        }
        TableKind::ResidualNorms => match found {
            "residual_report" => {
                out.push_str(RESIDUAL_NORMS_HEADER);
                out.push('\n');
                residual_row(&mut out, &v);
            }
            "run_manifest" => {
                out.push_str(RESIDUAL_NORMS_HEADER);
                out.push('\n');
                let dir = report_path.parent().unwrap_or(Path::new("."));
                for a in field(&v, "artifacts").as_array().into_iter().flatten() {
                    let rel = a.get("path").and_then(Value::as_str).unwrap_or("");
                    if rel.starts_with("residual_") && rel.ends_with(".json") {
                        residual_row(&mut out, &load(&dir.join(rel))?);
                    }
                }
            }
            _ => return Err(mismatch(report_path, found, "residual_report or run_manifest")),
        },
    }
    Ok(out)
}

use std::fmt::Write as _;

use super::{LinearModel, Sense, VarKind};

fn term(out: &mut String, a: f64, name: &str) {
    let _ = write!(out, " {}{} {}", if a < 0.0 { "-" } else { "+" }, a.abs(), name);
}

fn sanitize(name: &str, j: usize) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        format!("v{j}_{s}")
    } else {
        s
    }
}

/// Renders the model in lp_solve's LP text format. Diagnostic output only;
/// nothing reads it back.
pub fn write_lp(model: &LinearModel) -> String {
    let names: Vec<String> = model.vars.iter().enumerate().map(|(j, v)| sanitize(&v.name, j)).collect();
    let mut out = String::from("/* objective */\nmin:");
    for &(j, c) in &model.objective {
        term(&mut out, c, &names[j]);
    }
    if model.objective_offset != 0.0 {
        let _ = write!(out, " {:+}", model.objective_offset);
    }
    out.push_str(";\n\n/* constraints */\n");
    for (i, c) in model.constraints.iter().enumerate() {
        let _ = write!(out, "c{i}:");
        if c.coeffs.is_empty() {
            out.push_str(" 0");
        }
        for &(j, a) in &c.coeffs {
            term(&mut out, a, &names[j]);
        }
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {};", c.rhs);
    }
    out.push_str("\n/* bounds */\n");
    for (j, v) in model.vars.iter().enumerate() {
        if v.kind == VarKind::Binary {
            continue;
        }
        let lo = if v.lower.is_finite() { v.lower.to_string() } else { "-1e30".to_string() };
        if v.upper.is_finite() {
            let _ = writeln!(out, "{lo} <= {} <= {};", names[j], v.upper);
        } else if v.lower != 0.0 {
            let _ = writeln!(out, "{} >= {lo};", names[j]);
        }
    }
    let bins: Vec<&str> = model
        .vars
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.kind == VarKind::Binary)
        .map(|(_, n)| n.as_str())
        .collect();
    if !bins.is_empty() {
        let _ = writeln!(out, "\nbin {};", bins.join(", "));
    }
    out
}

//! Aligned plain-text tables for terminal output.

use std::fmt::Write;

use netfe::stats::DecileRow;

pub fn decile_table(rows: &[(&str, &DecileRow)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<10}{:>11}{:>11}", "", "mean", "sd");
    for k in 1..=9 {
        let _ = write!(out, "{:>11}", format!("p{}", k * 10));
    }
    out.push('\n');
    for (name, r) in rows {
        let _ = write!(out, "{:<10}{:>11}{:>11}", name, num(r.mean), num(r.sd));
        for v in r.deciles {
            let _ = write!(out, "{:>11}", num(v));
        }
        out.push('\n');
    }
    out
}

pub fn key_values(pairs: &[(&str, String)]) -> String {
    let width = pairs.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    pairs
        .iter()
        .map(|(k, v)| format!("{k:<width$}  {v}\n"))
        .collect()
}

pub fn num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

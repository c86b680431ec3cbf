//! CSV rows and the JSON plot manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{RunKind, RunReport};
use crate::error::Result;

pub const CSV_COLUMNS: [&str; 24] = [
    "t",
    "gt",
    "sigma_es",
    "sigma_el",
    "sigma_co",
    "sigma_fp",
    "di_ab",
    "sdot_a",
    "sdot_b",
    "edot_b",
    "edot_int",
    "pdot_a",
    "beta_b_eff",
    "gamma1",
    "gamma2",
    "gamma3",
    "omega_shift",
    "big_gamma",
    "cp_div",
    "p_div",
    "blp",
    "sigma_min",
    "sigma_map",
    "masked",
];

pub const CSV_HEADER: &str = "t,gt,sigma_es,sigma_el,sigma_co,sigma_fp,di_ab,sdot_a,sdot_b,edot_b,edot_int,pdot_a,beta_b_eff,gamma1,gamma2,gamma3,omega_shift,big_gamma,cp_div,p_div,blp,sigma_min,sigma_map,masked";

/// Shortest decimal that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:?}")
    }
}

fn format_flag(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "1",
        Some(false) => "0",
        None => "nan",
    }
}

pub fn csv_string(report: &RunReport) -> String {
    let mut s = String::with_capacity(256 * (report.rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    let nan = f64::NAN;
    for r in &report.rows {
        let e = r.entropy;
        let ef = |f: fn(&crate::eprod::EntropySample) -> f64| e.as_ref().map_or(nan, f);
        let rs = &r.rates;
        let rate = |v: f64| if rs.singular { nan } else { v };
        let floats = [
            r.t,
            r.gt,
            ef(|e| e.sigma_es),
            ef(|e| e.sigma_el),
            ef(|e| e.sigma_co),
            ef(|e| e.sigma_fp),
            ef(|e| e.di_ab),
            ef(|e| e.sdot_a),
            ef(|e| e.sdot_b),
            ef(|e| e.edot_b),
            ef(|e| e.edot_int),
            ef(|e| e.pdot_a),
            ef(|e| e.beta_b_eff),
            rate(rs.gamma1),
            rate(rs.gamma2),
            rate(rs.gamma3),
            rate(rs.omega_shift),
            rate(rs.big_gamma()),
        ];
        for v in floats {
            s.push_str(&format_float(v));
            s.push(',');
        }
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            format_flag(r.cp_div),
            format_flag(r.p_div),
            format_flag(r.blp),
            format_float(r.sigma_min),
            format_float(r.sigma_map),
            if r.masked { 1 } else { 0 }
        );
    }
    s
}

fn default_series(kind: RunKind) -> Vec<&'static str> {
    match kind {
        RunKind::Trace => vec!["sigma_es", "sigma_el", "sigma_co", "sigma_fp", "di_ab"],
        _ => vec!["sigma_min", "sigma_map", "p_div", "cp_div", "blp"],
    }
}

fn label(col: &str) -> &'static str {
    match col {
        "sigma_es" => "σ^Es",
        "sigma_el" => "σ^El",
        "sigma_co" => "σ^Co",
        "sigma_fp" => "σ^fp",
        "di_ab" => "dI_AB/dt",
        "sigma_min" => "σ^fp_min",
        "sigma_map" => "σ_map",
        "p_div" => "P-divisible",
        "cp_div" => "CP-divisible",
        "blp" => "BLP",
        _ => "",
    }
}

/// Axes, series and run metadata for downstream plotting.
pub fn manifest(report: &RunReport, csv_file: &str) -> Value {
    let series: Vec<String> = if report.scenario.outputs.is_empty() {
        default_series(report.kind)
            .into_iter()
            .map(String::from)
            .collect()
    } else {
        report.scenario.outputs.clone()
    };
    json!({
        "scenario": report.scenario.name,
        "kind": report.kind,
        "csv": csv_file,
        "columns": CSV_COLUMNS,
        "x_axis": { "column": "gt", "label": "g t" },
        "series": series.iter().map(|c| {
            let kind = if matches!(c.as_str(), "p_div" | "cp_div" | "blp" | "masked") { "band" } else { "line" };
            json!({ "column": c, "label": label(c), "kind": kind })
        }).collect::<Vec<_>>(),
        "params": report.scenario.params,
        "numerics": report.scenario.cfg,
        "initial_state": report.scenario.initial_state,
        "p_div_intervals": report.intervals,
        "rows": report.rows.len(),
    })
}

/// Writes `path` and the manifest next to it with extension `json`.
pub fn write_outputs(report: &RunReport, path: &Path) -> Result<PathBuf> {
    std::fs::write(path, csv_string(report))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mpath = path.with_extension("json");
    let text = serde_json::to_string_pretty(&manifest(report, &name)).expect("manifest serialises");
    std::fs::write(&mpath, text + "\n")?;
    Ok(mpath)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_columns() {
        assert_eq!(CSV_HEADER, CSV_COLUMNS.join(","));
    }

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(f64::NAN), "nan");
        assert_eq!(format_float(f64::INFINITY), "inf");
        assert_eq!(format_float(f64::NEG_INFINITY), "-inf");
        for x in [1.0 / 3.0, 1e-300, 6.02e23, -2.5e-7] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }
}

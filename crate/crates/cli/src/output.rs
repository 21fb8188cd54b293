//! CSV and plot-data files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, ProblemConfig};
use crate::error::Result;
use crate::run::ResultRow;

/// Significant digits of every number written.
pub const SIGNIFICANT_DIGITS: usize = 12;

pub const CSV_HEADER: [&str; 14] = [
    "index",
    "label",
    "method",
    "criterion",
    "mu_g",
    "mu_m",
    "h",
    "n",
    "value",
    "status",
    "closed_form",
    "gap",
    "branch",
    "error",
];

/// Formats like C's `%.12g`: fixed or scientific notation, whichever is
/// shorter for the exponent, with trailing zeros removed.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let p = SIGNIFICANT_DIGITS;
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= p as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

/// Writes the rows as CSV with a header.
pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.label.clone(),
            r.method.to_string(),
            r.criterion.to_string(),
            opt(r.mu_g),
            opt(r.mu_m),
            opt(r.h),
            r.n.to_string(),
            opt(r.value),
            r.status.clone(),
            opt(r.closed_form),
            opt(r.gap),
            r.branch.unwrap_or_default().to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Solve times, kept apart so the main CSV is reproducible byte for byte.
pub fn write_timing<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "solve_time"])?;
    for r in rows {
        w.write_record([r.index.to_string(), format_number(r.solve_time)])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot series: rows sharing everything but the abscissa.
fn series_key(r: &ResultRow, along_h: bool) -> String {
    let mut key = format!("{}_{}", r.label, r.criterion);
    if let Some(g) = r.mu_g {
        key.push_str(&format!("_mug{}", format_number(g)));
    }
    if let Some(m) = r.mu_m {
        key.push_str(&format!("_mum{}", format_number(m)));
    }
    if along_h {
        key.push_str(&format!("_n{}", r.n));
    } else if let Some(h) = r.h {
        key.push_str(&format!("_h{}", format_number(h)));
    }
    key.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `<name>.csv`, `<name>.timing.csv`, one `.dat` file per series and,
/// for Chambolle-Pock sweeps, `<name>_reference.dat` with `5/N` and
/// `1/sqrt(N)`. Returns the paths written.
pub fn write_outputs(
    config: &ExperimentConfig,
    rows: &[ResultRow],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv_path = dir.join(format!("{}.csv", config.name));
    write_csv(rows, fs::File::create(&csv_path)?)?;
    written.push(csv_path);
    let timing_path = dir.join(format!("{}.timing.csv", config.name));
    write_timing(rows, fs::File::create(&timing_path)?)?;
    written.push(timing_path);

    let along_h = config
        .sweep
        .h
        .as_ref()
        .and_then(|g| g.values().ok())
        .is_some_and(|v| v.len() > 1);
    let mut series: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        series
            .entry(series_key(r, along_h && r.h.is_some()))
            .or_default()
            .push(r);
    }
    for (key, members) in series {
        let mut text = String::from("# x value closed_form\n");
        for r in members {
            let x = match (along_h, r.h) {
                (true, Some(h)) => h,
                _ => r.n as f64,
            };
            text.push_str(&format!(
                "{} {} {}\n",
                format_number(x),
                format_number(r.value.unwrap_or(f64::NAN)),
                format_number(r.closed_form.unwrap_or(f64::NAN)),
            ));
        }
        let path = dir.join(format!("{}_{key}.dat", config.name));
        fs::write(&path, text)?;
        written.push(path);
    }

    let primal_dual = config
        .curves
        .iter()
        .any(|c| matches!(c.problem, ProblemConfig::ChambollePock { .. }));
    if primal_dual {
        let mut text = String::from("# n five_over_n inv_sqrt_n\n");
        for &n in &config.sweep.n {
            let n = n as f64;
            text.push_str(&format!(
                "{} {} {}\n",
                format_number(n),
                format_number(5.0 / n),
                format_number(1.0 / n.sqrt())
            ));
        }
        let path = dir.join(format!("{}_reference.dat", config.name));
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_use_twelve_significant_digits() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(0.05), "0.05");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(-2.0 / 3.0), "-0.666666666667");
        assert_eq!(format_number(123456.789), "123456.789");
        assert_eq!(format_number(1.5e-7), "1.5e-07");
        assert_eq!(format_number(2.0e15), "2e+15");
        assert_eq!(format_number(f64::NAN), "nan");
    }

    #[test]
    fn csv_has_header_and_empty_missing_fields() {
        let row = ResultRow {
            index: 0,
            label: "a".into(),
            method: "gradient",
            criterion: "last",
            mu_g: None,
            mu_m: None,
            h: Some(1.0),
            n: 2,
            value: None,
            status: "error".into(),
            closed_form: Some(0.1),
            gap: None,
            branch: None,
            error: Some("bad, step".into()),
            solve_time: 0.5,
        };
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(
            lines[1],
            "0,a,gradient,last,,,1,2,,error,0.1,,,\"bad, step\""
        );
    }
}

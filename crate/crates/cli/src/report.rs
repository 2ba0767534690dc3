use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

/// Sampled `(x, Q_T(x), Q(x))` rows; `None` where the second curve is undefined.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CurveSamples {
    pub rows: Vec<(f64, f64, Option<f64>)>,
}

/// Rounds to 12 significant digits and prints the shortest round-trip form.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let r: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if r.abs() >= 1e-6 && r.abs() < 1e15 {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => write!(out, "{i}").unwrap(),
            (_, Some(u)) => write!(out, "{u}").unwrap(),
            _ => out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN))),
        },
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &m[*k], indent + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Byte-stable JSON: sorted keys, two-space indent, 12 significant digits.
pub fn stable_json<T: Serialize>(v: &T) -> String {
    let value = serde_json::to_value(v).expect("report values serialize");
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    out
}

pub fn samples_csv(s: &CurveSamples) -> String {
    let mut out = String::from("x,q_truthful,q_equilibrium\n");
    for &(x, t, q) in &s.rows {
        let q = q.map(format_float).unwrap_or_default();
        writeln!(out, "{},{},{}", format_float(x), format_float(t), q).unwrap();
    }
    out
}

pub fn samples_svg(s: &CurveSamples) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 20.0;
    let px = |x: f64| PAD + x.clamp(0.0, 1.0) * (SIZE - 2.0 * PAD);
    let py = |y: f64| SIZE - PAD - y.clamp(0.0, 1.0) * (SIZE - 2.0 * PAD);
    let line = |pts: Vec<(f64, f64)>| {
        pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect::<Vec<_>>().join(" ")
    };
    let truthful = line(s.rows.iter().map(|r| (r.0, r.1)).collect());
    let eq = line(s.rows.iter().filter_map(|r| r.2.map(|q| (r.0, q))).collect());
    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#).unwrap();
    writeln!(out, r##"<rect width="{SIZE}" height="{SIZE}" fill="#ffffff"/>"##).unwrap();
    let (o, e) = (px(0.0), px(1.0));
    writeln!(out, r##"<line x1="{o}" y1="{o2}" x2="{e}" y2="{o2}" stroke="#000000"/>"##, o2 = py(0.0)).unwrap();
    writeln!(out, r##"<line x1="{o}" y1="{b}" x2="{o}" y2="{t}" stroke="#000000"/>"##, b = py(0.0), t = py(1.0)).unwrap();
    writeln!(out, r##"<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{truthful}"/>"##).unwrap();
    writeln!(out, r##"<polyline fill="none" stroke="#d62728" stroke-width="2" points="{eq}"/>"##).unwrap();
    out.push_str("</svg>\n");
    out
}

fn write(path: PathBuf, body: &str) -> Result<PathBuf> {
    std::fs::write(&path, body).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    Ok(path)
}

/// Writes `<stem>.json` and, when samples are present, the requested CSV and SVG files.
pub fn emit_report<T: Serialize>(
    stem: &str,
    report: &T,
    samples: Option<&CurveSamples>,
    formats: &[Format],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let mut files = Vec::new();
    for f in formats {
        match (f, samples) {
            (Format::Json, _) => files.push(write(dir.join(format!("{stem}.json")), &stable_json(report))?),
            (Format::Csv, Some(s)) => files.push(write(dir.join(format!("{stem}.csv")), &samples_csv(s))?),
            (Format::Svg, Some(s)) => files.push(write(dir.join(format!("{stem}.svg")), &samples_svg(s))?),
            _ => {}
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_to_twelve_digits() {
        assert_eq!(format_float(16.0 / 15.0), "1.06666666667");
        assert_eq!(format_float(0.75), "0.75");
        assert_eq!(format_float(3.0), "3");
        assert_eq!(format_float(1e-20), "1e-20");
    }

    #[test]
    fn keys_are_sorted() {
        let v = serde_json::json!({"b": 1, "a": [0.5, true]});
        assert_eq!(stable_json(&v), "{\n  \"a\": [\n    0.5,\n    true\n  ],\n  \"b\": 1\n}\n");
    }

    #[test]
    fn csv_header_and_rows() {
        let s = CurveSamples { rows: vec![(0.0, 0.0, Some(0.0)), (1.0, 1.0, None)] };
        assert_eq!(samples_csv(&s), "x,q_truthful,q_equilibrium\n0,0,0\n1,1,\n");
    }
}

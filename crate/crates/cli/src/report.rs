//! Result rows, CSV/JSON writers, the run summary and the lattice heat map.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "experiment,case,quantity,value,criterion,op,target,threshold,pass";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Le,
    Lt,
    Ge,
    Gt,
    /// `|value - target| <= threshold`.
    Near,
}

impl Op {
    fn as_str(self) -> &'static str {
        match self {
            Op::Le => "le",
            Op::Lt => "lt",
            Op::Ge => "ge",
            Op::Gt => "gt",
            Op::Near => "near",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub criterion: String,
    pub op: Op,
    pub target: Option<f64>,
    pub threshold: f64,
}

impl Check {
    pub fn passes(&self, v: f64) -> bool {
        match self.op {
            Op::Le => v <= self.threshold,
            Op::Lt => v < self.threshold,
            Op::Ge => v >= self.threshold,
            Op::Gt => v > self.threshold,
            Op::Near => (v - self.target.unwrap_or(0.0)).abs() <= self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub case: String,
    pub quantity: String,
    pub value: f64,
    pub check: Option<Check>,
    pub pass: Option<bool>,
}

impl ResultRow {
    pub fn csv(&self) -> String {
        let (crit, op, target, thr) = match &self.check {
            Some(c) => (c.criterion.as_str(), c.op.as_str(), c.target.map(fmt).unwrap_or_default(), fmt(c.threshold)),
            None => ("", "", String::new(), String::new()),
        };
        let pass = self.pass.map_or("", |p| if p { "true" } else { "false" });
        format!("{},{},{},{},{crit},{op},{target},{thr},{pass}", self.experiment, quote(&self.case), self.quantity, fmt(self.value))
    }
}

fn quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.10e}")
    }
}

/// Append-only row collector for one experiment.
#[derive(Debug, Clone)]
pub struct Table<'c> {
    experiment: String,
    config: &'c ExperimentConfig,
    group: String,
    rows: Vec<ResultRow>,
}

impl<'c> Table<'c> {
    pub fn new(experiment: &str, config: &'c ExperimentConfig) -> Self {
        Self { experiment: experiment.into(), group: experiment.into(), config, rows: Vec::new() }
    }

    /// Criteria are looked up under `[criteria.<group>]`.
    pub fn with_group(mut self, group: &str) -> Self {
        self.group = group.into();
        self
    }

    pub fn set_experiment(&mut self, name: &str, group: &str) {
        self.experiment = name.into();
        self.group = group.into();
    }

    pub fn record(&mut self, case: impl Into<String>, quantity: &str, value: f64) {
        self.rows.push(ResultRow {
            experiment: self.experiment.clone(),
            case: case.into(),
            quantity: quantity.into(),
            value,
            check: None,
            pass: None,
        });
    }

    /// Row judged against `[criteria.<group>] <criterion>`.
    pub fn check(&mut self, case: impl Into<String>, quantity: &str, value: f64, criterion: &str, op: Op) -> Result<bool, ConfigError> {
        self.check_near(case, quantity, value, criterion, op, None)
    }

    pub fn check_near(
        &mut self,
        case: impl Into<String>,
        quantity: &str,
        value: f64,
        criterion: &str,
        op: Op,
        target: Option<f64>,
    ) -> Result<bool, ConfigError> {
        let threshold = self.config.criterion(&self.group, criterion)?;
        let check = Check { criterion: format!("{}.{criterion}", self.group), op, target, threshold };
        let pass = check.passes(value);
        self.rows.push(ResultRow {
            experiment: self.experiment.clone(),
            case: case.into(),
            quantity: quantity.into(),
            value,
            check: Some(check),
            pass: Some(pass),
        });
        Ok(pass)
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<ResultRow> {
        self.rows
    }
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

pub fn to_json(rows: &[ResultRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize") + "\n"
}

pub fn failures(rows: &[ResultRow]) -> Vec<&ResultRow> {
    rows.iter().filter(|r| r.pass == Some(false)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub rows: usize,
    pub checks: usize,
    pub failures: usize,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureLine {
    pub experiment: String,
    pub case: String,
    pub quantity: String,
    pub value: f64,
    pub criterion: String,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub experiments: Vec<ExperimentSummary>,
    pub failures: Vec<FailureLine>,
    pub pass: bool,
}

impl RunSummary {
    pub fn failure_lines(rows: &[ResultRow]) -> Vec<FailureLine> {
        failures(rows)
            .into_iter()
            .map(|r| {
                let c = r.check.as_ref().expect("judged rows carry a check");
                FailureLine {
                    experiment: r.experiment.clone(),
                    case: r.case.clone(),
                    quantity: r.quantity.clone(),
                    value: r.value,
                    criterion: c.criterion.clone(),
                    threshold: c.threshold,
                }
            })
            .collect()
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self).expect("summary serializes") + "\n")
    }
}

/// One lattice cell of the heat map.
#[derive(Debug, Clone, Copy)]
pub struct HeatCell {
    pub s: f64,
    pub inv_p: f64,
    /// Colour value in `[0, 1]`; `None` marks a failed point.
    pub level: Option<f64>,
}

/// Self-contained SVG of lattice cells over the `(s, 1/p)` plane.
pub fn heat_map_svg(title: &str, cells: &[HeatCell], legend: &str) -> String {
    let (w, h, pad) = (420.0, 420.0, 60.0);
    let s_vals = distinct(cells.iter().map(|c| c.s));
    let p_vals = distinct(cells.iter().map(|c| c.inv_p));
    let (ns, np) = (s_vals.len().max(1), p_vals.len().max(1));
    let cw = (w - 2.0 * pad) / ns as f64;
    let ch = (h - 2.0 * pad) / np as f64;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, w / 2.0, escape(title));
    for c in cells {
        let i = s_vals.iter().position(|v| *v == c.s).unwrap_or(0);
        let j = p_vals.iter().position(|v| *v == c.inv_p).unwrap_or(0);
        let x = pad + i as f64 * cw;
        let y = h - pad - (j + 1) as f64 * ch;
        let fill = match c.level {
            Some(t) => colour(t),
            None => "#000000".into(),
        };
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{fill}" stroke="white"><title>s={:.4} 1/p={:.4}</title></rect>"#,
            c.s, c.inv_p
        );
        if c.level.is_none() {
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" fill="white" text-anchor="middle">x</text>"#, x + cw / 2.0, y + ch / 2.0 + 4.0);
        }
    }
    for (i, s) in s_vals.iter().enumerate() {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{s:.3}</text>"#, pad + (i as f64 + 0.5) * cw, h - pad + 16.0);
    }
    for (j, p) in p_vals.iter().enumerate() {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{p:.3}</text>"#, pad - 6.0, h - pad - (j as f64 + 0.5) * ch + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">s</text>"#, w / 2.0, h - 18.0);
    let _ = writeln!(out, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">1/p</text>"#, h / 2.0, h / 2.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#, w - 8.0, h - 4.0, escape(legend));
    out.push_str("</svg>\n");
    out
}

fn distinct(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = it.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn colour(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t).round() as u8;
    let b = (255.0 * (1.0 - t)).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_check() {
        let c = Check { criterion: "x".into(), op: Op::Near, target: Some(1.0), threshold: 1e-8 };
        assert!(c.passes(1.0 + 1e-9));
        assert!(!c.passes(1.0 + 1e-7));
    }

    #[test]
    fn csv_row_format() {
        let r = ResultRow {
            experiment: "garding".into(),
            case: "laplacian".into(),
            quantity: "lambda_hat".into(),
            value: 1.0,
            check: Some(Check { criterion: "garding.tol".into(), op: Op::Near, target: Some(1.0), threshold: 1e-8 }),
            pass: Some(true),
        };
        assert_eq!(r.csv(), "garding,laplacian,lambda_hat,1.0000000000e0,garding.tol,near,1.0000000000e0,1.0000000000e-8,true");
    }

    #[test]
    fn svg_is_closed() {
        let svg = heat_map_svg("t", &[HeatCell { s: 0.5, inv_p: 0.5, level: Some(0.2) }, HeatCell { s: 0.6, inv_p: 0.5, level: None }], "l");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}

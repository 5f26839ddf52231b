//! CSV and JSON outputs: training curves, energy series, evaluation reports.
//!
//! CSV files have a header row, comma separators and `.` decimals. Floats
//! use Rust's shortest round-trip formatting, so a written value parses
//! back to the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::training::CurveRow;

pub const CURVE_HEADER: &str = "step,train_loss,valid_acc_mse,valid_mse_p";

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.step, r.train_loss, r.valid_acc_mse, r.valid_mse_p).expect("write to String");
    }
    out
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize) -> Result<T> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("malformed CSV field on line {line}")))
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CURVE_HEADER) {
        return Err(Error::Format("unexpected training-curve header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut f = l.split(',');
            let row = CurveRow {
                step: parse_field(f.next(), i + 2)?,
                train_loss: parse_field(f.next(), i + 2)?,
                valid_acc_mse: parse_field(f.next(), i + 2)?,
                valid_mse_p: parse_field(f.next(), i + 2)?,
            };
            if f.next().is_some() {
                return Err(Error::Format(format!("too many CSV fields on line {}", i + 2)));
            }
            Ok(row)
        })
        .collect()
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRow>> {
    parse_curve_csv(&std::fs::read_to_string(path)?)
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    std::fs::write(path, curve_csv(rows))?;
    Ok(())
}

/// Kinetic-energy series of named trajectories, one row per frame.
pub fn ekin_csv(series: &[(String, Vec<f64>)]) -> String {
    let mut out = String::from("trajectory,frame,ekin\n");
    for (name, values) in series {
        for (k, e) in values.iter().enumerate() {
            writeln!(out, "{name},{k},{e}").expect("write to String");
        }
    }
    out
}

/// Per-step evaluation series of named rollouts. Skipped Sinkhorn steps
/// are left empty.
pub fn eval_steps_csv(reports: &[(String, EvalReport)]) -> String {
    let mut out = String::from("trajectory,step,mse_p,ekin_pred,ekin_ref,sinkhorn\n");
    for (name, r) in reports {
        for k in 0..r.mse_p.len() {
            let sinkhorn = r.sinkhorn.get(k).copied().flatten().map(|s| s.to_string()).unwrap_or_default();
            writeln!(out, "{name},{},{},{},{},{sinkhorn}", k + 1, r.mse_p[k], r.ekin_pred[k], r.ekin_ref[k]).expect("write to String");
        }
    }
    out
}

/// Headline numbers of one dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSummary {
    /// Position MSE averaged over steps and test rollouts.
    pub mse_p: f64,
    /// Kinetic-energy MSE averaged over test rollouts.
    pub mse_ekin: f64,
    /// Mean Sinkhorn divergence averaged over test rollouts.
    pub sinkhorn_mean: f64,
}

impl EvalSummary {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> Self {
        let (mut p, mut e, mut s, mut n) = (0.0, 0.0, 0.0, 0usize);
        for r in reports {
            p += r.mse_p_mean();
            e += r.mse_ekin;
            s += r.sinkhorn_mean;
            n += 1;
        }
        let n = n.max(1) as f64;
        Self { mse_p: p / n, mse_ekin: e / n, sinkhorn_mean: s / n }
    }
}

/// `{dataset: {mse_p, mse_ekin, sinkhorn_mean}}`.
pub fn summary_json(summaries: &BTreeMap<String, EvalSummary>) -> Result<String> {
    Ok(serde_json::to_string_pretty(summaries)?)
}

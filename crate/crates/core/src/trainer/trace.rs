use std::io::Write;

use crate::codec::{Decoder, Encoder};
use crate::error::{AceError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub loss_train: f64,
    pub loss_val_raw: f64,
    pub loss_val_proj: f64,
    pub eq_error_exact: f64,
    pub gammas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// All zero outside resilient runs.
    pub us: Vec<f64>,
    pub thm1_refined: f64,
    pub thm2_refined: f64,
}

impl TraceRow {
    pub fn depth(&self) -> usize {
        self.gammas.len()
    }

    pub fn max_abs_gamma(&self) -> f64 {
        self.gammas.iter().map(|g| g.abs()).fold(0.0, f64::max)
    }

    pub fn max_u(&self) -> f64 {
        self.us.iter().copied().fold(0.0, f64::max)
    }

    pub(crate) fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.step)
            .f64(self.loss_train)
            .f64(self.loss_val_raw)
            .f64(self.loss_val_proj)
            .f64(self.eq_error_exact)
            .f64s(&self.gammas)
            .f64s(&self.lambdas)
            .f64s(&self.us)
            .f64(self.thm1_refined)
            .f64(self.thm2_refined);
    }

    pub(crate) fn decode(dec: &mut Decoder) -> Result<Self> {
        let row = Self {
            step: dec.u64()?,
            loss_train: dec.f64()?,
            loss_val_raw: dec.f64()?,
            loss_val_proj: dec.f64()?,
            eq_error_exact: dec.f64()?,
            gammas: dec.f64s()?,
            lambdas: dec.f64s()?,
            us: dec.f64s()?,
            thm1_refined: dec.f64()?,
            thm2_refined: dec.f64()?,
        };
        if row.lambdas.len() != row.depth() || row.us.len() != row.depth() {
            return Err(AceError::Corrupt("trace row vectors differ in length".into()));
        }
        Ok(row)
    }
}

pub fn csv_header(depth: usize) -> String {
    let mut cols: Vec<String> =
        ["step", "loss_train", "loss_val_raw", "loss_val_proj", "eq_error_exact"].map(String::from).to_vec();
    for name in ["gamma", "lambda", "u"] {
        cols.extend((1..=depth).map(|i| format!("{name}_{i}")));
    }
    cols.push("thm1_refined".into());
    cols.push("thm2_refined".into());
    cols.join(",")
}

/// 17 significant digits: every f64 survives the round trip.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(rows: &[TraceRow], mut out: W) -> Result<()> {
    let depth = rows.first().map_or(0, TraceRow::depth);
    writeln!(out, "{}", csv_header(depth))?;
    for r in rows {
        if r.depth() != depth || r.lambdas.len() != depth || r.us.len() != depth {
            return Err(AceError::LengthMismatch { op: "write_csv", left: depth, right: r.depth() });
        }
        let mut cols = vec![r.step.to_string()];
        cols.extend([r.loss_train, r.loss_val_raw, r.loss_val_proj, r.eq_error_exact].map(fmt));
        cols.extend(r.gammas.iter().chain(&r.lambdas).chain(&r.us).map(|v| fmt(*v)));
        cols.push(fmt(r.thm1_refined));
        cols.push(fmt(r.thm2_refined));
        writeln!(out, "{}", cols.join(","))?;
    }
    Ok(())
}

pub fn read_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| AceError::Corrupt("empty trace".into()))?;
    let n_cols = header.split(',').count();
    if n_cols < 7 || (n_cols - 7) % 3 != 0 {
        return Err(AceError::Corrupt(format!("unexpected trace header '{header}'")));
    }
    let depth = (n_cols - 7) / 3;
    if header != csv_header(depth) {
        return Err(AceError::Corrupt(format!("unexpected trace header '{header}'")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n_cols {
                return Err(AceError::Corrupt(format!("trace line {} has {} columns", i + 2, fields.len())));
            }
            let step = fields[0].parse().map_err(|_| AceError::Corrupt(format!("bad step on line {}", i + 2)))?;
            let v = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| AceError::Corrupt(format!("bad number '{f}' on line {}", i + 2))))
                .collect::<Result<Vec<f64>>>()?;
            let vec_at = |k: usize| v[4 + k * depth..4 + (k + 1) * depth].to_vec();
            Ok(TraceRow {
                step,
                loss_train: v[0],
                loss_val_raw: v[1],
                loss_val_proj: v[2],
                eq_error_exact: v[3],
                gammas: vec_at(0),
                lambdas: vec_at(1),
                us: vec_at(2),
                thm1_refined: v[4 + 3 * depth],
                thm2_refined: v[5 + 3 * depth],
            })
        })
        .collect()
}

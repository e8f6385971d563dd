//! Report and raw-error CSV files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io;

pub const REPORT_HEADER: &str = "model,profile,t_obs,avg_error_m,p95_error_m,n_eval,param_count,train_s,predict_s";
pub const RAW_HEADER: &str = "model,profile,t_obs,sample_id,error_m";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub model: String,
    pub profile: String,
    pub t_obs: usize,
    pub avg_error_m: f64,
    pub p95_error_m: f64,
    pub n_eval: usize,
    pub param_count: usize,
    pub train_s: f64,
    pub predict_s: f64,
}

impl MetricsRow {
    /// Equality ignoring wall-clock columns.
    pub fn same_metrics(&self, other: &Self) -> bool {
        self.model == other.model
            && self.profile == other.profile
            && self.t_obs == other.t_obs
            && self.avg_error_m.to_bits() == other.avg_error_m.to_bits()
            && self.p95_error_m.to_bits() == other.p95_error_m.to_bits()
            && self.n_eval == other.n_eval
            && self.param_count == other.param_count
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawError {
    pub model: String,
    pub profile: String,
    pub t_obs: usize,
    pub sample_id: usize,
    pub error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawErrors {
    pub rows: Vec<RawError>,
}

fn fields(line: &str, n: usize, lineno: usize) -> Result<Vec<&str>> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != n {
        return Err(Error::Format(format!("line {lineno}: expected {n} fields, got {}", f.len())));
    }
    Ok(f)
}

fn num<T: std::str::FromStr>(s: &str, lineno: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {lineno}: bad number {s:?}")))
}

fn check_header(text: &str, header: &str) -> Result<()> {
    match text.lines().next() {
        Some(h) if h.trim() == header => Ok(()),
        _ => Err(Error::Format(format!("missing CSV header {header:?}"))),
    }
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.model, r.profile, r.t_obs, r.avg_error_m, r.p95_error_m, r.n_eval, r.param_count, r.train_s, r.predict_s
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        check_header(text, REPORT_HEADER)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f = fields(line, 9, i + 1)?;
            rows.push(MetricsRow {
                model: f[0].to_string(),
                profile: f[1].to_string(),
                t_obs: num(f[2], i + 1)?,
                avg_error_m: num(f[3], i + 1)?,
                p95_error_m: num(f[4], i + 1)?,
                n_eval: num(f[5], i + 1)?,
                param_count: num(f[6], i + 1)?,
                train_s: num(f[7], i + 1)?,
                predict_s: num(f[8], i + 1)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&io::read_string(path)?)
    }

    pub fn find(&self, model: &str, profile: &str, t_obs: usize) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.profile == profile && r.t_obs == t_obs)
    }

    /// Row-by-row [`MetricsRow::same_metrics`].
    pub fn same_metrics(&self, other: &Self) -> bool {
        self.rows.len() == other.rows.len() && self.rows.iter().zip(&other.rows).all(|(a, b)| a.same_metrics(b))
    }
}

impl RawErrors {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(RAW_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.model, r.profile, r.t_obs, r.sample_id, r.error_m));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        check_header(text, RAW_HEADER)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f = fields(line, 5, i + 1)?;
            rows.push(RawError {
                model: f[0].to_string(),
                profile: f[1].to_string(),
                t_obs: num(f[2], i + 1)?,
                sample_id: num(f[3], i + 1)?,
                error_m: num(f[4], i + 1)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&io::read_string(path)?)
    }

    /// Errors of one report cell, in sample order.
    pub fn cell(&self, model: &str, profile: &str, t_obs: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.model == model && r.profile == profile && r.t_obs == t_obs)
            .map(|r| r.error_m)
            .collect()
    }
}

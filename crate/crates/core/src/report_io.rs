//! CSV and JSON emission for experiment results.
//!
//! Reals are written in scientific notation with 17 significant digits, which
//! round-trips every `f64`. Missing values are empty cells. Lines end in LF.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mc_harness::{DispersionProfile, ExperimentSummary, RegimeConfig, RunRecord};

pub const PROFILE_HEADER: &str = "rank,t,mean_exact,std_exact,mean_emp,std_emp,std_emp_rescaled";
pub const RUNS_HEADER: &str = "rep,d_exact,p_exact,d_emp,p_emp,d_two,p_two";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("profiles differ in length ({exact} vs {empirical})")]
    LengthMismatch { exact: usize, empirical: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub rank: usize,
    pub t: f64,
    pub mean_exact: f64,
    pub std_exact: f64,
    pub mean_emp: Option<f64>,
    pub std_emp: Option<f64>,
    pub std_emp_rescaled: f64,
}

/// Rows pairing an exact and an empirical profile. Without an empirical
/// profile the emp columns are empty and the rescaled column carries the
/// exact profile's rescaled spread.
pub fn profile_rows(
    exact: &DispersionProfile,
    empirical: Option<&DispersionProfile>,
) -> Result<Vec<ProfileRow>, ReportError> {
    if let Some(emp) = empirical {
        if emp.len() != exact.len() {
            return Err(ReportError::LengthMismatch {
                exact: exact.len(),
                empirical: emp.len(),
            });
        }
    }
    let m = exact.len();
    Ok((0..m)
        .map(|i| ProfileRow {
            rank: i + 1,
            t: (i + 1) as f64 / (m + 1) as f64,
            mean_exact: exact.rank_means[i],
            std_exact: exact.rank_stds[i],
            mean_emp: empirical.map(|e| e.rank_means[i]),
            std_emp: empirical.map(|e| e.rank_stds[i]),
            std_emp_rescaled: empirical.unwrap_or(exact).rescaled_stds[i],
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub rep: usize,
    pub d_exact: f64,
    pub p_exact: f64,
    pub d_emp: f64,
    pub p_emp: f64,
    pub d_two: Option<f64>,
    pub p_two: Option<f64>,
}

impl From<&RunRecord> for RunRow {
    fn from(r: &RunRecord) -> Self {
        Self {
            rep: r.rep_index,
            d_exact: r.ks_exact.statistic,
            p_exact: r.ks_exact.p_value,
            d_emp: r.ks_empirical.statistic,
            p_emp: r.ks_empirical.p_value,
            d_two: r.ks_two_sample.map(|k| k.statistic),
            p_two: r.ks_two_sample.map(|k| k.p_value),
        }
    }
}

pub fn render_profile_csv(rows: &[ProfileRow]) -> String {
    let mut out = String::from(PROFILE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.rank,
            format_real(r.t),
            format_real(r.mean_exact),
            format_real(r.std_exact),
            format_opt(r.mean_emp),
            format_opt(r.std_emp),
            format_real(r.std_emp_rescaled),
        ));
    }
    out
}

pub fn render_runs_csv(rows: &[RunRow]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.rep,
            format_real(r.d_exact),
            format_real(r.p_exact),
            format_real(r.d_emp),
            format_real(r.p_emp),
            format_opt(r.d_two),
            format_opt(r.p_two),
        ));
    }
    out
}

/// Summary object; key order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryJson {
    pub config: ConfigJson,
    pub correlation_ks: Option<f64>,
    pub rejection_rate_05: Option<f64>,
    pub profile_sup_gap: Option<f64>,
    pub appendix_bound_violations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub runs: Option<Vec<RunRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigJson {
    pub regime: String,
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub distribution: String,
    pub master_seed: u64,
}

impl From<&RegimeConfig> for ConfigJson {
    fn from(c: &RegimeConfig) -> Self {
        Self {
            regime: c.regime.to_string(),
            n: c.n,
            m: c.m,
            reps: c.reps,
            distribution: c.distribution.to_string(),
            master_seed: c.master_seed,
        }
    }
}

impl SummaryJson {
    pub fn from_summary(summary: &ExperimentSummary, full: bool) -> Self {
        Self {
            config: (&summary.config).into(),
            correlation_ks: Some(summary.correlation_ks),
            rejection_rate_05: Some(summary.rejection_rate_05),
            profile_sup_gap: Some(summary.profile_sup_gap()),
            appendix_bound_violations: summary.appendix_bound_violations,
            runs: full.then(|| summary.runs.iter().map(RunRow::from).collect()),
        }
    }

    /// Config-only summary for studies without KS statistics.
    pub fn config_only(config: &RegimeConfig) -> Self {
        Self {
            config: config.into(),
            correlation_ks: None,
            rejection_rate_05: None,
            profile_sup_gap: None,
            appendix_bound_violations: None,
            runs: None,
        }
    }

    pub fn render(&self) -> Result<String, ReportError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn write_bytes<W: Write>(out: &mut W, text: &str) -> io::Result<usize> {
    out.write_all(text.as_bytes())?;
    Ok(text.len())
}

pub fn write_profile_csv<W: Write>(out: &mut W, rows: &[ProfileRow]) -> io::Result<usize> {
    write_bytes(out, &render_profile_csv(rows))
}

pub fn write_runs_csv<W: Write>(out: &mut W, rows: &[RunRow]) -> io::Result<usize> {
    write_bytes(out, &render_runs_csv(rows))
}

pub fn write_summary_json<W: Write>(
    out: &mut W,
    summary: &SummaryJson,
) -> Result<usize, ReportError> {
    let text = summary.render()?;
    write_bytes(out, &text).map_err(|source| ReportError::Io {
        path: PathBuf::from("<writer>"),
        source,
    })
}

/// Writes `text` to `path`, returning the byte count.
pub fn write_file(path: &Path, text: &str) -> Result<usize, ReportError> {
    fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.len())
}

fn parse_cell<T: std::str::FromStr>(
    cell: &str,
    line: usize,
    column: &str,
) -> Result<T, ReportError> {
    cell.parse().map_err(|_| ReportError::Parse {
        line,
        message: format!("bad {column} value `{cell}`"),
    })
}

fn parse_opt(cell: &str, line: usize, column: &str) -> Result<Option<f64>, ReportError> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse_cell(cell, line, column).map(Some)
    }
}

fn split_rows<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>, ReportError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => {
            return Err(ReportError::Parse {
                line: 1,
                message: format!("unexpected header {other:?}"),
            })
        }
    }
    let width = header.split(',').count();
    lines
        .enumerate()
        .map(|(i, l)| {
            let cells: Vec<&str> = l.split(',').collect();
            if cells.len() != width {
                return Err(ReportError::Parse {
                    line: i + 2,
                    message: format!("expected {width} cells, found {}", cells.len()),
                });
            }
            Ok((i + 2, cells))
        })
        .collect()
}

pub fn parse_profile_csv(text: &str) -> Result<Vec<ProfileRow>, ReportError> {
    split_rows(text, PROFILE_HEADER)?
        .into_iter()
        .map(|(line, c)| {
            Ok(ProfileRow {
                rank: parse_cell(c[0], line, "rank")?,
                t: parse_cell(c[1], line, "t")?,
                mean_exact: parse_cell(c[2], line, "mean_exact")?,
                std_exact: parse_cell(c[3], line, "std_exact")?,
                mean_emp: parse_opt(c[4], line, "mean_emp")?,
                std_emp: parse_opt(c[5], line, "std_emp")?,
                std_emp_rescaled: parse_cell(c[6], line, "std_emp_rescaled")?,
            })
        })
        .collect()
}

pub fn parse_runs_csv(text: &str) -> Result<Vec<RunRow>, ReportError> {
    split_rows(text, RUNS_HEADER)?
        .into_iter()
        .map(|(line, c)| {
            Ok(RunRow {
                rep: parse_cell(c[0], line, "rep")?,
                d_exact: parse_cell(c[1], line, "d_exact")?,
                p_exact: parse_cell(c[2], line, "p_exact")?,
                d_emp: parse_cell(c[3], line, "d_emp")?,
                p_emp: parse_cell(c[4], line, "p_emp")?,
                d_two: parse_opt(c[5], line, "d_two")?,
                p_two: parse_opt(c[6], line, "p_two")?,
            })
        })
        .collect()
}

//! Command-line front end.
//!
//! Experiment subcommands write three files into `--out`, named
//! `<subcommand>_n<N>_m<M>_s<SEED>.{profile.csv,runs.csv,summary.json}`.
//! Data goes to files or stdout; diagnostics go to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::induced_dist::TrueDistribution;
use crate::ks_stats::{
    ks_grid_statistic, ks_one_sample_uniform, ks_two_sample, KsError, KsOutcome,
};
use crate::mc_harness::{
    run_bound_sweep, run_donsker, run_experiment, with_threads, HarnessError, Regime, RegimeConfig,
    SweepReport, DEFAULT_DONSKER_REPS, DEFAULT_REPS,
};
use crate::pit_core::{estimate_batch, OrderedSample, PitError};
use crate::report_io::{
    profile_rows, render_profile_csv, render_runs_csv, write_file, ReportError, RunRow, SummaryJson,
};

/// Environment variable capping the harness worker count.
pub const THREADS_ENV: &str = "PIT_CALIB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Input {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: no values")]
    EmptyInput(String),
    #[error(transparent)]
    Pit(#[from] PitError),
    #[error(transparent)]
    Ks(#[from] KsError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(
    name = "pit-calib",
    version,
    about = "Empirical PIT estimation and KS calibration studies"
)]
pub struct CliInvocation {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dispersion of uniform order statistics across replications.
    Donsker(ExperimentArgs),
    /// All observations ranked against one common reference sample.
    FixedRef(ExperimentArgs),
    /// Each observation ranked against its own fresh reference sample.
    IndepRef(ExperimentArgs),
    /// Each observation ranked against the preceding n observations.
    Rolling(ExperimentArgs),
    /// Empirical percentiles of values against a reference file.
    Pit(PitArgs),
    /// KS statistic of one file (against U(0,1)) or two files (two-sample).
    Ks(KsArgs),
    /// Randomized check of the grid-restricted vs two-sample bracket.
    BoundSweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// Reference-sample size.
    #[arg(long, default_value_t = 252, value_parser = clap::value_parser!(u64).range(2..))]
    pub n: u64,
    /// Evaluated-sample size.
    #[arg(long, default_value_t = 252, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    /// Replications (2000; 1000 for donsker).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: Option<u64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DistArg::Normal)]
    pub dist: DistArg,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Include per-replication rows in the summary JSON.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistArg {
    Normal,
    Uniform,
}

impl From<DistArg> for TrueDistribution {
    fn from(d: DistArg) -> Self {
        match d {
            DistArg::Normal => TrueDistribution::Normal,
            DistArg::Uniform => TrueDistribution::Uniform,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PitArgs {
    /// Reference sample, one real per line.
    #[arg(long)]
    pub reference: PathBuf,
    /// Values to transform.
    #[arg(required = true, allow_negative_numbers = true)]
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KsModeArg {
    OneSample,
    Grid,
}

#[derive(Debug, Clone, Args)]
pub struct KsArgs {
    /// One file: test against U(0,1). Two files: two-sample test.
    #[arg(required = true, num_args = 1..=2)]
    pub files: Vec<PathBuf>,
    /// Statistic for the single-file case.
    #[arg(long, value_enum, default_value_t = KsModeArg::OneSample)]
    pub mode: KsModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_m: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(2..))]
    pub max_n: u64,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DistArg::Normal)]
    pub dist: DistArg,
}

pub fn parse_args<I, T>(argv: I) -> Result<CliInvocation, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    CliInvocation::try_parse_from(argv)
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Donsker(_) => "donsker",
            Command::FixedRef(_) => "fixed-ref",
            Command::IndepRef(_) => "indep-ref",
            Command::Rolling(_) => "rolling",
            Command::Pit(_) => "pit",
            Command::Ks(_) => "ks",
            Command::BoundSweep(_) => "bound-sweep",
        }
    }
}

impl ExperimentArgs {
    fn config(&self, regime: Regime) -> RegimeConfig {
        let default_reps = if regime == Regime::Exact {
            DEFAULT_DONSKER_REPS
        } else {
            DEFAULT_REPS
        };
        RegimeConfig {
            regime,
            n: self.n as usize,
            m: self.m as usize,
            reps: self.reps.map_or(default_reps, |r| r as usize),
            distribution: self.dist.into(),
            master_seed: self.seed,
        }
    }
}

/// Worker cap from `PIT_CALIB_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&k| k > 0)
}

/// Output paths for an experiment: profile CSV, runs CSV, summary JSON.
pub fn output_paths(dir: &Path, subcommand: &str, n: usize, m: usize, seed: u64) -> [PathBuf; 3] {
    let stem = format!("{subcommand}_n{n}_m{m}_s{seed}");
    ["profile.csv", "runs.csv", "summary.json"].map(|ext| dir.join(format!("{stem}.{ext}")))
}

pub fn run(invocation: &CliInvocation, stdout: &mut dyn Write) -> Result<(), CliError> {
    let threads = threads_from_env();
    match &invocation.command {
        Command::Donsker(args) => with_threads(threads, || cmd_donsker(args)),
        Command::FixedRef(args) => with_threads(threads, || {
            cmd_experiment("fixed-ref", Regime::FixedReference, args)
        }),
        Command::IndepRef(args) => with_threads(threads, || {
            cmd_experiment("indep-ref", Regime::IndependentReference, args)
        }),
        Command::Rolling(args) => with_threads(threads, || {
            cmd_experiment("rolling", Regime::RollingWindow, args)
        }),
        Command::Pit(args) => cmd_pit(args, stdout),
        Command::Ks(args) => cmd_ks(args, stdout),
        Command::BoundSweep(args) => {
            let report = with_threads(threads, || {
                run_bound_sweep(
                    args.max_m as usize,
                    args.max_n as usize,
                    args.trials as usize,
                    args.dist.into(),
                    args.seed,
                )
            })?;
            print_sweep(&report, stdout)
        }
    }
}

/// Reads one real per line; blank lines are skipped.
pub fn read_values(path: &Path) -> Result<Vec<f64>, CliError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: shown.clone(),
        source,
    })?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let v: f64 = trimmed.parse().map_err(|_| CliError::Input {
            path: shown.clone(),
            line: i + 1,
            message: format!("not a number: `{trimmed}`"),
        })?;
        if !v.is_finite() {
            return Err(CliError::Input {
                path: shown.clone(),
                line: i + 1,
                message: format!("non-finite value `{trimmed}`"),
            });
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(CliError::EmptyInput(shown));
    }
    Ok(values)
}

/// Probability with up to 12 decimals, trailing zeros dropped.
fn fmt_prob(p: f64) -> String {
    let s = format!("{p:.12}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

pub fn cmd_pit(args: &PitArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let reference = OrderedSample::new(read_values(&args.reference)?)?;
    for (x, est) in args.x.iter().zip(estimate_batch(&reference, &args.x)?) {
        let warning = if est.monotonicity_warning {
            "\tmonotonicity-warning"
        } else {
            ""
        };
        writeln!(
            stdout,
            "{x}\t{}\t{}{warning}",
            fmt_prob(est.value),
            est.region
        )?;
    }
    Ok(())
}

fn print_outcome(stdout: &mut dyn Write, out: &KsOutcome) -> Result<(), CliError> {
    let mode = serde_json::to_value(out.mode).map_err(ReportError::from)?;
    writeln!(
        stdout,
        "mode={}\tD={}\tn_eff={}\tp_value={}",
        mode.as_str().unwrap_or_default(),
        out.statistic,
        out.n_eff,
        out.p_value
    )?;
    Ok(())
}

pub fn cmd_ks(args: &KsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let first = read_values(&args.files[0])?;
    let outcome = match (args.files.get(1), args.mode) {
        (Some(second), _) => ks_two_sample(&first, &read_values(second)?)?,
        (None, KsModeArg::OneSample) => ks_one_sample_uniform(&first)?,
        (None, KsModeArg::Grid) => ks_grid_statistic(&first)?,
    };
    print_outcome(stdout, &outcome)
}

fn cmd_donsker(args: &ExperimentArgs) -> Result<(), CliError> {
    let config = args.config(Regime::Exact);
    let profile = run_donsker(&config)?;
    fs::create_dir_all(&args.out).map_err(|source| ReportError::Io {
        path: args.out.clone(),
        source,
    })?;
    let [profile_path, _, summary_path] =
        output_paths(&args.out, "donsker", config.n, config.n, config.master_seed);
    write_file(
        &profile_path,
        &render_profile_csv(&profile_rows(&profile, None)?),
    )?;
    write_file(&summary_path, &SummaryJson::config_only(&config).render()?)?;
    eprintln!(
        "wrote {} and {}",
        profile_path.display(),
        summary_path.display()
    );
    Ok(())
}

fn cmd_experiment(name: &str, regime: Regime, args: &ExperimentArgs) -> Result<(), CliError> {
    let config = args.config(regime);
    let summary = run_experiment(&config)?;
    fs::create_dir_all(&args.out).map_err(|source| ReportError::Io {
        path: args.out.clone(),
        source,
    })?;
    let [profile_path, runs_path, summary_path] =
        output_paths(&args.out, name, config.n, config.m, config.master_seed);
    let rows = profile_rows(&summary.profile_exact, Some(&summary.profile_empirical))?;
    write_file(&profile_path, &render_profile_csv(&rows))?;
    let runs: Vec<RunRow> = summary.runs.iter().map(RunRow::from).collect();
    write_file(&runs_path, &render_runs_csv(&runs))?;
    write_file(
        &summary_path,
        &SummaryJson::from_summary(&summary, args.full).render()?,
    )?;
    if summary.retries > 0 {
        eprintln!("{} replication(s) redrawn after ties", summary.retries);
    }
    eprintln!(
        "{name}: correlation_ks={:.4} rejection_rate_05={:.4}; wrote {}",
        summary.correlation_ks,
        summary.rejection_rate_05,
        args.out.display()
    );
    Ok(())
}

fn print_sweep(report: &SweepReport, stdout: &mut dyn Write) -> Result<(), CliError> {
    writeln!(
        stdout,
        "trials={}\tviolations={}\tredrawn={}\tmin_margin={}",
        report.trials, report.violations, report.redrawn, report.min_gap_margin
    )?;
    if let Some(b) = report.first_violation {
        eprintln!(
            "first violation: m={} n={} d_grid={} d_two={} gap={}",
            b.m, b.n, b.d_grid, b.d_two, b.gap
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<CliInvocation, clap::Error> {
        parse_args(std::iter::once("pit-calib").chain(args.iter().copied()))
    }

    #[test]
    fn experiment_defaults() {
        let inv = parse(&["donsker", "--n", "252", "--reps", "1000"]).unwrap();
        let Command::Donsker(a) = &inv.command else {
            panic!()
        };
        let c = a.config(Regime::Exact);
        assert_eq!((c.n, c.reps, c.master_seed), (252, 1000, 42));
        assert_eq!(
            parse(&["donsker"])
                .map(|i| match i.command {
                    Command::Donsker(a) => a.config(Regime::Exact).reps,
                    _ => 0,
                })
                .unwrap(),
            1000
        );

        let inv = parse(&["fixed-ref", "--m", "64"]).unwrap();
        let Command::FixedRef(a) = &inv.command else {
            panic!()
        };
        let c = a.config(Regime::FixedReference);
        assert_eq!((c.n, c.m, c.reps), (252, 64, 2000));
        assert_eq!(c.distribution, TrueDistribution::Normal);
        assert!(!a.full);
    }

    #[test]
    fn usage_errors() {
        assert!(parse(&["fixed-ref", "--m", "0"]).is_err());
        assert!(parse(&["fixed-ref", "--n", "1"]).is_err());
        assert!(parse(&["fixed-ref", "--bogus", "1"]).is_err());
        assert!(parse(&["frobnicate"]).is_err());
        assert!(parse(&["bound-sweep", "--max-m", "0"]).is_err());
        assert!(parse(&["rolling", "--dist", "cauchy"]).is_err());
        let inv = parse(&["bound-sweep", "--trials", "1"]).unwrap();
        let Command::BoundSweep(a) = &inv.command else {
            panic!()
        };
        assert_eq!((a.max_m, a.max_n, a.trials), (32, 32, 1));
    }

    #[test]
    fn pit_parses_negative_values() {
        let inv = parse(&["pit", "--reference", "r.txt", "-2", "0.5"]).unwrap();
        let Command::Pit(a) = &inv.command else {
            panic!()
        };
        assert_eq!(a.x, vec![-2.0, 0.5]);
    }

    #[test]
    fn names_are_pure() {
        let [p, r, s] = output_paths(Path::new("out"), "fixed-ref", 252, 64, 42);
        assert_eq!(p, Path::new("out/fixed-ref_n252_m64_s42.profile.csv"));
        assert_eq!(r, Path::new("out/fixed-ref_n252_m64_s42.runs.csv"));
        assert_eq!(s, Path::new("out/fixed-ref_n252_m64_s42.summary.json"));
    }

    #[test]
    fn probability_formatting() {
        assert_eq!(fmt_prob(0.625), "0.625");
        assert_eq!(fmt_prob(0.09999999999999998), "0.1");
        assert_eq!(fmt_prob(0.5), "0.5");
    }
}

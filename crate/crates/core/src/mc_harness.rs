//! Seeded Monte Carlo studies of empirical percentiles.
//!
//! Every replication draws from its own ChaCha8 stream keyed by
//! `(master_seed, rep_index, attempt)`, so results do not depend on how
//! replications are scheduled across threads. Replications run on the rayon
//! pool and are aggregated in `rep_index` order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::induced_dist::TrueDistribution;
use crate::ks_stats::{
    ks_grid_statistic, ks_one_sample_uniform, ks_two_sample, BoundReport, KsError, KsOutcome,
};
use crate::pit_core::{
    estimate_batch, estimate_percentile, OrderedSample, PitError, PitEstimate, PIT_EPSILON,
};

pub const DEFAULT_N: usize = 252;
pub const DEFAULT_REPS: usize = 2000;
pub const DEFAULT_DONSKER_REPS: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;
/// Evaluated-sample lengths swept by the figure recipes.
pub const DEFAULT_M_LADDER: [usize; 4] = [32, 64, 126, 252];
/// Attempts per replication before a tie or tail singularity is fatal.
pub const MAX_ATTEMPTS: u64 = 10;
pub const NOMINAL_LEVEL: f64 = 0.05;

const STREAM_DOMAIN: [u8; 8] = *b"pitcalib";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("replication {rep} failed after {MAX_ATTEMPTS} attempts: {source}")]
    RetriesExhausted {
        rep: usize,
        #[source]
        source: PitError,
    },
    #[error("need at least 2 replications, got {0}")]
    TooFewReps(usize),
    #[error("ragged order-statistic matrix: row {row} has {got} entries, expected {expected}")]
    Ragged {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("correlation needs two equal-length sequences of length >= 2 (got {0} and {1})")]
    CorrelationShape(usize, usize),
    #[error("zero variance in correlation input")]
    ZeroVariance,
    #[error(transparent)]
    Ks(#[from] KsError),
    #[error(transparent)]
    Pit(#[from] PitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Exact percentiles `F(x)` only.
    Exact,
    /// One common reference sample per replication.
    FixedReference,
    /// A fresh reference sample for every evaluated observation.
    IndependentReference,
    /// Each observation ranked against the preceding `n` observations.
    RollingWindow,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Exact => "exact",
            Regime::FixedReference => "fixed-reference",
            Regime::IndependentReference => "independent-reference",
            Regime::RollingWindow => "rolling-window",
        })
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Regime::Exact),
            "fixed-reference" => Ok(Regime::FixedReference),
            "independent-reference" => Ok(Regime::IndependentReference),
            "rolling-window" => Ok(Regime::RollingWindow),
            other => Err(format!("unknown regime `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegimeConfig {
    pub regime: Regime,
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub distribution: TrueDistribution,
    pub master_seed: u64,
}

impl RegimeConfig {
    /// Caption defaults: `n = 252`, 2000 replications, standard normal data.
    pub fn new(regime: Regime, m: usize) -> Self {
        Self {
            regime,
            n: DEFAULT_N,
            m,
            reps: DEFAULT_REPS,
            distribution: TrueDistribution::Normal,
            master_seed: DEFAULT_SEED,
        }
    }

    /// Donsker study defaults: `n` uniform draws, 1000 replications.
    pub fn donsker(n: usize) -> Self {
        Self {
            regime: Regime::Exact,
            n,
            m: n,
            reps: DEFAULT_DONSKER_REPS,
            distribution: TrueDistribution::Uniform,
            master_seed: DEFAULT_SEED,
        }
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_distribution(mut self, distribution: TrueDistribution) -> Self {
        self.distribution = distribution;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n < 2 {
            return Err(HarnessError::InvalidConfig(format!(
                "n must be >= 2, got {}",
                self.n
            )));
        }
        if self.m < 1 {
            return Err(HarnessError::InvalidConfig("m must be >= 1".into()));
        }
        if self.reps < 1 {
            return Err(HarnessError::InvalidConfig("reps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Stream for attempt `attempt` of replication `rep_index`.
pub fn substream(master_seed: u64, rep_index: u64, attempt: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&rep_index.to_le_bytes());
    key[16..24].copy_from_slice(&attempt.to_le_bytes());
    key[24..].copy_from_slice(&STREAM_DOMAIN);
    ChaCha8Rng::from_seed(key)
}

/// First-attempt stream of replication `rep_index`.
pub fn derive_seed(master_seed: u64, rep_index: u64) -> ChaCha8Rng {
    substream(master_seed, rep_index, 0)
}

/// Runs `f` on a pool capped at `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(k) if k > 0 => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub rep_index: usize,
    pub ks_exact: KsOutcome,
    pub ks_empirical: KsOutcome,
    /// Fixed-reference only.
    pub ks_two_sample: Option<KsOutcome>,
    /// Grid-restricted statistic of the empirical percentiles; fixed-reference only.
    pub ks_grid: Option<KsOutcome>,
    pub sorted_exact: Vec<f64>,
    pub sorted_empirical: Vec<f64>,
}

impl RunRecord {
    pub fn bound_report(&self, m: usize, n: usize) -> Option<BoundReport> {
        match (self.ks_grid, self.ks_two_sample) {
            (Some(grid), Some(two)) => Some(BoundReport::from_statistics(
                grid.statistic,
                two.statistic,
                m,
                n,
            )),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionProfile {
    pub rank_means: Vec<f64>,
    pub rank_stds: Vec<f64>,
    pub rescaled_stds: Vec<f64>,
}

impl DispersionProfile {
    pub fn len(&self) -> usize {
        self.rank_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank_means.is_empty()
    }

    pub fn rescaled(mut self, factor: f64) -> Self {
        self.rescaled_stds = self.rank_stds.iter().map(|s| s * factor).collect();
        self
    }
}

/// `sqrt(1/m) / sqrt(1/m + 1/n)`: brings the spread of empirical percentiles
/// from a common reference sample back onto the exact-percentile scale.
pub fn two_sample_rescaling(m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    (1.0 / m).sqrt() / (1.0 / m + 1.0 / n).sqrt()
}

/// Per-column mean and sample standard deviation of a `reps x m` matrix.
pub fn dispersion_profile(rows: &[Vec<f64>]) -> Result<DispersionProfile, HarnessError> {
    if rows.len() < 2 {
        return Err(HarnessError::TooFewReps(rows.len()));
    }
    let width = rows[0].len();
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(HarnessError::Ragged {
            row,
            got: r.len(),
            expected: width,
        });
    }
    // Welford, column-wise
    let mut means = vec![0.0; width];
    let mut sq_dev = vec![0.0; width];
    for (k, r) in rows.iter().enumerate() {
        let count = (k + 1) as f64;
        for ((mean, acc), &v) in means.iter_mut().zip(sq_dev.iter_mut()).zip(r) {
            let delta = v - *mean;
            *mean += delta / count;
            *acc += delta * (v - *mean);
        }
    }
    let denom = (rows.len() - 1) as f64;
    let stds: Vec<f64> = sq_dev.iter().map(|v| (v / denom).sqrt()).collect();
    Ok(DispersionProfile {
        rank_means: means,
        rescaled_stds: stds.clone(),
        rank_stds: stds,
    })
}

pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64, HarnessError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(HarnessError::CorrelationShape(a.len(), b.len()));
    }
    let len = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / len;
    let mean_b = b.iter().sum::<f64>() / len;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(HarnessError::ZeroVariance);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Order statistics of `n` uniforms per replication, `sqrt(n)`-rescaled.
pub fn run_donsker(config: &RegimeConfig) -> Result<DispersionProfile, HarnessError> {
    config.validate()?;
    let rows: Vec<Vec<f64>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = derive_seed(config.master_seed, rep as u64);
            let mut draws = TrueDistribution::Uniform.sample_n(&mut rng, config.n);
            draws.sort_unstable_by(f64::total_cmp);
            draws
        })
        .collect();
    Ok(dispersion_profile(&rows)?.rescaled((config.n as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub config: RegimeConfig,
    pub profile_exact: DispersionProfile,
    pub profile_empirical: DispersionProfile,
    pub correlation_ks: f64,
    pub rejection_rate_05: f64,
    /// Replications whose grid/two-sample gap leaves the bracket; fixed-reference only.
    pub appendix_bound_violations: Option<usize>,
    /// Replications redrawn after a tie or tail singularity.
    pub retries: usize,
    pub runs: Vec<RunRecord>,
}

impl ExperimentSummary {
    /// Largest per-rank gap between the rescaled empirical spread and the exact spread.
    pub fn profile_sup_gap(&self) -> f64 {
        self.profile_empirical
            .rescaled_stds
            .iter()
            .zip(&self.profile_exact.rank_stds)
            .fold(0.0, |acc, (e, x)| acc.max((e - x).abs()))
    }

    /// Per-rank `rescaled empirical std / exact std` over ranks with
    /// `lo < rank/(m+1) < hi`.
    pub fn std_ratios(&self, lo: f64, hi: f64) -> Vec<f64> {
        let m = self.config.m;
        self.profile_empirical
            .rescaled_stds
            .iter()
            .zip(&self.profile_exact.rank_stds)
            .enumerate()
            .filter(|(i, _)| {
                let t = (i + 1) as f64 / (m + 1) as f64;
                t > lo && t < hi
            })
            .map(|(_, (e, x))| e / x)
            .collect()
    }

    /// Mean of [`Self::std_ratios`] over the central ranks `0.2 < t < 0.8`.
    pub fn mean_central_std_ratio(&self) -> f64 {
        let r = self.std_ratios(0.2, 0.8);
        r.iter().sum::<f64>() / r.len() as f64
    }
}

fn exact_percentiles(dist: TrueDistribution, xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| dist.cdf(x).clamp(PIT_EPSILON, 1.0 - PIT_EPSILON))
        .collect()
}

fn values(estimates: &[PitEstimate]) -> Vec<f64> {
    estimates.iter().map(|e| e.value).collect()
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Raw per-replication draws and percentiles, before KS summaries.
struct RepDraw {
    exact: Vec<f64>,
    empirical: Vec<f64>,
    two_sample: Option<(Vec<f64>, Vec<f64>)>,
}

/// Empirical percentiles of `series[n..]`, each against the `n` observations
/// immediately preceding it.
pub fn rolling_window_percentiles(series: &[f64], n: usize) -> Result<Vec<PitEstimate>, PitError> {
    if n < 2 {
        return Err(PitError::TooSmall { len: n });
    }
    (n..series.len())
        .map(|i| {
            let window = OrderedSample::new(series[i - n..i].to_vec())?;
            estimate_percentile(&window, series[i])
        })
        .collect()
}

fn draw_rep(config: &RegimeConfig, rng: &mut ChaCha8Rng) -> Result<RepDraw, PitError> {
    let dist = config.distribution;
    let (n, m) = (config.n, config.m);
    match config.regime {
        Regime::Exact => {
            let xs = dist.sample_n(rng, m);
            let exact = exact_percentiles(dist, &xs);
            Ok(RepDraw {
                empirical: exact.clone(),
                exact,
                two_sample: None,
            })
        }
        Regime::FixedReference => {
            let ys = dist.sample_n(rng, n);
            let xs = dist.sample_n(rng, m);
            let reference = OrderedSample::new(ys.clone())?;
            let empirical = values(&estimate_batch(&reference, &xs)?);
            Ok(RepDraw {
                exact: exact_percentiles(dist, &xs),
                empirical,
                two_sample: Some((xs, ys)),
            })
        }
        Regime::IndependentReference => {
            let xs = dist.sample_n(rng, m);
            let mut empirical = Vec::with_capacity(m);
            for &x in &xs {
                let reference = OrderedSample::new(dist.sample_n(rng, n))?;
                empirical.push(estimate_percentile(&reference, x)?.value);
            }
            Ok(RepDraw {
                exact: exact_percentiles(dist, &xs),
                empirical,
                two_sample: None,
            })
        }
        Regime::RollingWindow => {
            let series = dist.sample_n(rng, n + m);
            let empirical = values(&rolling_window_percentiles(&series, n)?);
            Ok(RepDraw {
                exact: exact_percentiles(dist, &series[n..]),
                empirical,
                two_sample: None,
            })
        }
    }
}

fn run_rep(config: &RegimeConfig, rep: usize) -> Result<(RunRecord, usize), HarnessError> {
    let mut last_error = None;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = substream(config.master_seed, rep as u64, attempt);
        let draw = match draw_rep(config, &mut rng) {
            Ok(d) => d,
            Err(e) => {
                last_error = Some(e);
                continue;
            }
        };
        let (ks_two_sample, ks_grid) = match &draw.two_sample {
            Some((xs, ys)) => (
                Some(ks_two_sample(xs, ys)?),
                Some(ks_grid_statistic(&draw.empirical)?),
            ),
            None => (None, None),
        };
        let record = RunRecord {
            rep_index: rep,
            ks_exact: ks_one_sample_uniform(&draw.exact)?,
            ks_empirical: ks_one_sample_uniform(&draw.empirical)?,
            ks_two_sample,
            ks_grid,
            sorted_exact: sorted(draw.exact),
            sorted_empirical: sorted(draw.empirical),
        };
        return Ok((record, attempt as usize));
    }
    Err(HarnessError::RetriesExhausted {
        rep,
        source: last_error.expect("at least one attempt"),
    })
}

fn summarize(
    config: &RegimeConfig,
    outcomes: Vec<(RunRecord, usize)>,
) -> Result<ExperimentSummary, HarnessError> {
    let retries = outcomes.iter().map(|(_, r)| r).sum();
    let runs: Vec<RunRecord> = outcomes.into_iter().map(|(r, _)| r).collect();

    let exact_rows: Vec<Vec<f64>> = runs.iter().map(|r| r.sorted_exact.clone()).collect();
    let emp_rows: Vec<Vec<f64>> = runs.iter().map(|r| r.sorted_empirical.clone()).collect();
    let factor = match config.regime {
        Regime::FixedReference => two_sample_rescaling(config.m, config.n),
        _ => 1.0,
    };
    let profile_exact = dispersion_profile(&exact_rows)?;
    let profile_empirical = dispersion_profile(&emp_rows)?.rescaled(factor);

    let d_exact: Vec<f64> = runs.iter().map(|r| r.ks_exact.statistic).collect();
    let d_emp: Vec<f64> = runs.iter().map(|r| r.ks_empirical.statistic).collect();
    let correlation_ks = pearson_correlation(&d_exact, &d_emp)?;
    let rejections = runs
        .iter()
        .filter(|r| r.ks_empirical.p_value < NOMINAL_LEVEL)
        .count();
    let rejection_rate_05 = rejections as f64 / runs.len() as f64;

    let appendix_bound_violations = (config.regime == Regime::FixedReference).then(|| {
        runs.iter()
            .filter_map(|r| r.bound_report(config.m, config.n))
            .filter(|b| !b.within_bracket())
            .count()
    });

    Ok(ExperimentSummary {
        config: *config,
        profile_exact,
        profile_empirical,
        correlation_ks,
        rejection_rate_05,
        appendix_bound_violations,
        retries,
        runs,
    })
}

fn run_regime(config: &RegimeConfig, expected: Regime) -> Result<ExperimentSummary, HarnessError> {
    config.validate()?;
    if config.regime != expected {
        return Err(HarnessError::InvalidConfig(format!(
            "expected regime {expected}, got {}",
            config.regime
        )));
    }
    if config.reps < 2 {
        return Err(HarnessError::TooFewReps(config.reps));
    }
    let outcomes = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_rep(config, rep))
        .collect::<Result<Vec<_>, _>>()?;
    summarize(config, outcomes)
}

/// Exact percentiles only; the empirical side mirrors the exact side.
pub fn run_exact(config: &RegimeConfig) -> Result<ExperimentSummary, HarnessError> {
    run_regime(config, Regime::Exact)
}

pub fn run_fixed_reference(config: &RegimeConfig) -> Result<ExperimentSummary, HarnessError> {
    run_regime(config, Regime::FixedReference)
}

pub fn run_independent_reference(config: &RegimeConfig) -> Result<ExperimentSummary, HarnessError> {
    run_regime(config, Regime::IndependentReference)
}

pub fn run_rolling_window(config: &RegimeConfig) -> Result<ExperimentSummary, HarnessError> {
    run_regime(config, Regime::RollingWindow)
}

/// Dispatches on `config.regime`.
pub fn run_experiment(config: &RegimeConfig) -> Result<ExperimentSummary, HarnessError> {
    run_regime(config, config.regime)
}

/// Redraw cap per sweep trial. With n = 2 about half of all references sit
/// on one side of zero, so the per-replication cap is far too small here.
pub const SWEEP_MAX_DRAWS: usize = 1000;

/// Outcome of a randomized check of the grid/two-sample bracket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub trials: usize,
    pub violations: usize,
    /// Instances redrawn because a tie or a monotonicity warning made the
    /// percentile estimates ill-posed.
    pub redrawn: usize,
    pub min_gap_margin: f64,
    pub first_violation: Option<BoundReport>,
}

/// Draws `trials` random instances with `m` in `1..=max_m` and `n` in
/// `2..=max_n`, and checks each [`BoundReport`] against its bracket.
pub fn run_bound_sweep(
    max_m: usize,
    max_n: usize,
    trials: usize,
    dist: TrueDistribution,
    master_seed: u64,
) -> Result<SweepReport, HarnessError> {
    if max_m < 1 || max_n < 2 || trials < 1 {
        return Err(HarnessError::InvalidConfig(format!(
            "need max_m >= 1, max_n >= 2, trials >= 1 (got {max_m}, {max_n}, {trials})"
        )));
    }
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = derive_seed(master_seed, trial as u64);
            let m = rng.random_range(1..=max_m);
            let n = rng.random_range(2..=max_n);
            for attempt in 0..SWEEP_MAX_DRAWS {
                let ys = dist.sample_n(&mut rng, n);
                let xs = dist.sample_n(&mut rng, m);
                let Ok(reference) = OrderedSample::new(ys.clone()) else {
                    continue;
                };
                let estimates = estimate_batch(&reference, &xs)?;
                if estimates.iter().any(|e| e.monotonicity_warning) {
                    continue;
                }
                let d_grid = ks_grid_statistic(&values(&estimates))?.statistic;
                let d_two = ks_two_sample(&xs, &ys)?.statistic;
                return Ok((
                    BoundReport::from_statistics(d_grid, d_two, m, n),
                    attempt,
                ));
            }
            Err(HarnessError::InvalidConfig(format!(
                "trial {trial}: no well-posed instance in {SWEEP_MAX_DRAWS} draws"
            )))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let mut report = SweepReport {
        trials,
        violations: 0,
        redrawn: 0,
        min_gap_margin: f64::INFINITY,
        first_violation: None,
    };
    for (bound, redraws) in outcomes {
        report.redrawn += redraws;
        let (lo, hi) = bound.bracket();
        report.min_gap_margin = report
            .min_gap_margin
            .min((bound.gap - lo).min(hi - bound.gap));
        if !bound.within_bracket() {
            report.violations += 1;
            report.first_violation.get_or_insert(bound);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let draw = |seed, rep| -> Vec<f64> {
            let mut rng = derive_seed(seed, rep);
            (0..10_000).map(|_| rng.random::<f64>()).collect()
        };
        let a = draw(42, 0);
        assert_eq!(a, draw(42, 0));
        let b = draw(42, 1);
        assert!(pearson_correlation(&a, &b).unwrap().abs() < 0.05);
        assert_ne!(a, draw(43, 0));
        let retry: Vec<f64> = {
            let mut rng = substream(42, 0, 1);
            (0..10).map(|_| rng.random::<f64>()).collect()
        };
        assert_ne!(&a[..10], &retry[..]);
    }

    #[test]
    fn pearson_examples() {
        let a = [1.0, 2.0, 3.0];
        assert!((pearson_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson_correlation(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        // 3 / sqrt(2 * 14/3)
        let expected = 3.0 / (2.0f64 * 14.0 / 3.0).sqrt();
        assert!((pearson_correlation(&a, &[1.0, 2.0, 4.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.981_980_506_061_965_7).abs() < 1e-15);
        assert_eq!(
            pearson_correlation(&a, &[1.0, 1.0, 1.0]),
            Err(HarnessError::ZeroVariance)
        );
        assert!(pearson_correlation(&a, &[1.0]).is_err());
        assert!(pearson_correlation(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn dispersion_examples() {
        let p = dispersion_profile(&[vec![0.3, 0.7], vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        assert_eq!(p.rank_stds, vec![0.0, 0.0]);
        assert_eq!(p.rank_means, vec![0.3, 0.7]);

        let p = dispersion_profile(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        for s in &p.rank_stds {
            assert!((s - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-15);
        }

        // column k/reps for k = 0..reps: sample std = sqrt(reps (reps + 1) / 12) / reps
        let reps = 10usize;
        let rows: Vec<Vec<f64>> = (0..reps).map(|k| vec![k as f64 / reps as f64]).collect();
        let p = dispersion_profile(&rows).unwrap();
        let closed = ((reps * (reps + 1)) as f64 / 12.0).sqrt() / reps as f64;
        assert!((p.rank_stds[0] - closed).abs() < 1e-15);

        assert_eq!(
            dispersion_profile(&[vec![1.0]]),
            Err(HarnessError::TooFewReps(1))
        );
        assert!(matches!(
            dispersion_profile(&[vec![1.0], vec![1.0, 2.0]]),
            Err(HarnessError::Ragged { row: 1, .. })
        ));
    }

    #[test]
    fn rescaling_factor() {
        assert!((two_sample_rescaling(252, 252) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(two_sample_rescaling(32, 252) > 0.9);
    }

    #[test]
    fn config_validation() {
        assert!(RegimeConfig::new(Regime::FixedReference, 0)
            .validate()
            .is_err());
        assert!(RegimeConfig::new(Regime::FixedReference, 5)
            .with_n(1)
            .validate()
            .is_err());
        assert!(RegimeConfig::new(Regime::FixedReference, 5)
            .with_reps(0)
            .validate()
            .is_err());
        let c = RegimeConfig::new(Regime::FixedReference, 64);
        assert_eq!((c.n, c.reps, c.master_seed), (252, 2000, 42));
        assert_eq!(c.distribution, TrueDistribution::Normal);
        assert!(run_fixed_reference(&c.with_reps(1)).is_err());
        assert!(run_rolling_window(&c.with_reps(4)).is_err());
    }

    #[test]
    fn rolling_single_step_matches_fixed_reference() {
        let mut rng = derive_seed(9, 0);
        let series = TrueDistribution::Normal.sample_n(&mut rng, 21);
        let rolled = rolling_window_percentiles(&series, 20).unwrap();
        assert_eq!(rolled.len(), 1);
        let direct = estimate_percentile(
            &OrderedSample::new(series[..20].to_vec()).unwrap(),
            series[20],
        )
        .unwrap();
        assert_eq!(rolled[0], direct);
    }

    #[test]
    fn rolling_window_includes_evaluated_points() {
        // the second evaluation sees the first evaluated observation in its window
        let series = [-1.0, 1.0, 5.0, 3.0];
        let rolled = rolling_window_percentiles(&series, 2).unwrap();
        let second =
            estimate_percentile(&OrderedSample::new(vec![1.0, 5.0]).unwrap(), 3.0).unwrap();
        assert_eq!(rolled[1], second);
        assert!((second.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_runs_have_expected_shape() {
        for regime in [
            Regime::Exact,
            Regime::FixedReference,
            Regime::IndependentReference,
            Regime::RollingWindow,
        ] {
            let c = RegimeConfig::new(regime, 16).with_n(20).with_reps(30);
            let s = run_experiment(&c).unwrap();
            assert_eq!(s.runs.len(), 30);
            assert_eq!(s.profile_exact.len(), 16);
            assert!(s
                .runs
                .iter()
                .all(|r| r.sorted_empirical.windows(2).all(|w| w[0] <= w[1])));
            assert!(s.profile_exact.rank_means.windows(2).all(|w| w[0] <= w[1]));
            assert!((-1.0..=1.0).contains(&s.correlation_ks));
            assert!((0.0..=1.0).contains(&s.rejection_rate_05));
            assert_eq!(
                s.runs.iter().all(|r| r.ks_two_sample.is_some()),
                regime == Regime::FixedReference
            );
            assert_eq!(
                s.appendix_bound_violations.is_some(),
                regime == Regime::FixedReference
            );
            if regime == Regime::Exact {
                assert!((s.correlation_ks - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let c = RegimeConfig::new(Regime::RollingWindow, 24)
            .with_n(30)
            .with_reps(40);
        let one = with_threads(Some(1), || run_experiment(&c).unwrap());
        let four = with_threads(Some(4), || run_experiment(&c).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn bound_sweep_small() {
        let r = run_bound_sweep(8, 8, 500, TrueDistribution::Normal, 3).unwrap();
        assert_eq!(r.trials, 500);
        assert_eq!(r.violations, 0);
        assert!(r.min_gap_margin >= -1e-12);
        assert!(run_bound_sweep(0, 8, 10, TrueDistribution::Normal, 3).is_err());
        assert!(run_bound_sweep(8, 1, 10, TrueDistribution::Normal, 3).is_err());
        assert_eq!(
            run_bound_sweep(4, 4, 1, TrueDistribution::Normal, 3)
                .unwrap()
                .trials,
            1
        );
    }

    #[test]
    fn donsker_small() {
        let p = run_donsker(&RegimeConfig::donsker(10).with_reps(500)).unwrap();
        assert_eq!(p.len(), 10);
        for (i, mean) in p.rank_means.iter().enumerate() {
            let t = (i + 1) as f64 / 11.0;
            // standard error of the mean is below sqrt(t(1-t)/12)/sqrt(500) < 0.007
            assert!((mean - t).abs() < 0.03);
        }
    }
}

//! Kolmogorov-Smirnov statistics.
//!
//! Three sup-norm statistics are provided: the two-sided one-sample statistic
//! against the uniform law, the two-sample statistic over the pooled points,
//! and the grid-restricted statistic `max_i |p_(i) - i/m|` that evaluates the
//! deviation only at the evaluated sample's own order statistics. The last one
//! is a diagnostic used to compare the two former regimes and carries no
//! p-value.

use serde::Serialize;
use thiserror::Error;

use crate::pit_core::{estimate_batch, OrderedSample, PitError};

const SERIES_TERM_CUTOFF: f64 = 1e-12;
const SERIES_MAX_TERMS: usize = 100;
/// Below this argument the alternating series converges slowly and the
/// theta-function form is used instead.
const THETA_FORM_BELOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KsError {
    #[error("empty sample")]
    Empty,
    #[error("value {value} at index {index} is outside the open interval (0, 1)")]
    OutOfUnitInterval { index: usize, value: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("kolmogorov argument must be non-negative, got {0}")]
    NegativeArgument(f64),
    #[error(transparent)]
    Pit(#[from] PitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KsMode {
    /// One-sample against U(0,1); p-value uses the small-sample corrected argument.
    OneSampleUniform,
    /// Two-sample over the pooled points; p-value uses `sqrt(n_eff) * D`.
    TwoSample,
    /// Grid-restricted diagnostic; `p_value` is fixed at 1 and carries no meaning.
    GridRestricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub n_eff: f64,
    pub mode: KsMode,
    pub p_value: f64,
}

/// Fraction of `sorted_values` that are `<= t`.
pub fn ecdf_eval(sorted_values: &[f64], t: f64) -> Result<f64, KsError> {
    if sorted_values.is_empty() {
        return Err(KsError::Empty);
    }
    let count = sorted_values.partition_point(|&v| v <= t);
    Ok(count as f64 / sorted_values.len() as f64)
}

fn sorted_unit_values(values: &[f64]) -> Result<Vec<f64>, KsError> {
    if values.is_empty() {
        return Err(KsError::Empty);
    }
    if let Some((index, &value)) = values
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > 0.0 && v < 1.0))
    {
        return Err(KsError::OutOfUnitInterval { index, value });
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted)
}

fn sorted_finite(values: &[f64]) -> Result<Vec<f64>, KsError> {
    if values.is_empty() {
        return Err(KsError::Empty);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(KsError::NonFinite { index });
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted)
}

/// Two-sided one-sample statistic of `values` against U(0,1).
pub fn ks_one_sample_uniform(values: &[f64]) -> Result<KsOutcome, KsError> {
    let sorted = sorted_unit_values(values)?;
    let m = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let above = (i + 1) as f64 / m - v;
            let below = v - i as f64 / m;
            above.max(below)
        })
        .fold(0.0, f64::max);
    let root = m.sqrt();
    let lambda = (root + 0.12 + 0.11 / root) * statistic;
    Ok(KsOutcome {
        statistic,
        n_eff: m,
        mode: KsMode::OneSampleUniform,
        p_value: kolmogorov_sf(lambda)?,
    })
}

/// `max_i |p_(i) - i/m|`, one comparison per order statistic.
pub fn ks_grid_statistic(phat_values: &[f64]) -> Result<KsOutcome, KsError> {
    let sorted = sorted_unit_values(phat_values)?;
    let m = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - (i + 1) as f64 / m).abs())
        .fold(0.0, f64::max);
    Ok(KsOutcome {
        statistic,
        n_eff: m,
        mode: KsMode::GridRestricted,
        p_value: 1.0,
    })
}

/// Two-sample statistic, evaluated at every pooled point with `<=` ECDFs.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<KsOutcome, KsError> {
    let a = sorted_finite(xs)?;
    let b = sorted_finite(ys)?;
    let (m, n) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut statistic: f64 = 0.0;
    while i < m || j < n {
        let z = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < m && a[i] <= z {
            i += 1;
        }
        while j < n && b[j] <= z {
            j += 1;
        }
        statistic = statistic.max((i as f64 / m as f64 - j as f64 / n as f64).abs());
    }
    let n_eff = (m * n) as f64 / (m + n) as f64;
    Ok(KsOutcome {
        statistic,
        n_eff,
        mode: KsMode::TwoSample,
        p_value: kolmogorov_sf(n_eff.sqrt() * statistic)?,
    })
}

/// Survival function of the Kolmogorov distribution,
/// `Q(l) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 l^2)`.
///
/// For `l < 1` the equivalent form
/// `1 - sqrt(2 pi)/l * sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 l^2))` is summed,
/// since the alternating series needs many terms there and does not converge
/// at `l = 0`.
pub fn kolmogorov_sf(lambda: f64) -> Result<f64, KsError> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(KsError::NegativeArgument(lambda));
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    let sum = if lambda < THETA_FORM_BELOW {
        let scale = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut cdf_sum = 0.0;
        for k in 1..=SERIES_MAX_TERMS {
            let odd = (2 * k - 1) as f64;
            let term = (scale * odd * odd).exp();
            cdf_sum += term;
            if term < SERIES_TERM_CUTOFF {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * cdf_sum
    } else {
        let mut total = 0.0;
        let mut sign = 1.0;
        for k in 1..=SERIES_MAX_TERMS {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            total += sign * term;
            sign = -sign;
            if term < SERIES_TERM_CUTOFF {
                break;
            }
        }
        2.0 * total
    };
    Ok(sum.clamp(0.0, 1.0))
}

/// Grid-restricted statistic of the empirical percentiles of `xs` against
/// `ys`, compared with the two-sample statistic of `(xs, ys)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub d_grid: f64,
    pub d_two: f64,
    /// `d_two - d_grid`.
    pub gap: f64,
    pub m: usize,
    pub n: usize,
}

impl BoundReport {
    pub fn from_statistics(d_grid: f64, d_two: f64, m: usize, n: usize) -> Self {
        Self {
            d_grid,
            d_two,
            gap: d_two - d_grid,
            m,
            n,
        }
    }

    /// `(lower, upper)` limits on `gap`: `-2/(n+1)` and `1/m + 2/(n+1)`.
    pub fn bracket(&self) -> (f64, f64) {
        let slack = 2.0 / (self.n + 1) as f64;
        (-slack, 1.0 / self.m as f64 + slack)
    }

    pub fn within_bracket(&self) -> bool {
        let (lo, hi) = self.bracket();
        self.gap >= lo - 1e-12 && self.gap <= hi + 1e-12
    }
}

pub fn bound_check(xs: &[f64], ys: &[f64]) -> Result<BoundReport, KsError> {
    if xs.is_empty() {
        return Err(KsError::Empty);
    }
    let reference = OrderedSample::new(ys.to_vec())?;
    let phat: Vec<f64> = estimate_batch(&reference, xs)?
        .iter()
        .map(|e| e.value)
        .collect();
    let d_grid = ks_grid_statistic(&phat)?.statistic;
    let d_two = ks_two_sample(xs, ys)?.statistic;
    Ok(BoundReport::from_statistics(
        d_grid,
        d_two,
        xs.len(),
        ys.len(),
    ))
}

//! The distribution of empirical percentiles for a fixed reference sample.
//!
//! Once the reference sample is fixed, `x -> p_hat(x)` is a deterministic
//! increasing map, so `p_hat(X)` has the CDF `F_tilde(u) = F(p_hat^{-1}(u))`
//! where `F` is the true CDF of `X`. The deviation of an ECDF of empirical
//! percentiles from the uniform CDF then splits into a sampling term and a
//! reference term:
//!
//! ```text
//! F_m - F_U = (F_m - F_tilde) + (F_tilde - F_U)
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::ks_stats::{ecdf_eval, KsError};
use crate::pit_core::{invert_percentile, OrderedSample, PitError};

/// Number of points in [`default_grid`].
pub const DEFAULT_GRID_POINTS: usize = 512;

/// A fully known data-generating distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrueDistribution {
    #[default]
    Normal,
    Uniform,
}

impl TrueDistribution {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            TrueDistribution::Normal => 0.5 * erfc(-x / std::f64::consts::SQRT_2),
            TrueDistribution::Uniform => x.clamp(0.0, 1.0),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            TrueDistribution::Normal => -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u),
            TrueDistribution::Uniform => u.clamp(0.0, 1.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TrueDistribution::Normal => rng.sample(StandardNormal),
            TrueDistribution::Uniform => rng.random::<f64>(),
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}

impl fmt::Display for TrueDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrueDistribution::Normal => f.write_str("normal"),
            TrueDistribution::Uniform => f.write_str("uniform"),
        }
    }
}

impl FromStr for TrueDistribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(TrueDistribution::Normal),
            "uniform" => Ok(TrueDistribution::Uniform),
            other => Err(format!(
                "unknown distribution `{other}` (expected normal or uniform)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InducedError {
    #[error(transparent)]
    Pit(#[from] PitError),
    #[error(transparent)]
    Ks(#[from] KsError),
    #[error("evaluation grid is not sorted at index {0}")]
    UnsortedGrid(usize),
}

/// `F_tilde(u) = P(p_hat(X) <= u)` for `X ~ dist` and the given reference.
pub fn induced_cdf(
    sample: &OrderedSample,
    dist: TrueDistribution,
    u: f64,
) -> Result<f64, PitError> {
    Ok(dist.cdf(invert_percentile(sample, u)?))
}

/// `DEFAULT_GRID_POINTS` equally spaced points in the open unit interval.
pub fn default_grid() -> Vec<f64> {
    let denom = (DEFAULT_GRID_POINTS + 1) as f64;
    (1..=DEFAULT_GRID_POINTS)
        .map(|i| i as f64 / denom)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecompositionResult {
    pub grid: Vec<f64>,
    /// `F_m - F_tilde`
    pub term_sampling: Vec<f64>,
    /// `F_tilde - F_U`
    pub term_reference: Vec<f64>,
    /// `F_m - F_U`
    pub total: Vec<f64>,
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

impl DecompositionResult {
    pub fn sup_sampling(&self) -> f64 {
        sup_abs(&self.term_sampling)
    }

    pub fn sup_reference(&self) -> f64 {
        sup_abs(&self.term_reference)
    }

    pub fn sup_total(&self) -> f64 {
        sup_abs(&self.total)
    }
}

pub fn decomposition_terms(
    sample: &OrderedSample,
    dist: TrueDistribution,
    phat_values: &[f64],
    grid: &[f64],
) -> Result<DecompositionResult, InducedError> {
    if let Some(i) = grid.windows(2).position(|w| w[0] > w[1]) {
        return Err(InducedError::UnsortedGrid(i + 1));
    }
    if grid.is_empty() {
        return Ok(DecompositionResult::default());
    }
    let mut sorted = phat_values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);

    let mut out = DecompositionResult {
        grid: grid.to_vec(),
        term_sampling: Vec::with_capacity(grid.len()),
        term_reference: Vec::with_capacity(grid.len()),
        total: Vec::with_capacity(grid.len()),
    };
    for &g in grid {
        let ecdf = ecdf_eval(&sorted, g)?;
        let induced = induced_cdf(sample, dist, g)?;
        out.term_sampling.push(ecdf - induced);
        out.term_reference.push(induced - g);
        out.total.push(ecdf - g);
    }
    Ok(out)
}

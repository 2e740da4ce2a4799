//! Empirical percentile estimation against a finite reference sample.
//!
//! A reference sample `y_(1) < ... < y_(n)` is assigned plotting positions
//! `i / (n + 1)`. Points inside `[y_(1), y_(n)]` are mapped by linear
//! interpolation between neighbouring plotting positions; points outside are
//! mapped by logistic tails that meet the end positions continuously.

use std::fmt;

use thiserror::Error;

/// Lower clamp applied to every estimate; the upper clamp is `1 - PIT_EPSILON`.
pub const PIT_EPSILON: f64 = 1e-12;

/// Residual tolerance (in probability space) accepted from tail inversion.
pub const INVERSION_TOLERANCE: f64 = 1e-10;

const MAX_BISECTION_STEPS: usize = 200;
const MAX_BRACKET_DOUBLINGS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PitError {
    #[error("reference sample too small: {len} value(s), need at least 2")]
    TooSmall { len: usize },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("tied reference values at {value}")]
    Tie { value: f64 },
    #[error("tail formula singular: boundary order statistic is zero")]
    TailSingular,
    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("tail map is not monotone for this sample; {0} cannot be inverted")]
    NotInvertible(f64),
    #[error("inversion failed to reach tolerance for {0}")]
    NoConvergence(f64),
    #[error("element {index}: {source}")]
    Element {
        index: usize,
        #[source]
        source: Box<PitError>,
    },
}

/// Reference sample held as ascending, tie-free order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedSample {
    values: Vec<f64>,
}

impl OrderedSample {
    /// Sorts `values` into order statistics.
    ///
    /// Exact ties are rejected: the interpolation divides by the gap between
    /// neighbouring order statistics.
    pub fn new(mut values: Vec<f64>) -> Result<Self, PitError> {
        if values.len() < 2 {
            return Err(PitError::TooSmall { len: values.len() });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(PitError::NonFinite { index, value });
        }
        values.sort_unstable_by(f64::total_cmp);
        if let Some(w) = values.windows(2).find(|w| w[0] == w[1]) {
            return Err(PitError::Tie { value: w[0] });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Plotting position of the `rank`-th order statistic (1-based).
    pub fn position(&self, rank: usize) -> f64 {
        rank as f64 / (self.len() + 1) as f64
    }

    pub fn plotting_positions(&self) -> PlottingPositions {
        PlottingPositions::for_size(self.len())
    }
}

/// Shorthand for [`OrderedSample::new`] that borrows its input.
pub fn sort_reference(values: &[f64]) -> Result<OrderedSample, PitError> {
    OrderedSample::new(values.to_vec())
}

/// The sequence `i / (n + 1)`, `i = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlottingPositions {
    positions: Vec<f64>,
}

impl PlottingPositions {
    fn for_size(n: usize) -> Self {
        let denom = (n + 1) as f64;
        Self {
            positions: (1..=n).map(|i| i as f64 / denom).collect(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

pub fn plotting_positions(n: usize) -> Result<PlottingPositions, PitError> {
    if n < 2 {
        return Err(PitError::TooSmall { len: n });
    }
    Ok(PlottingPositions::for_size(n))
}

/// Which branch of the estimator produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    LowerTail,
    /// Segment between order statistics `k` and `k + 1` (1-based).
    Interior(usize),
    UpperTail,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::LowerTail => f.write_str("lower-tail"),
            Region::Interior(k) => write!(f, "interior({k})"),
            Region::UpperTail => f.write_str("upper-tail"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitEstimate {
    pub value: f64,
    pub region: Region,
    /// Set when a tail branch is evaluated outside the sign regime in which
    /// it is monotone (`y_(1) > 0` below the sample, `y_(n) < 0` above it).
    pub monotonicity_warning: bool,
}

fn clamp_probability(p: f64) -> f64 {
    p.clamp(PIT_EPSILON, 1.0 - PIT_EPSILON)
}

/// `z / (1 + z)` with `z = exp(log_z)`, evaluated without overflow.
fn odds_to_probability(log_z: f64) -> f64 {
    1.0 / (1.0 + (-log_z).exp())
}

/// Logistic lower tail: `r^e / (1 + r^e)`, `r = p_1 / (1 - p_1)`, `e = x / y_(1)`.
fn lower_tail(sample: &OrderedSample, x: f64) -> f64 {
    let p1 = sample.position(1);
    let log_r = (p1 / (1.0 - p1)).ln();
    odds_to_probability(x / sample.min() * log_r)
}

/// Logistic upper tail: `1 - s^e / (1 + s^e)`, `s = (1 - p_n) / p_n`, `e = x / y_(n)`.
fn upper_tail(sample: &OrderedSample, x: f64) -> f64 {
    let pn = sample.position(sample.len());
    let log_s = ((1.0 - pn) / pn).ln();
    1.0 - odds_to_probability(x / sample.max() * log_s)
}

pub fn estimate_percentile(sample: &OrderedSample, x: f64) -> Result<PitEstimate, PitError> {
    if !x.is_finite() {
        return Err(PitError::NonFinite { index: 0, value: x });
    }
    let y = sample.values();
    let n = y.len();
    if x < sample.min() {
        if sample.min() == 0.0 {
            return Err(PitError::TailSingular);
        }
        return Ok(PitEstimate {
            value: clamp_probability(lower_tail(sample, x)),
            region: Region::LowerTail,
            monotonicity_warning: sample.min() > 0.0,
        });
    }
    if x > sample.max() {
        if sample.max() == 0.0 {
            return Err(PitError::TailSingular);
        }
        return Ok(PitEstimate {
            value: clamp_probability(upper_tail(sample, x)),
            region: Region::UpperTail,
            monotonicity_warning: sample.max() < 0.0,
        });
    }
    // Number of order statistics <= x, in 1..=n here.
    let below = y.partition_point(|&v| v <= x);
    let k = below.min(n - 1);
    let (lo, hi) = (y[k - 1], y[k]);
    let weight = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    let value = (k as f64 + weight) / (n + 1) as f64;
    Ok(PitEstimate {
        value: clamp_probability(value),
        region: Region::Interior(k),
        monotonicity_warning: false,
    })
}

pub fn estimate_batch(sample: &OrderedSample, xs: &[f64]) -> Result<Vec<PitEstimate>, PitError> {
    xs.iter()
        .enumerate()
        .map(|(index, &x)| {
            estimate_percentile(sample, x).map_err(|e| PitError::Element {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Returns `x` with `estimate_percentile(sample, x).value == u`.
///
/// Interior segments are inverted in closed form. Tails are bisected on a
/// bracket grown geometrically outward from the boundary order statistic.
pub fn invert_percentile(sample: &OrderedSample, u: f64) -> Result<f64, PitError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(PitError::ProbabilityOutOfRange(u));
    }
    let y = sample.values();
    let n = y.len();
    let first = sample.position(1);
    let last = sample.position(n);

    if u < first {
        if sample.min() == 0.0 {
            return Err(PitError::TailSingular);
        }
        if sample.min() > 0.0 {
            return Err(PitError::NotInvertible(u));
        }
        return bisect_tail(u, sample.min(), -1.0, |x| lower_tail(sample, x));
    }
    if u > last {
        if sample.max() == 0.0 {
            return Err(PitError::TailSingular);
        }
        if sample.max() < 0.0 {
            return Err(PitError::NotInvertible(u));
        }
        return bisect_tail(u, sample.max(), 1.0, |x| upper_tail(sample, x));
    }

    let scaled = u * (n + 1) as f64;
    let k = (scaled.floor() as usize).clamp(1, n - 1);
    let weight = (scaled - k as f64).clamp(0.0, 1.0);
    Ok(y[k - 1] + weight * (y[k] - y[k - 1]))
}

/// Bisection for an increasing tail map `f` on the side of `boundary`
/// indicated by `direction` (-1 below, +1 above).
fn bisect_tail(
    u: f64,
    boundary: f64,
    direction: f64,
    f: impl Fn(f64) -> f64,
) -> Result<f64, PitError> {
    let mut step = boundary.abs().max(1.0);
    let mut inner = boundary;
    let mut outer = boundary + direction * step;
    let beyond = |p: f64| if direction < 0.0 { p <= u } else { p >= u };
    let mut doublings = 0;
    while !beyond(f(outer)) {
        inner = outer;
        step *= 2.0;
        outer = boundary + direction * step;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS || !outer.is_finite() {
            return Err(PitError::NoConvergence(u));
        }
    }

    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (inner + outer);
        if mid == inner || mid == outer {
            break;
        }
        if beyond(f(mid)) {
            outer = mid;
        } else {
            inner = mid;
        }
    }
    let x = if (f(inner) - u).abs() <= (f(outer) - u).abs() {
        inner
    } else {
        outer
    };
    if (f(x) - u).abs() > INVERSION_TOLERANCE {
        return Err(PitError::NoConvergence(u));
    }
    Ok(x)
}

//! Distribution primitives for the reference models `F_0` (location) and
//! `F_1` (scale): density, distribution function, quantile, seeded sampling
//! and expectations by adaptive quadrature.
//!
//! Every family also exposes log-density and log-tail functions. The design
//! solver compares `nu * f(x)` against `theta_1 F(x) + theta_2 (1 - F(x))`
//! far out in the tails, where the plain values underflow.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A univariate reference distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DistributionModel {
    StandardNormal,
    ExponentialRate1,
    Uniform { a: f64, b: f64 },
    Tabulated(Tabulated),
}

/// Density given on a grid; the distribution function is the normalized
/// piecewise-linear interpolant of the trapezoid-integrated table, and the
/// density is its (piecewise-constant) derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabulatedTable", into = "TabulatedTable")]
pub struct Tabulated {
    xs: Vec<f64>,
    raw_pdf: Vec<f64>,
    cdf: Vec<f64>,
    density: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TabulatedTable {
    x: Vec<f64>,
    pdf: Vec<f64>,
}

impl TryFrom<TabulatedTable> for Tabulated {
    type Error = Error;

    fn try_from(t: TabulatedTable) -> Result<Self> {
        Tabulated::new(t.x, t.pdf)
    }
}

impl From<Tabulated> for TabulatedTable {
    fn from(t: Tabulated) -> Self {
        TabulatedTable {
            x: t.xs,
            pdf: t.raw_pdf,
        }
    }
}

impl Tabulated {
    pub fn new(xs: Vec<f64>, pdf: Vec<f64>) -> Result<Self> {
        if xs.len() != pdf.len() {
            return Err(Error::Shape {
                expected: xs.len(),
                actual: pdf.len(),
            });
        }
        if xs.len() < 2 {
            return Err(Error::InvalidParameter(
                "tabulated density needs at least two rows".into(),
            ));
        }
        if xs.iter().chain(&pdf).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "tabulated density contains a non-finite value".into(),
            ));
        }
        if let Some(i) = xs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(format!(
                "tabulated x must be strictly increasing (row {})",
                i + 2
            )));
        }
        if let Some(i) = pdf.iter().position(|p| *p < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tabulated pdf is negative at row {}",
                i + 1
            )));
        }
        let mut cdf = Vec::with_capacity(xs.len());
        cdf.push(0.0);
        for i in 0..xs.len() - 1 {
            let mass = 0.5 * (pdf[i] + pdf[i + 1]) * (xs[i + 1] - xs[i]);
            cdf.push(cdf[i] + mass);
        }
        let total = *cdf.last().unwrap();
        if total <= 0.0 {
            return Err(Error::InvalidParameter(
                "tabulated density has zero mass".into(),
            ));
        }
        for c in &mut cdf {
            *c /= total;
        }
        *cdf.last_mut().unwrap() = 1.0;
        let density = (0..xs.len() - 1)
            .map(|i| (cdf[i + 1] - cdf[i]) / (xs[i + 1] - xs[i]))
            .collect();
        Ok(Self {
            xs,
            raw_pdf: pdf,
            cdf,
            density,
        })
    }

    /// Parse a two-column `x,pdf` table. A single non-numeric header line is
    /// allowed.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut pdf = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let parsed = match (cols.next(), cols.next(), cols.next()) {
                (Some(a), Some(b), None) => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
                _ => None,
            };
            match parsed {
                Some((x, p)) => {
                    xs.push(x);
                    pdf.push(p);
                }
                None if i == 0 => continue,
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "line {}: expected two numeric columns x,pdf",
                        i + 1
                    )))
                }
            }
        }
        Self::new(xs, pdf)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    fn segment(&self, x: f64) -> Option<usize> {
        let n = self.xs.len();
        if x < self.xs[0] || x >= self.xs[n - 1] {
            return None;
        }
        Some(self.xs.partition_point(|v| *v <= x) - 1)
    }

    fn pdf(&self, x: f64) -> f64 {
        self.segment(x).map_or(0.0, |i| self.density[i])
    }

    fn cdf(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let i = self.segment(x).expect("interior point");
        self.cdf[i] + self.density[i] * (x - self.xs[i])
    }

    fn quantile(&self, p: f64) -> f64 {
        let n = self.xs.len();
        if p <= 0.0 {
            return self.xs[0];
        }
        if p >= 1.0 {
            return self.xs[n - 1];
        }
        // First segment whose upper cdf node reaches p and carries mass.
        let mut i = self.cdf.partition_point(|c| *c < p).max(1) - 1;
        while i < n - 2 && self.density[i] == 0.0 {
            i += 1;
        }
        if self.density[i] == 0.0 {
            return self.xs[i];
        }
        (self.xs[i] + (p - self.cdf[i]) / self.density[i]).clamp(self.xs[i], self.xs[i + 1])
    }

    fn quantile_table_valid(&self) -> bool {
        self.cdf.first() == Some(&0.0)
            && self.cdf.last() == Some(&1.0)
            && self.cdf.windows(2).all(|w| w[1] >= w[0])
    }
}

/// `ln(1 - exp(-a))` for `a > 0` without cancellation.
fn ln_one_minus_exp_neg(a: f64) -> f64 {
    if a <= LN_2 {
        (-(-a).exp_m1()).ln()
    } else {
        (-(-a).exp()).ln_1p()
    }
}

/// `ln(1 - Phi(x))` for the standard normal, accurate deep into the upper tail.
fn normal_ln_sf(x: f64) -> f64 {
    if x < 8.0 {
        return (0.5 * erfc(x * FRAC_1_SQRT_2)).ln();
    }
    // Mills ratio by backward continued fraction: R = 1/(x+1/(x+2/(x+...))).
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + k as f64 / tail;
    }
    -0.5 * x * x - LN_SQRT_2PI - tail.ln()
}

impl DistributionModel {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidParameter(format!(
                "uniform({a}, {b}) needs finite a < b"
            )));
        }
        Ok(Self::Uniform { a, b })
    }

    pub fn label(&self) -> String {
        match self {
            Self::StandardNormal => "standard-normal".into(),
            Self::ExponentialRate1 => "exponential-rate-1".into(),
            Self::Uniform { a, b } => format!("uniform({a},{b})"),
            Self::Tabulated(t) => format!("tabulated({} rows)", t.xs.len()),
        }
    }

    /// Closed support interval; endpoints may be infinite.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::StandardNormal => (f64::NEG_INFINITY, f64::INFINITY),
            Self::ExponentialRate1 => (0.0, f64::INFINITY),
            Self::Uniform { a, b } => (*a, *b),
            Self::Tabulated(t) => (t.xs[0], t.xs[t.xs.len() - 1]),
        }
    }

    /// Points where the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Tabulated(t) => t.xs.clone(),
            _ => Vec::new(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Self::StandardNormal => (-0.5 * x * x - LN_SQRT_2PI).exp(),
            Self::ExponentialRate1 => {
                if x < 0.0 {
                    0.0
                } else {
                    (-x).exp()
                }
            }
            Self::Uniform { a, b } => {
                if x < *a || x > *b {
                    0.0
                } else {
                    1.0 / (b - a)
                }
            }
            Self::Tabulated(t) => t.pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::StandardNormal => 0.5 * erfc(-x * FRAC_1_SQRT_2),
            Self::ExponentialRate1 => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x).exp_m1()
                }
            }
            Self::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Self::Tabulated(t) => t.cdf(x),
        }
    }

    /// Survival function `1 - F(x)`, computed without cancellation where the
    /// family allows it.
    pub fn sf(&self, x: f64) -> f64 {
        match self {
            Self::StandardNormal => 0.5 * erfc(x * FRAC_1_SQRT_2),
            Self::ExponentialRate1 => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-x).exp()
                }
            }
            _ => 1.0 - self.cdf(x),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Self::StandardNormal => -0.5 * x * x - LN_SQRT_2PI,
            Self::ExponentialRate1 => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -x
                }
            }
            _ => self.pdf(x).ln(),
        }
    }

    pub fn ln_cdf(&self, x: f64) -> f64 {
        match self {
            Self::StandardNormal => normal_ln_sf(-x),
            Self::ExponentialRate1 => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    ln_one_minus_exp_neg(x)
                }
            }
            _ => self.cdf(x).ln(),
        }
    }

    pub fn ln_sf(&self, x: f64) -> f64 {
        match self {
            Self::StandardNormal => normal_ln_sf(x),
            Self::ExponentialRate1 => {
                if x <= 0.0 {
                    0.0
                } else {
                    -x
                }
            }
            _ => self.sf(x).ln(),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Self::StandardNormal => {
                if p <= 0.0 {
                    f64::NEG_INFINITY
                } else if p >= 1.0 {
                    f64::INFINITY
                } else {
                    -SQRT_2 * erfc_inv(2.0 * p)
                }
            }
            Self::ExponentialRate1 => {
                if p <= 0.0 {
                    0.0
                } else if p >= 1.0 {
                    f64::INFINITY
                } else {
                    -(-p).ln_1p()
                }
            }
            Self::Uniform { a, b } => a + p.clamp(0.0, 1.0) * (b - a),
            Self::Tabulated(t) => t.quantile(p),
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// `n` i.i.d. draws; the same `(model, n, seed)` always yields the same
    /// vector.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = match self {
            Self::StandardNormal => (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
            Self::ExponentialRate1 => (0..n).map(|_| Exp1.sample(&mut rng)).collect(),
            Self::Uniform { a, b } => (0..n).map(|_| rng.random_range(*a..=*b)).collect(),
            Self::Tabulated(t) => {
                if !t.quantile_table_valid() {
                    return Err(Error::UnsupportedSampling(
                        "tabulated distribution has no valid quantile table".into(),
                    ));
                }
                (0..n).map(|_| t.quantile(rng.random::<f64>())).collect()
            }
        };
        Ok(draws)
    }

    /// `E[h(X)]` by adaptive quadrature against the density, splitting at the
    /// caller's breakpoints and at the density's own kinks.
    pub fn expect<H>(&self, h: H, breakpoints: &[f64], opts: &QuadOptions) -> Result<f64>
    where
        H: Fn(f64) -> f64,
    {
        let (lo, hi) = self.support();
        let mut cuts = self.breakpoints();
        cuts.extend_from_slice(breakpoints);
        if lo.is_infinite() && hi.is_infinite() && cuts.is_empty() {
            cuts.push(self.median());
        }
        let integrand = |x: f64| {
            let w = self.pdf(x);
            if w == 0.0 {
                0.0
            } else {
                h(x) * w
            }
        };
        integrate(integrand, lo, hi, &cuts, opts).map(|r| r.value)
    }

    /// Scale of the bulk of the distribution (interquartile range).
    pub fn spread(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }
}

/// Kolmogorov–Smirnov statistic of `sample` against `model`.
pub fn ks_statistic(model: &DistributionModel, sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = model.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

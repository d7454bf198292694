//! L-estimators `T_N = Σ a_n x_(n)` and their adversarial influence.
//!
//! While a perturbation keeps the sort order, `T_N` is linear in the data
//! with gradient `a` (permuted back to input order), so the AIF depends on
//! the weights alone.

use serde::{Deserialize, Serialize};

use crate::attack::{
    argmax_abs, attack_with_gradient, AifMethod, AifReport, AttackPlan, Diagnostic,
};
use crate::error::{Error, Result};
use crate::m_estimator::Estimator;
use crate::norm::NormOrder;
use crate::quad::{integrate, QuadOptions};

/// Where a weight vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum WeightSource {
    Explicit,
    FromH,
    AlphaTrimmed { alpha: f64 },
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LWeights {
    pub a: Vec<f64>,
    pub source: WeightSource,
}

impl LWeights {
    pub fn explicit(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::DegenerateWeights("weight vector is empty".into()));
        }
        if let Some(i) = a.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateWeights(format!(
                "a[{i}] = {} is not finite",
                a[i]
            )));
        }
        Ok(Self {
            a,
            source: WeightSource::Explicit,
        })
    }

    /// Equal weights `1/N` (the sample mean).
    pub fn mean(n: usize) -> Result<Self> {
        weights_from_h(|_| 1.0, n)
    }

    /// Point mass at the middle order statistic; split evenly between the
    /// two middle ones when `N` is even.
    pub fn median(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::DegenerateWeights("N must be at least 1".into()));
        }
        let mut a = vec![0.0; n];
        if n % 2 == 1 {
            a[n / 2] = 1.0;
        } else {
            a[n / 2 - 1] = 0.5;
            a[n / 2] = 0.5;
        }
        Ok(Self {
            a,
            source: WeightSource::Median,
        })
    }

    /// Average of the middle `N - 2⌊αN⌋` order statistics.
    pub fn alpha_trimmed(alpha: f64, n: usize) -> Result<Self> {
        if !(0.0..0.5).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "trimming fraction must satisfy 0 <= alpha < 0.5 (got {alpha})"
            )));
        }
        if n == 0 {
            return Err(Error::DegenerateWeights("N must be at least 1".into()));
        }
        // Guard against αN landing a hair below an integer in floating point.
        let k = (alpha * n as f64 * (1.0 + 1e-12)).floor() as usize;
        if 2 * k >= n {
            return Err(Error::DegenerateWeights(format!(
                "trimming {k} points from each end of N = {n} leaves nothing"
            )));
        }
        let kept = (n - 2 * k) as f64;
        let a = (0..n)
            .map(|i| if i >= k && i < n - k { 1.0 / kept } else { 0.0 })
            .collect();
        Ok(Self {
            a,
            source: WeightSource::AlphaTrimmed { alpha },
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Parse one weight per line, with an optional header on the first line.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut a = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let field = line.split(',').next().unwrap_or("").trim();
            if field.is_empty() {
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) => a.push(v),
                Err(_) if i == 0 => {}
                Err(_) => {
                    return Err(Error::InvalidParameter(format!(
                        "line {}: cannot parse weight {field:?}",
                        i + 1
                    )))
                }
            }
        }
        Self::explicit(a)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("a\n");
        for v in &self.a {
            out.push_str(&format!("{v:?}\n"));
        }
        out
    }

    /// `∂T_N/∂x_n` in input order, valid while the sort order is preserved.
    pub fn gradient(&self, data: &[f64]) -> Result<Vec<f64>> {
        self.check_len(data)?;
        let mut c = vec![0.0; data.len()];
        for (rank, idx) in argsort(data).into_iter().enumerate() {
            c[idx] = self.a[rank];
        }
        Ok(c)
    }

    fn check_len(&self, data: &[f64]) -> Result<()> {
        if data.len() != self.a.len() {
            return Err(Error::Shape {
                expected: self.a.len(),
                actual: data.len(),
            });
        }
        Ok(())
    }
}

impl Estimator for LWeights {
    fn estimate(&self, data: &[f64]) -> Result<f64> {
        l_estimate(self, data)
    }
}

/// Stable ascending order; ties keep input order.
fn argsort(data: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&i, &j| data[i].total_cmp(&data[j]));
    idx
}

/// `a_n = ∫_{(n-1)/N}^{n/N} h / ∫_0^1 h`.
pub fn weights_from_h<H: Fn(f64) -> f64>(h: H, n: usize) -> Result<LWeights> {
    if n == 0 {
        return Err(Error::DegenerateWeights("N must be at least 1".into()));
    }
    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        ..QuadOptions::default()
    };
    let panels = (0..n)
        .map(|i| {
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            integrate(&h, lo, hi, &[], &opts).map(|r| r.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = panels.iter().sum();
    let mass: f64 = panels.iter().map(|v| v.abs()).sum();
    if total == 0.0 || total.abs() <= 1e-12 * mass || !total.is_finite() {
        return Err(Error::DegenerateWeights(format!(
            "h integrates to {total:e} over [0, 1]; weights cannot be normalised"
        )));
    }
    Ok(LWeights {
        a: panels.into_iter().map(|v| v / total).collect(),
        source: WeightSource::FromH,
    })
}

/// `Σ a_n x_(n)`.
pub fn l_estimate(w: &LWeights, data: &[f64]) -> Result<f64> {
    w.check_len(data)?;
    Ok(argsort(data)
        .into_iter()
        .zip(&w.a)
        .map(|(i, a)| a * data[i])
        .sum())
}

/// Fixed-sample AIF of an L-estimator.
///
/// `p = 1`: `N max|a_n|`; `1 < p < ∞`: `Σ|a|^q / ((1/N) Σ|a|^q)^{1/p}` with
/// `q = p/(p-1)`; `p = ∞`: `Σ|a_n|`.
pub fn l_aif(w: &LWeights, p: NormOrder) -> Result<AifReport> {
    let n = w.a.len();
    let (star, ties) = argmax_abs(&w.a);
    let m = w.a.get(star).map_or(0.0, |v| v.abs());
    if m == 0.0 {
        return Err(Error::DegenerateWeights("all weights are zero".into()));
    }
    let nf = n as f64;
    if let WeightSource::AlphaTrimmed { .. } = w.source {
        // Equal weights on the kept points: N^{1/p} / kept^{1/p}.
        let kept = w.a.iter().filter(|v| **v != 0.0).count() as f64;
        let value = match p {
            NormOrder::One => nf / kept,
            NormOrder::Finite(p) => nf.powf(1.0 / p) / kept.powf(1.0 / p),
            NormOrder::Infinity => 1.0,
        };
        return Ok(AifReport::new(value, AifMethod::ClosedForm)
            .with("n", Diagnostic::Index(n))
            .with("kept", Diagnostic::Index(kept as usize))
            .with("p", Diagnostic::Text(p.to_string())));
    }
    let value = match p {
        NormOrder::One => nf * m,
        NormOrder::Finite(p) => {
            let q = p / (p - 1.0);
            // Σ|a|^q = m^q S with S = Σ(|a|/m)^q, so the ratio is
            // m^{q(1 - 1/p)} S^{1 - 1/p} N^{1/p} and m^{q(1-1/p)} = m.
            let s: f64 = w.a.iter().map(|v| (v.abs() / m).powf(q)).sum();
            m * s / (s / nf).powf(1.0 / p)
        }
        NormOrder::Infinity => w.a.iter().map(|v| v.abs()).sum(),
    };
    let mut report = AifReport::new(value, AifMethod::ClosedForm)
        .with("n", Diagnostic::Index(n))
        .with("p", Diagnostic::Text(p.to_string()));
    if p == NormOrder::One {
        report = report
            .with("argmax_index", Diagnostic::Index(star))
            .with("argmax_ties", Diagnostic::Index(ties));
    }
    Ok(report)
}

/// Largest η for which every feasible perturbation keeps the sort order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingThreshold {
    pub eta: f64,
    pub all_equal: bool,
}

/// `η* = min gap / (2 N^{1/p})`.
pub fn ordering_safety_threshold(data: &[f64], p: NormOrder) -> Result<OrderingThreshold> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("data must be nonempty".into()));
    }
    let mut s = data.to_vec();
    s.sort_by(f64::total_cmp);
    let gap = s
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !gap.is_finite() {
        return Ok(OrderingThreshold {
            eta: 0.0,
            all_equal: true,
        });
    }
    Ok(OrderingThreshold {
        eta: gap / (2.0 * p.single_coordinate_reach(data.len())),
        all_equal: false,
    })
}

/// First-order optimal attack on an L-estimator.
pub fn l_attack(w: &LWeights, data: &[f64], eta: f64, p: NormOrder) -> Result<AttackPlan> {
    let c = w.gradient(data)?;
    let base = l_estimate(w, data)?;
    attack_with_gradient(w, data, base, &c, eta, p)
}

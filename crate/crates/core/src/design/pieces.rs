//! Piecewise ψ′ built from `{1, x, eˣ, F/f, (1 - F)/f}` terms.

use serde::{Deserialize, Serialize};

use crate::distributions::DistributionModel;
use crate::quad::{integrate, QuadOptions};

/// JSON has no infinities, so non-finite values travel as `"inf"`, `"-inf"`
/// or `"nan"`.
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

/// `g(x) = constant + linear·x + exponential·eˣ - ϑ₁ F(x)/f(x) - ϑ₂ (1 - F(x))/f(x)`
/// on `[lo, hi)`, with the ratio weights stored as logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    #[serde(with = "extended_f64")]
    pub lo: f64,
    #[serde(with = "extended_f64")]
    pub hi: f64,
    pub constant: f64,
    pub linear: f64,
    pub exponential: f64,
    pub ln_cdf_ratio: Option<f64>,
    pub ln_sf_ratio: Option<f64>,
    /// Clamp `g` at zero (tradeoff designs).
    pub nonnegative: bool,
}

impl Piece {
    pub fn polynomial(lo: f64, hi: f64, constant: f64, linear: f64) -> Self {
        Self {
            lo,
            hi,
            constant,
            linear,
            exponential: 0.0,
            ln_cdf_ratio: None,
            ln_sf_ratio: None,
            nonnegative: false,
        }
    }

    pub fn has_ratio(&self) -> bool {
        self.ln_cdf_ratio.is_some() || self.ln_sf_ratio.is_some()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }

    pub fn eval(&self, x: f64, model: Option<&DistributionModel>) -> f64 {
        let mut v = self.constant;
        if self.linear != 0.0 {
            v += self.linear * x;
        }
        if self.exponential != 0.0 {
            v += self.exponential * x.exp();
        }
        if self.has_ratio() {
            let m = model.expect("ratio terms need the design's distribution");
            let lf = m.ln_pdf(x);
            if let Some(w) = self.ln_cdf_ratio {
                v -= (w + m.ln_cdf(x) - lf).exp();
            }
            if let Some(w) = self.ln_sf_ratio {
                v -= (w + m.ln_sf(x) - lf).exp();
            }
        }
        if self.nonnegative {
            v.max(0.0)
        } else {
            v
        }
    }

    /// `∫_a^b g` for the polynomial and exponential terms; `a <= b` inside
    /// the piece, either end possibly infinite.
    pub fn closed_integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        if self.constant != 0.0 {
            total += self.constant * (b - a);
        }
        if self.linear != 0.0 {
            total += self.linear * 0.5 * (b * b - a * a);
        }
        if self.exponential != 0.0 {
            total += self.exponential * (b.exp() - a.exp());
        }
        if total.is_nan() {
            // ∞ - ∞ from a doubly unbounded even term, e.g. ∫ x over ℝ.
            0.0
        } else {
            total
        }
    }
}

/// Cumulative integrals of a ratio piece on a fixed node grid so that
/// `∫_lo^x g` costs one short adaptive integral.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Table {
    nodes: Vec<f64>,
    cum: Vec<f64>,
}

pub(crate) const TABLE_NODES: usize = 64;

pub(crate) fn fine_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        max_subdivisions: 4000,
    }
}

impl Table {
    pub(crate) fn build(piece: &Piece, model: Option<&DistributionModel>) -> Option<Self> {
        if !piece.has_ratio() || !piece.lo.is_finite() || !piece.hi.is_finite() {
            return None;
        }
        let k = TABLE_NODES;
        let nodes: Vec<f64> = (0..=k)
            .map(|i| piece.lo + (piece.hi - piece.lo) * i as f64 / k as f64)
            .collect();
        let mut cum = vec![0.0; k + 1];
        for i in 0..k {
            let part = integrate(
                |x| piece.eval(x, model),
                nodes[i],
                nodes[i + 1],
                &[],
                &fine_opts(),
            )
            .map(|r| r.value)
            .unwrap_or(f64::NAN);
            cum[i + 1] = cum[i] + part;
        }
        Some(Self { nodes, cum })
    }

    /// `∫_lo^x g` for `lo <= x <= hi`.
    pub(crate) fn integral_to(
        &self,
        piece: &Piece,
        model: Option<&DistributionModel>,
        x: f64,
    ) -> f64 {
        let k = self.nodes.len() - 1;
        let w = (piece.hi - piece.lo) / k as f64;
        let i = (((x - piece.lo) / w).floor().max(0.0) as usize).min(k);
        let i = if i > 0 && self.nodes[i] > x { i - 1 } else { i };
        if x == self.nodes[i] {
            return self.cum[i];
        }
        let part = integrate(
            |t| piece.eval(t, model),
            self.nodes[i],
            x,
            &[],
            &fine_opts(),
        )
        .map(|r| r.value)
        .unwrap_or(f64::NAN);
        self.cum[i] + part
    }
}

//! Optimal ψ designs: minimum-AIF estimators and AIF-vs-IF tradeoffs.
//!
//! A design is a piecewise ψ′ (see [`Piece`]) plus an anchor value of ψ, so
//! that `ψ(x) = ψ(anchor) + ∫_anchor^x ψ′`.

mod exponential;
mod pieces;
mod solver;

use std::fmt;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DistributionModel;
use crate::error::{Error, Result};
use crate::m_estimator::{Profile, PsiSpec};
use crate::norm::NormOrder;
use crate::population::{aif_population, gross_error_sensitivity, PopulationContext};
use crate::quad::{integrate, QuadOptions};

pub use pieces::{extended_f64, Piece};
use pieces::{fine_opts, Table};
use solver::{Basis, Problem};

/// Tolerance of the KKT and Fisher residual checks.
pub const KKT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    Location,
    Scale,
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DesignKind::Location => "location",
            DesignKind::Scale => "scale",
        })
    }
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "location" => Ok(DesignKind::Location),
            "scale" => Ok(DesignKind::Scale),
            other => Err(Error::InvalidParameter(format!(
                "unknown design kind {other:?} (expected location or scale)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    MinAif,
    Tradeoff,
    ExponentialClosedForm,
}

/// `ν*, ϑ₁*, ϑ₂*`. The logs are kept because ϑ can underflow for wide budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktMultipliers {
    pub nu: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub ln_theta1: Option<f64>,
    pub ln_theta2: Option<f64>,
}

impl KktMultipliers {
    fn plain(nu: f64, theta1: f64, theta2: f64) -> Self {
        let ln = |t: f64| (t > 0.0).then(|| t.ln());
        Self {
            nu,
            theta1,
            theta2,
            ln_theta1: ln(theta1),
            ln_theta2: ln(theta2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "extended_f64")]
    pub lo: f64,
    #[serde(with = "extended_f64")]
    pub hi: f64,
}

/// `ψ(x) = psi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub x: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    /// `½ E[ψ′²]` under the normalization.
    pub objective: f64,
    /// Population AIF at p = 2.
    pub aif: f64,
    #[serde(with = "extended_f64")]
    pub gamma_star: f64,
    /// `∫ ψ′ F`, which is `ψ(+∞)` when Fisher consistent.
    #[serde(with = "extended_f64")]
    pub upper_if: f64,
    /// `∫ ψ′ (1 - F)`, which is `-ψ(-∞)`.
    #[serde(with = "extended_f64")]
    pub lower_if: f64,
    /// Active constraints `(∫ψ′F ≤ ξ, ∫ψ′(1-F) ≤ ξ)`.
    pub active: (bool, bool),
    /// `min(F(l), 1 - F(r))` for the active region `[l, r]` when both tails are trimmed.
    pub tail_epsilon: Option<f64>,
    pub ln_tail_epsilon: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignedPsi {
    pub kind: DesignKind,
    pub construction: Construction,
    /// Distribution the design is optimal for; `None` for the min-AIF
    /// location design, which is optimal under every model.
    pub model: Option<DistributionModel>,
    pub xi: Option<f64>,
    pub multipliers: KktMultipliers,
    pub active_region: Vec<Interval>,
    pub pieces: Vec<Piece>,
    pub anchor: Anchor,
    /// `ψ` at the lower end of the support.
    #[serde(with = "extended_f64")]
    pub psi_neg_inf: f64,
    pub summary: DesignSummary,
    #[serde(skip)]
    tables: OnceLock<Vec<Option<Table>>>,
}

impl PartialEq for DesignedPsi {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.construction == other.construction
            && self.model == other.model
            && self.xi == other.xi
            && self.multipliers == other.multipliers
            && self.active_region == other.active_region
            && self.pieces == other.pieces
            && self.anchor == other.anchor
            && self.psi_neg_inf.to_bits() == other.psi_neg_inf.to_bits()
            && self.summary == other.summary
    }
}

impl DesignedPsi {
    fn tables(&self) -> &[Option<Table>] {
        self.tables.get_or_init(|| {
            self.pieces
                .iter()
                .map(|p| Table::build(p, self.model.as_ref()))
                .collect()
        })
    }

    pub fn gprime(&self, x: f64) -> f64 {
        self.pieces
            .iter()
            .find(|p| p.contains(x))
            .map_or(0.0, |p| p.eval(x, self.model.as_ref()))
    }

    /// `∫_u^v ψ′` for `u <= v`.
    fn integral(&self, u: f64, v: f64) -> f64 {
        let tables = self.tables();
        let mut total = 0.0;
        for (piece, table) in self.pieces.iter().zip(tables) {
            let a = u.max(piece.lo);
            let b = v.min(piece.hi);
            if a >= b {
                continue;
            }
            total += match table {
                Some(t) => {
                    t.integral_to(piece, self.model.as_ref(), b)
                        - t.integral_to(piece, self.model.as_ref(), a)
                }
                None if piece.has_ratio() => integrate(
                    |x| piece.eval(x, self.model.as_ref()),
                    a,
                    b,
                    &[],
                    &fine_opts(),
                )
                .map(|r| r.value)
                .unwrap_or(f64::NAN),
                None => piece.closed_integral(a, b),
            };
        }
        total
    }

    pub fn psi(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        let a = self.anchor.x;
        if x >= a {
            self.anchor.psi + self.integral(a, x)
        } else {
            self.anchor.psi - self.integral(x, a)
        }
    }

    /// Finite piece ends, where ψ′ may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .pieces
            .iter()
            .flat_map(|p| [p.lo, p.hi])
            .filter(|v| v.is_finite())
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn panel_cuts(&self) -> Vec<f64> {
        let mut c = Vec::new();
        for p in &self.pieces {
            if p.lo.is_finite() && p.hi.is_finite() {
                c.extend((0..=32).map(|i| p.lo + (p.hi - p.lo) * i as f64 / 32.0));
            }
        }
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    }

    pub fn label(&self) -> String {
        match (self.construction, self.xi) {
            (Construction::MinAif, _) => format!("designed-min-aif-{}", self.kind),
            (_, Some(xi)) => format!("designed-tradeoff-{}(xi={xi})", self.kind),
            (_, None) => format!("designed-{}", self.kind),
        }
    }

    /// An estimator running this ψ (`ψ(x - θ)` or `ψ(x/θ)`).
    pub fn to_psi_spec(&self) -> PsiSpec {
        let profile: Arc<dyn Profile> = Arc::new(self.clone());
        match self.kind {
            DesignKind::Location => PsiSpec::location(self.label(), profile),
            DesignKind::Scale => PsiSpec::scale(self.label(), profile),
        }
    }

    /// `n` evenly spaced `(x, ψ(x))` points on `[lo, hi]`.
    pub fn sample_curve(&self, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                (x, self.psi(x))
            })
            .collect()
    }

    /// A plotting window: the active region padded by a quarter of its width,
    /// clipped to the support.
    pub fn plot_range(&self) -> (f64, f64) {
        let model = self
            .model
            .clone()
            .unwrap_or(DistributionModel::StandardNormal);
        let (slo, shi) = model.support();
        let mut lo = self.active_region.first().map_or(f64::NAN, |r| r.lo);
        let mut hi = self.active_region.last().map_or(f64::NAN, |r| r.hi);
        if !lo.is_finite() {
            lo = model.quantile(0.001);
        }
        if !hi.is_finite() {
            hi = model.quantile(0.999);
        }
        let pad = 0.25 * (hi - lo).max(1e-3);
        ((lo - pad).max(slo), (hi + pad).min(shi))
    }

    /// Residual checks under the design's own model (standard normal for
    /// the model-free min-AIF location design).
    pub fn kkt_report(&self) -> Result<KktReport> {
        let model = self
            .model
            .clone()
            .unwrap_or(DistributionModel::StandardNormal);
        self.kkt_report_under(&model)
    }

    pub fn kkt_report_under(&self, model: &DistributionModel) -> Result<KktReport> {
        let opts = QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_subdivisions: 4000,
        };
        // Panel splits keep the error estimate honest where ψ′ drops steeply
        // at the ends of a long flat stretch.
        let mut cuts = self.panel_cuts();
        cuts.extend(model.breakpoints());
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let b = |x: f64| match self.kind {
            DesignKind::Location => 1.0,
            DesignKind::Scale => x,
        };
        let normalization = model.expect(|x| b(x) * self.gprime(x), &cuts, &opts)? - 1.0;

        let over_pieces = |w: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> Result<f64> {
            let mut total = 0.0;
            for p in &self.pieces {
                let a = p.lo.max(lo);
                let c = p.hi.min(hi);
                if a < c {
                    total += integrate(|x| self.gprime(x) * w(x), a, c, &cuts, &opts)?.value;
                }
            }
            Ok(total)
        };
        let (slo, shi) = model.support();
        // Without a budget the tail integrals are unconstrained and may diverge.
        let (upper, lower) = match self.xi {
            Some(_) => (
                over_pieces(&|x| model.cdf(x), slo, shi)?,
                over_pieces(&|x| model.sf(x), slo, shi)?,
            ),
            None => (f64::NAN, f64::NAN),
        };

        let (upper_slack, lower_slack) = match self.xi {
            Some(xi) => (
                self.multipliers.theta1 * (xi - upper),
                self.multipliers.theta2 * (xi - lower),
            ),
            None => (0.0, 0.0),
        };
        let (upper_excess, lower_excess) = match self.xi {
            Some(xi) => (upper - xi, lower - xi),
            None => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        };

        // ψ′ on a grid over the support and just outside every piece.
        let mut probe: Vec<f64> = (1..400).map(|i| model.quantile(i as f64 / 400.0)).collect();
        for p in &self.pieces {
            for e in [p.lo, p.hi] {
                if e.is_finite() {
                    probe.push(e);
                    probe.push(e - 1e-9 * e.abs().max(1.0));
                    probe.push(e + 1e-9 * e.abs().max(1.0));
                }
            }
        }
        let min_gprime = probe
            .iter()
            .map(|&x| self.gprime(x))
            .fold(f64::INFINITY, f64::min);
        let outside_region_zero = probe.iter().all(|&x| {
            let inside = self.active_region.iter().any(|r| x >= r.lo && x < r.hi);
            inside || self.gprime(x) == 0.0
        });

        let fisher_direct = model.expect(|x| self.psi(x), &cuts, &opts)?;
        let r = model.median().clamp(slo, shi);
        let fisher_identity = self.psi(r) + over_pieces(&|x| model.sf(x), r, shi)?
            - over_pieces(&|x| model.cdf(x), slo, r)?;

        Ok(KktReport {
            normalization,
            upper_if: upper,
            lower_if: lower,
            upper_slack,
            lower_slack,
            upper_excess,
            lower_excess,
            min_gprime,
            nonnegativity_required: self.construction != Construction::MinAif,
            outside_region_zero,
            fisher_direct,
            fisher_identity,
        })
    }
}

impl Profile for DesignedPsi {
    fn value(&self, u: f64) -> f64 {
        self.psi(u)
    }

    fn derivative(&self, u: f64) -> f64 {
        self.gprime(u)
    }

    /// Piece ends plus interior panel splits, so that quadrature over a
    /// long flat stretch still sees the steep ends.
    fn breakpoints(&self) -> Vec<f64> {
        self.panel_cuts()
    }

    /// ψ′ only changes sign at 0 (min-AIF scale), so ψ is monotone between
    /// the ends and 0.
    fn sup_abs_on(&self, lo: f64, hi: f64) -> Option<f64> {
        let mut best = self.psi(lo).abs().max(self.psi(hi).abs());
        if lo < 0.0 && hi > 0.0 {
            best = best.max(self.psi(0.0).abs());
        }
        Some(best)
    }

    fn sup_abs_derivative_on(&self, lo: f64, hi: f64) -> Option<f64> {
        if self.construction != Construction::MinAif {
            return None;
        }
        let piece = self.pieces.first()?;
        Some(
            (piece.constant + piece.linear * lo)
                .abs()
                .max((piece.constant + piece.linear * hi).abs()),
        )
    }
}

/// Residuals of the optimality and consistency conditions of a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `E[b(X) ψ′(X)] - 1`.
    pub normalization: f64,
    #[serde(with = "extended_f64")]
    pub upper_if: f64,
    #[serde(with = "extended_f64")]
    pub lower_if: f64,
    /// `ϑ₁ (ξ - ∫ψ′F)`.
    pub upper_slack: f64,
    /// `ϑ₂ (ξ - ∫ψ′(1-F))`.
    pub lower_slack: f64,
    #[serde(with = "extended_f64")]
    pub upper_excess: f64,
    #[serde(with = "extended_f64")]
    pub lower_excess: f64,
    pub min_gprime: f64,
    pub nonnegativity_required: bool,
    pub outside_region_zero: bool,
    /// `E[ψ(X)]` by quadrature of ψ.
    pub fisher_direct: f64,
    /// `E[ψ(X)]` as `ψ(r) + ∫_r ψ′(1-F) - ∫^r ψ′F`.
    pub fisher_identity: f64,
}

impl KktReport {
    /// Names of the failed checks at tolerance `tol`.
    pub fn failures(&self, tol: f64) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.normalization.abs() > tol {
            out.push("normalization");
        }
        if self.upper_slack.abs() > tol || self.lower_slack.abs() > tol {
            out.push("complementary-slackness");
        }
        if self.upper_excess > tol || self.lower_excess > tol {
            out.push("feasibility");
        }
        if self.nonnegativity_required && self.min_gprime < -1e-12 {
            out.push("nonnegativity");
        }
        if !self.outside_region_zero {
            out.push("zero-outside-active-region");
        }
        if self.fisher_direct.abs() > tol || self.fisher_identity.abs() > tol {
            out.push("fisher-consistency");
        }
        if (self.fisher_direct - self.fisher_identity).abs() > 1e-8 {
            out.push("fisher-evaluation-orders");
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.failures(KKT_TOLERANCE).is_empty()
    }
}

/// ψ(x) = x: the sample mean, AIF = 1 under every model and p.
pub fn min_aif_location() -> DesignedPsi {
    let piece = Piece::polynomial(f64::NEG_INFINITY, f64::INFINITY, 1.0, 0.0);
    DesignedPsi {
        kind: DesignKind::Location,
        construction: Construction::MinAif,
        model: None,
        xi: None,
        multipliers: KktMultipliers::plain(1.0, 0.0, 0.0),
        active_region: vec![Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }],
        pieces: vec![piece],
        anchor: Anchor { x: 0.0, psi: 0.0 },
        psi_neg_inf: f64::NEG_INFINITY,
        summary: DesignSummary {
            objective: 0.5,
            aif: 1.0,
            gamma_star: f64::INFINITY,
            upper_if: f64::INFINITY,
            lower_if: f64::INFINITY,
            active: (false, false),
            tail_epsilon: None,
            ln_tail_epsilon: None,
            iterations: 0,
        },
        tables: OnceLock::new(),
    }
}

/// `ψ′(x) = x / E[X²]` on the support, anchored so that `E[ψ] = 0`; the
/// minimum AIF is `1/√E[X²]`.
pub fn min_aif_scale(model: &DistributionModel) -> Result<DesignedPsi> {
    let m = model.expect(|x| x * x, &model.breakpoints(), &fine_opts())?;
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::Degenerate(format!(
            "E[X^2] = {m} under {}; the scale design needs a finite positive second moment",
            model.label()
        )));
    }
    let (lo, hi) = model.support();
    let r = 0.0f64.clamp(lo, hi);
    let psi_at = |x: f64| (x * x - m) / (2.0 * m);
    let mut design = DesignedPsi {
        kind: DesignKind::Scale,
        construction: Construction::MinAif,
        model: Some(model.clone()),
        xi: None,
        multipliers: KktMultipliers::plain(1.0 / m, 0.0, 0.0),
        active_region: vec![Interval { lo, hi }],
        pieces: vec![Piece::polynomial(lo, hi, 0.0, 1.0 / m)],
        anchor: Anchor {
            x: r,
            psi: psi_at(r),
        },
        psi_neg_inf: psi_at(lo),
        summary: DesignSummary {
            objective: 0.5 / m,
            aif: 1.0 / m.sqrt(),
            gamma_star: f64::NAN,
            upper_if: f64::NAN,
            lower_if: f64::NAN,
            active: (false, false),
            tail_epsilon: None,
            ln_tail_epsilon: None,
            iterations: 0,
        },
        tables: OnceLock::new(),
    };
    let sup = design.sup_abs_on(lo, hi).unwrap_or(f64::INFINITY);
    design.summary.gamma_star = sup;
    design.summary.upper_if = psi_at(hi);
    design.summary.lower_if = -psi_at(lo);
    Ok(design)
}

/// Budgets above this value admit a design with `γ* ≤ ξ`.
pub fn smallest_feasible_xi(model: &DistributionModel, kind: DesignKind) -> f64 {
    solver::smallest_feasible(model, basis(kind))
}

fn basis(kind: DesignKind) -> Basis {
    match kind {
        DesignKind::Location => Basis::One,
        DesignKind::Scale => Basis::X,
    }
}

fn tradeoff(model: &DistributionModel, xi: f64, kind: DesignKind) -> Result<DesignedPsi> {
    if !(xi.is_finite() && xi > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "the IF budget xi must be finite and positive (got {xi})"
        )));
    }
    let smallest = smallest_feasible_xi(model, kind);
    let infeasible = Error::InfeasibleBudget {
        xi,
        smallest_feasible: smallest,
    };
    if xi <= smallest * (1.0 + 1e-9) {
        return Err(infeasible);
    }
    let problem = Problem::new(model, basis(kind), xi);
    let (sol, active) = problem.solve().ok_or(infeasible)?;
    let p = sol.params;
    let e = &sol.eval;
    let (constant, linear) = match kind {
        DesignKind::Location => (p.nu, 0.0),
        DesignKind::Scale => (0.0, p.nu),
    };
    let pieces: Vec<Piece> = e
        .region
        .iter()
        .map(|&(lo, hi)| Piece {
            lo,
            hi,
            constant,
            linear,
            exponential: 0.0,
            ln_cdf_ratio: p.s1,
            ln_sf_ratio: p.s2,
            nonnegative: true,
        })
        .collect();
    let active_region: Vec<Interval> = e
        .region
        .iter()
        .map(|&(lo, hi)| Interval { lo, hi })
        .collect();
    let (l, r) = (
        active_region.first().map_or(f64::NAN, |i| i.lo),
        active_region.last().map_or(f64::NAN, |i| i.hi),
    );
    let (tail_epsilon, ln_tail_epsilon) = if p.s1.is_some() && p.s2.is_some() {
        let ln = model.ln_cdf(l).min(model.ln_sf(r));
        (Some(ln.exp()), Some(ln))
    } else {
        (None, None)
    };
    let multipliers = KktMultipliers {
        nu: p.nu,
        theta1: p.s1.map_or(0.0, f64::exp),
        theta2: p.s2.map_or(0.0, f64::exp),
        ln_theta1: p.s1,
        ln_theta2: p.s2,
    };
    Ok(DesignedPsi {
        kind,
        construction: Construction::Tradeoff,
        model: Some(model.clone()),
        xi: Some(xi),
        multipliers,
        active_region,
        pieces,
        anchor: Anchor {
            x: l,
            psi: -e.lower,
        },
        psi_neg_inf: -e.lower,
        summary: DesignSummary {
            objective: e.objective,
            aif: (2.0 * e.objective).sqrt(),
            gamma_star: e.upper.max(e.lower),
            upper_if: e.upper,
            lower_if: e.lower,
            active,
            tail_epsilon,
            ln_tail_epsilon,
            iterations: sol.iterations,
        },
        tables: OnceLock::new(),
    })
}

/// Location ψ minimising the p = 2 AIF subject to `γ* ≤ ξ` and `ψ′ ≥ 0`.
pub fn tradeoff_location(model: &DistributionModel, xi: f64) -> Result<DesignedPsi> {
    tradeoff(model, xi, DesignKind::Location)
}

/// Scale ψ minimising the p = 2 AIF subject to `γ* ≤ ξ` and `ψ′ ≥ 0`.
pub fn tradeoff_scale(model: &DistributionModel, xi: f64) -> Result<DesignedPsi> {
    tradeoff(model, xi, DesignKind::Scale)
}

/// Closed-form location tradeoff under `F(x) = 1 - e^{-x}` for `ξ > 1`:
/// `ψ′ = ν + ϑ₁ - ϑ₁eˣ` on `[0, a)` and 0 elsewhere.
pub fn exponential_tradeoff(xi: f64) -> Result<DesignedPsi> {
    let (a, nu, theta1) = exponential::multipliers(xi)?;
    let model = DistributionModel::ExponentialRate1;
    let piece = Piece {
        lo: 0.0,
        hi: a,
        constant: nu + theta1,
        linear: 0.0,
        exponential: -theta1,
        ln_cdf_ratio: None,
        ln_sf_ratio: None,
        nonnegative: true,
    };
    let total = piece.closed_integral(0.0, a);
    // ∫₀ᵃ ψ′(x) e^{-x} dx
    let lower = (nu + theta1) * (1.0 - (-a).exp()) - theta1 * a;
    let objective = 0.5
        * integrate(
            |x| piece.eval(x, None).powi(2) * (-x).exp(),
            0.0,
            a,
            &[],
            &fine_opts(),
        )?
        .value;
    let upper = total - lower;
    Ok(DesignedPsi {
        kind: DesignKind::Location,
        construction: Construction::ExponentialClosedForm,
        model: Some(model),
        xi: Some(xi),
        multipliers: KktMultipliers::plain(nu, theta1, 0.0),
        active_region: vec![Interval { lo: 0.0, hi: a }],
        pieces: vec![piece],
        anchor: Anchor {
            x: 0.0,
            psi: -lower,
        },
        psi_neg_inf: -lower,
        summary: DesignSummary {
            objective,
            aif: (2.0 * objective).sqrt(),
            gamma_star: upper.max(lower),
            upper_if: upper,
            lower_if: lower,
            active: (true, false),
            tail_epsilon: None,
            ln_tail_epsilon: None,
            iterations: 0,
        },
        tables: OnceLock::new(),
    })
}

/// One ξ of a tradeoff curve; `skipped` holds the reason when no design exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub xi: f64,
    pub aif: Option<f64>,
    pub gamma_star: Option<f64>,
    pub skipped: Option<String>,
}

/// Population AIF (p = 2) and realized γ* of the tradeoff design at each ξ.
pub fn tradeoff_curve(
    model: &DistributionModel,
    xi_grid: &[f64],
    kind: DesignKind,
) -> Result<Vec<CurveRow>> {
    if xi_grid.is_empty() || xi_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "xi grid must be nonempty and strictly increasing".into(),
        ));
    }
    Ok(xi_grid
        .par_iter()
        .map(|&xi| {
            let row = tradeoff(model, xi, kind).and_then(|d| {
                let ctx = PopulationContext::new(model.clone(), d.to_psi_spec())?;
                let aif = aif_population(&ctx, NormOrder::Finite(2.0))?.value;
                Ok((aif, gross_error_sensitivity(&ctx)?))
            });
            match row {
                Ok((aif, gamma)) => CurveRow {
                    xi,
                    aif: Some(aif),
                    gamma_star: Some(gamma),
                    skipped: None,
                },
                Err(e) => CurveRow {
                    xi,
                    aif: None,
                    gamma_star: None,
                    skipped: Some(e.to_string()),
                },
            }
        })
        .collect())
}

//! Population AIF, influence function and gross-error sensitivity.
//!
//! Location problems are evaluated at θ = 0 and scale problems at θ = 1;
//! general ψ take an explicit θ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{aif_empirical, AifMethod, AifReport, Diagnostic};
use crate::distributions::DistributionModel;
use crate::error::{Error, Result};
use crate::m_estimator::{PsiKind, PsiSpec};
use crate::norm::NormOrder;
use crate::quad::QuadOptions;

/// Fisher-consistency residual above which a context carries a warning.
pub const FISHER_TOLERANCE: f64 = 1e-6;
/// Quantile-spaced points for numerical suprema.
pub const SUP_GRID: usize = 4096;

#[derive(Debug, Clone)]
pub struct PopulationContext {
    pub model: DistributionModel,
    pub psi: PsiSpec,
    pub theta: f64,
    pub opts: QuadOptions,
    /// `E[ψ(X, θ)]`, or `None` when the integral does not converge.
    pub fisher_residual: Option<f64>,
    /// `-E[∂ψ/∂θ]`, the common denominator of the AIF and the IF.
    pub slope: f64,
}

impl PopulationContext {
    /// θ defaults to 0 for location ψ and 1 for scale ψ; general ψ need
    /// [`PopulationContext::with_theta`].
    pub fn new(model: DistributionModel, psi: PsiSpec) -> Result<Self> {
        let theta = match psi.kind() {
            PsiKind::Location => 0.0,
            PsiKind::Scale => 1.0,
            PsiKind::General => {
                return Err(Error::InvalidParameter(
                    "a general psi needs an explicit theta".into(),
                ))
            }
        };
        Self::with_theta(model, psi, theta, QuadOptions::default())
    }

    pub fn with_theta(
        model: DistributionModel,
        psi: PsiSpec,
        theta: f64,
        opts: QuadOptions,
    ) -> Result<Self> {
        if !theta.is_finite() || (psi.kind() == PsiKind::Scale && theta <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "theta = {theta} is not a valid parameter for a {} psi",
                psi.kind()
            )));
        }
        let cuts = cuts(&model, &psi, theta);
        let slope = -model.expect(|x| psi.psi_dtheta(x, theta), &cuts, &opts)?;
        let fisher_residual = model.expect(|x| psi.psi(x, theta), &cuts, &opts).ok();
        Ok(Self {
            model,
            psi,
            theta,
            opts,
            fisher_residual,
            slope,
        })
    }

    /// True when `|E[ψ]|` exceeds [`FISHER_TOLERANCE`] or could not be computed.
    pub fn fisher_warning(&self) -> bool {
        match self.fisher_residual {
            Some(r) => r.abs() > FISHER_TOLERANCE,
            None => true,
        }
    }

    fn checked_slope(&self) -> Result<f64> {
        if self.slope == 0.0 || !self.slope.is_finite() || self.slope.abs() < 1e-300 {
            return Err(Error::Degenerate(format!(
                "E[dpsi/dtheta] = {:e} under {}",
                -self.slope,
                self.model.label()
            )));
        }
        Ok(self.slope)
    }

    fn cuts(&self) -> Vec<f64> {
        cuts(&self.model, &self.psi, self.theta)
    }
}

fn cuts(model: &DistributionModel, psi: &PsiSpec, theta: f64) -> Vec<f64> {
    let mut c = psi.breakpoints_x(theta);
    c.extend(model.breakpoints());
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Outcome of a numerical supremum search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Supremum {
    pub value: f64,
    pub at: f64,
    pub unbounded: bool,
}

/// `sup |f|` over the closure of the model's support.
///
/// Scans a quantile-spaced grid plus the breakpoints, refines the best cell
/// by golden section and probes geometrically far points on unbounded sides
/// for growth.
pub fn numeric_sup<F: Fn(f64) -> f64>(
    f: F,
    model: &DistributionModel,
    breakpoints: &[f64],
) -> Supremum {
    let (lo, hi) = model.support();
    let mut xs: Vec<f64> = (0..SUP_GRID)
        .map(|i| model.quantile((i as f64 + 0.5) / SUP_GRID as f64))
        .collect();
    for e in [lo, hi] {
        if e.is_finite() {
            xs.push(e);
        }
    }
    for &b in breakpoints {
        if b >= lo && b <= hi {
            for x in [b, b - 1e-9 * b.abs().max(1.0), b + 1e-9 * b.abs().max(1.0)] {
                if x >= lo && x <= hi {
                    xs.push(x);
                }
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x).abs()).collect();
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[best] || vals[best].is_nan() {
            best = i;
        }
    }
    let mut sup = Supremum {
        value: vals[best],
        at: xs[best],
        unbounded: !vals[best].is_finite(),
    };

    // Golden-section refinement inside the neighbouring cells.
    let (mut a, mut b) = (xs[best.saturating_sub(1)], xs[(best + 1).min(xs.len() - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c).abs(), f(d).abs());
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c).abs();
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d).abs();
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > sup.value {
            sup.value = v;
            sup.at = x;
        }
    }

    // Growth probe on infinite sides.
    let center = model.median();
    let spread = model.spread().max(1.0);
    let mut far = 0.0f64;
    for k in 0..64 {
        let step = spread * 2f64.powi(k);
        if hi.is_infinite() {
            far = far.max(f(center + step).abs());
        }
        if lo.is_infinite() {
            far = far.max(f(center - step).abs());
        }
    }
    if !far.is_finite() || far > 1e8 * sup.value.max(1.0) {
        sup.unbounded = true;
        sup.value = f64::INFINITY;
    } else if far > sup.value {
        sup.value = far;
    }
    sup
}

/// Population AIF by quadrature.
///
/// `p = 1`: `sup |∂ψ/∂x| / |E ∂ψ/∂θ|`; `p > 1`:
/// `(E |∂ψ/∂x|^q)^{1/q} / |E ∂ψ/∂θ|` with `q = p/(p-1)`.
pub fn aif_population(ctx: &PopulationContext, p: NormOrder) -> Result<AifReport> {
    let slope = ctx.checked_slope()?;
    let denominator = slope.abs();
    let psi = &ctx.psi;
    let theta = ctx.theta;
    let cuts = ctx.cuts();
    let (numerator, extra) = match p {
        NormOrder::One => {
            let (lo, hi) = ctx.model.support();
            match psi.sup_abs_dx_on(lo, hi, theta) {
                Some(v) => (v, vec![("sup_method", Diagnostic::Text("exact".into()))]),
                None => {
                    let s = numeric_sup(|x| psi.psi_dx(x, theta), &ctx.model, &cuts);
                    (
                        s.value,
                        vec![
                            ("sup_method", Diagnostic::Text("grid+golden".into())),
                            ("sup_at", Diagnostic::Number(s.at)),
                        ],
                    )
                }
            }
        }
        other => {
            let q = other.conjugate();
            let m = ctx
                .model
                .expect(|x| psi.psi_dx(x, theta).abs().powf(q), &cuts, &ctx.opts)?;
            (m.powf(1.0 / q), Vec::new())
        }
    };
    let value = if numerator.is_infinite() {
        f64::INFINITY
    } else {
        numerator / denominator
    };
    let mut report = AifReport::new(value, AifMethod::Quadrature)
        .with("numerator", Diagnostic::Number(numerator))
        .with("denominator", Diagnostic::Number(denominator))
        .with("unbounded", Diagnostic::Flag(value.is_infinite()))
        .with("fisher_warning", Diagnostic::Flag(ctx.fisher_warning()))
        .with("p", Diagnostic::Text(p.to_string()));
    if let Some(r) = ctx.fisher_residual {
        report = report.with("fisher_residual", Diagnostic::Number(r));
    }
    for (k, v) in extra {
        report = report.with(k, v);
    }
    Ok(report)
}

/// `IF(x) = ψ(x, θ) / (-E[∂ψ/∂θ])`.
pub fn influence_function(ctx: &PopulationContext, x: f64) -> Result<f64> {
    Ok(ctx.psi.psi(x, ctx.theta) / ctx.checked_slope()?)
}

/// `γ* = sup_x |IF(x)|`; `+∞` when ψ is unbounded on the support.
pub fn gross_error_sensitivity(ctx: &PopulationContext) -> Result<f64> {
    let slope = ctx.checked_slope()?.abs();
    let (lo, hi) = ctx.model.support();
    let sup = match ctx.psi.sup_abs_on(lo, hi, ctx.theta) {
        Some(v) => v,
        None => numeric_sup(|x| ctx.psi.psi(x, ctx.theta), &ctx.model, &ctx.cuts()).value,
    };
    Ok(if sup.is_infinite() {
        f64::INFINITY
    } else {
        sup / slope
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub empirical_aif: f64,
    pub population_aif: f64,
    pub rel_error: f64,
}

/// Fixed-sample AIF on seeded samples of increasing size next to the
/// population value. Sample `i` uses seed `seed + i`.
pub fn aif_convergence_study(
    ctx: &PopulationContext,
    p: NormOrder,
    n_grid: &[usize],
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] == 0 {
        return Err(Error::InvalidParameter(
            "sample-size grid must be positive and strictly increasing".into(),
        ));
    }
    let population = aif_population(ctx, p)?.value;
    n_grid
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let raw = ctx.model.sample(n, seed.wrapping_add(i as u64))?;
            let data: Vec<f64> = match ctx.psi.kind() {
                PsiKind::Scale => raw.into_iter().map(|x| x * ctx.theta).collect(),
                _ => raw.into_iter().map(|x| x + ctx.theta).collect(),
            };
            let empirical = aif_empirical(&ctx.psi, &data, p)?.value;
            Ok(ConvergenceRow {
                n,
                empirical_aif: empirical,
                population_aif: population,
                rel_error: (empirical - population).abs() / population.abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::m_estimator::{builtin_psi, BuiltinPsi};
    use statrs::function::erf::erf;

    fn ctx(which: BuiltinPsi, model: DistributionModel) -> PopulationContext {
        PopulationContext::new(model, builtin_psi(which).unwrap()).unwrap()
    }

    fn inside_mass(b: f64) -> f64 {
        // 2Φ(b) - 1
        erf(b / 2f64.sqrt())
    }

    const HUBER: BuiltinPsi = BuiltinPsi::Huber { b: 1.5 };
    const NORMAL: DistributionModel = DistributionModel::StandardNormal;

    #[test]
    fn population_aif_examples() {
        let p2 = NormOrder::Finite(2.0);
        let r = aif_population(&ctx(BuiltinPsi::Mean, NORMAL), p2).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.flag("fisher_warning"), Some(false));

        let beta = inside_mass(1.5);
        let h = ctx(HUBER, NORMAL);
        let r = aif_population(&h, p2).unwrap();
        assert!((r.value - beta.powf(-0.5)).abs() < 1e-9);
        assert!((r.value - 1.07435).abs() < 1e-5);
        let r1 = aif_population(&h, NormOrder::One).unwrap();
        assert!((r1.value - 1.0 / beta).abs() < 1e-9);
        assert!(r.value <= r1.value);
        let rinf = aif_population(&h, NormOrder::Infinity).unwrap();
        assert!((rinf.value - 1.0).abs() < 1e-9);

        // ψ′ = 2x is unbounded on the real line.
        let g = ctx(BuiltinPsi::GaussianScaleMle, NORMAL);
        let r = aif_population(&g, NormOrder::One).unwrap();
        assert!(r.value.is_infinite());
        assert_eq!(r.flag("unbounded"), Some(true));
        let r = aif_population(&g, p2).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn influence_examples() {
        assert!(
            (influence_function(&ctx(BuiltinPsi::Mean, NORMAL), 2.0).unwrap() - 2.0).abs() < 1e-12
        );
        let h = ctx(HUBER, NORMAL);
        let want = 1.5 / inside_mass(1.5);
        assert!((influence_function(&h, 10.0).unwrap() - want).abs() < 1e-9);
        assert!((want - 1.7313).abs() < 1e-4);
        let g = ctx(BuiltinPsi::GaussianScaleMle, NORMAL);
        assert!((influence_function(&g, 0.0).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn gross_error_examples() {
        assert!(gross_error_sensitivity(&ctx(BuiltinPsi::Mean, NORMAL))
            .unwrap()
            .is_infinite());
        let h = ctx(HUBER, NORMAL);
        assert!((gross_error_sensitivity(&h).unwrap() - 1.5 / inside_mass(1.5)).abs() < 1e-9);
        // On a bounded support the mean's IF is bounded.
        let u = DistributionModel::uniform(-1.0, 1.0).unwrap();
        let m = ctx(BuiltinPsi::Mean, u);
        assert!((gross_error_sensitivity(&m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_sup_agrees_with_exact() {
        let h = builtin_psi(HUBER).unwrap();
        let s = numeric_sup(|x| h.psi(x, 0.0), &NORMAL, &h.breakpoints_x(0.0));
        assert!((s.value - 1.5).abs() < 1e-12 && !s.unbounded);
        let s = numeric_sup(|x| x * (-x * x).exp(), &NORMAL, &[]);
        assert!((s.value - (0.5f64).sqrt() * (-0.5f64).exp()).abs() < 1e-12);
        let s = numeric_sup(|x| x, &DistributionModel::ExponentialRate1, &[]);
        assert!(s.unbounded);
    }

    #[test]
    fn psi_scaling_leaves_population_quantities_unchanged() {
        let psi = builtin_psi(HUBER).unwrap();
        let a = PopulationContext::new(NORMAL, psi.clone()).unwrap();
        let b = PopulationContext::new(NORMAL, psi.scaled(7.5).unwrap()).unwrap();
        for p in [
            NormOrder::One,
            NormOrder::Finite(2.0),
            NormOrder::Finite(3.0),
        ] {
            let (x, y) = (
                aif_population(&a, p).unwrap().value,
                aif_population(&b, p).unwrap().value,
            );
            assert!((x - y).abs() < 1e-10);
        }
        let (x, y) = (
            influence_function(&a, 0.7).unwrap(),
            influence_function(&b, 0.7).unwrap(),
        );
        assert!((x - y).abs() < 1e-10);
        let (x, y) = (
            gross_error_sensitivity(&a).unwrap(),
            gross_error_sensitivity(&b).unwrap(),
        );
        assert!((x - y).abs() < 1e-10);
    }

    #[test]
    fn location_lower_bound() {
        for b in [0.3, 1.0, 2.0, 4.0] {
            let c = ctx(BuiltinPsi::Huber { b }, NORMAL);
            for p in [
                NormOrder::One,
                NormOrder::Finite(1.5),
                NormOrder::Finite(2.0),
            ] {
                assert!(aif_population(&c, p).unwrap().value >= 1.0);
            }
        }
    }

    #[test]
    fn miscentred_psi_warns() {
        let c = ctx(BuiltinPsi::Mean, DistributionModel::ExponentialRate1);
        assert!(c.fisher_warning());
        assert!((c.fisher_residual.unwrap() - 1.0).abs() < 1e-9);
        let r = aif_population(&c, NormOrder::Finite(2.0)).unwrap();
        assert_eq!(r.flag("fisher_warning"), Some(true));
    }

    #[test]
    fn convergence_examples() {
        let m = ctx(BuiltinPsi::Mean, NORMAL);
        let rows = aif_convergence_study(&m, NormOrder::Finite(2.0), &[10, 100, 1000], 1).unwrap();
        assert!(rows.iter().all(|r| r.empirical_aif == 1.0));

        let h = ctx(HUBER, NORMAL);
        let rows =
            aif_convergence_study(&h, NormOrder::Finite(2.0), &[100, 1000, 100_000], 3).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[2].rel_error < 0.02);
        assert_eq!(
            rows,
            aif_convergence_study(&h, NormOrder::Finite(2.0), &[100, 1000, 100_000], 3).unwrap()
        );

        let g = ctx(BuiltinPsi::GaussianScaleMle, NORMAL);
        let rows = aif_convergence_study(&g, NormOrder::Finite(2.0), &[100_000], 5).unwrap();
        assert!((rows[0].empirical_aif - 1.0).abs() < 0.02);

        assert!(aif_convergence_study(&m, NormOrder::One, &[10, 10], 1).is_err());
    }
}

//! Optimal `l_p`-budgeted perturbations and the fixed-sample AIF.
//!
//! The budget is per dimension on average: `(1/N) ||Δx||_p^p ≤ η^p`, or
//! `||Δx||_∞ ≤ η`. To first order the estimator moves by `Σ c_n Δx_n`, so the
//! attack is a linear objective over an `l_p` ball and has the usual Hölder
//! maximiser.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::m_estimator::{sensitivity, solve, Estimator, PsiSpec};
use crate::norm::NormOrder;

/// A perturbation and the estimator shift it causes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub delta: Vec<f64>,
    pub eta: f64,
    pub p: NormOrder,
    /// First-order shift `Σ c_n Δx_n`; absent for the brute-force oracle.
    pub predicted_shift: Option<f64>,
    /// `|T_N(x + Δx) - T_N(x)|` after re-estimating.
    pub realized_shift: f64,
    /// Coordinate that receives the whole budget when `p = 1`.
    pub argmax: Option<usize>,
}

impl AttackPlan {
    /// `(1/N) ||Δx||_p^p`, or `||Δx||_∞` for `p = ∞`.
    pub fn budget_used(&self) -> f64 {
        budget_used(&self.delta, self.p)
    }
}

pub fn budget_used(delta: &[f64], p: NormOrder) -> f64 {
    let n = delta.len() as f64;
    match p {
        NormOrder::One => delta.iter().map(|d| d.abs()).sum::<f64>() / n,
        NormOrder::Finite(p) => delta.iter().map(|d| d.abs().powf(p)).sum::<f64>() / n,
        NormOrder::Infinity => delta.iter().fold(0.0, |m, d| m.max(d.abs())),
    }
}

/// How an AIF value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AifMethod {
    ClosedForm,
    FiniteEtaExtrapolation,
    Quadrature,
}

/// A diagnostic attached to an [`AifReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Diagnostic {
    Flag(bool),
    Index(usize),
    Number(f64),
    Series(Vec<f64>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AifReport {
    pub value: f64,
    pub method: AifMethod,
    pub diagnostics: BTreeMap<String, Diagnostic>,
}

impl AifReport {
    pub fn new(value: f64, method: AifMethod) -> Self {
        Self {
            value,
            method,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: Diagnostic) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        match self.diagnostics.get(key)? {
            Diagnostic::Number(v) => Some(*v),
            Diagnostic::Index(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn flag(&self, key: &str) -> Option<bool> {
        match self.diagnostics.get(key)? {
            Diagnostic::Flag(b) => Some(*b),
            _ => None,
        }
    }
}

/// Lowest index attaining `max |v_n|`, with the number of ties.
pub(crate) fn argmax_abs(v: &[f64]) -> (usize, usize) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    let ties = v.iter().filter(|x| x.abs() == v[best].abs()).count();
    (best, ties)
}

fn signum0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The budget-feasible `Δx` maximising `Σ c_n Δx_n`.
///
/// Returns the perturbation and, for `p = 1`, the coordinate that receives
/// the whole budget (lowest index on ties).
pub fn optimal_delta(c: &[f64], eta: f64, p: NormOrder) -> Result<(Vec<f64>, Option<usize>)> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "attack budget eta must be positive and finite (got {eta})"
        )));
    }
    if c.is_empty() {
        return Err(Error::InvalidParameter("data must be nonempty".into()));
    }
    let m = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return Err(Error::NullGradient);
    }
    let n = c.len();
    Ok(match p {
        NormOrder::One => {
            let (star, _) = argmax_abs(c);
            let mut delta = vec![0.0; n];
            delta[star] = signum0(c[star]) * n as f64 * eta;
            (delta, Some(star))
        }
        NormOrder::Finite(p) => {
            let q = p / (p - 1.0);
            // Work with c / max|c| so the powers cannot overflow; Δx is
            // homogeneous of degree zero in c.
            let r: Vec<f64> = c.iter().map(|v| v.abs() / m).collect();
            let norm = r.iter().map(|v| v.powf(q)).sum::<f64>().powf(1.0 / p);
            let reach = (n as f64).powf(1.0 / p) * eta;
            let delta = c
                .iter()
                .zip(&r)
                .map(|(cv, rv)| signum0(*cv) * rv.powf(1.0 / (p - 1.0)) * reach / norm)
                .collect();
            (delta, None)
        }
        NormOrder::Infinity => (c.iter().map(|v| eta * signum0(*v)).collect(), None),
    })
}

/// Apply the first-order optimal perturbation for gradient `c` to any
/// estimator and measure the realised shift.
pub fn attack_with_gradient<E: Estimator + ?Sized>(
    est: &E,
    data: &[f64],
    base: f64,
    c: &[f64],
    eta: f64,
    p: NormOrder,
) -> Result<AttackPlan> {
    let (delta, argmax) = optimal_delta(c, eta, p)?;
    let predicted: f64 = c.iter().zip(&delta).map(|(a, b)| a * b).sum();
    let moved: Vec<f64> = data.iter().zip(&delta).map(|(x, d)| x + d).collect();
    let realized = (est.estimate(&moved)? - base).abs();
    Ok(AttackPlan {
        delta,
        eta,
        p,
        predicted_shift: Some(predicted),
        realized_shift: realized,
        argmax,
    })
}

pub fn optimal_attack(psi: &PsiSpec, data: &[f64], eta: f64, p: NormOrder) -> Result<AttackPlan> {
    let est = solve(psi, data)?;
    let sens = sensitivity(psi, data, &est)?;
    attack_with_gradient(psi, data, est.value, &sens.c, eta, p)
}

/// Closed-form AIF from the derivatives at `T_N`.
pub fn aif_empirical(psi: &PsiSpec, data: &[f64], p: NormOrder) -> Result<AifReport> {
    let est = solve(psi, data)?;
    // Surfaces breakpoint collisions and a vanishing denominator.
    sensitivity(psi, data, &est)?;
    let t = est.value;
    let n = data.len() as f64;
    let dx: Vec<f64> = data.iter().map(|&x| psi.psi_dx(x, t)).collect();
    let denominator = (data.iter().map(|&x| psi.psi_dtheta(x, t)).sum::<f64>() / n).abs();
    let (star, ties) = argmax_abs(&dx);
    let m = dx[star].abs();
    let numerator = match p {
        NormOrder::One => m,
        NormOrder::Finite(p) => {
            let q = p / (p - 1.0);
            if m == 0.0 {
                0.0
            } else {
                m * (dx.iter().map(|v| (v.abs() / m).powf(q)).sum::<f64>() / n).powf(1.0 / q)
            }
        }
        NormOrder::Infinity => dx.iter().map(|v| v.abs()).sum::<f64>() / n,
    };
    let mut report = AifReport::new(numerator / denominator, AifMethod::ClosedForm)
        .with("numerator", Diagnostic::Number(numerator))
        .with("denominator", Diagnostic::Number(denominator))
        .with("estimate", Diagnostic::Number(t))
        .with("p", Diagnostic::Text(p.to_string()));
    if p == NormOrder::One {
        report = report
            .with("argmax_index", Diagnostic::Index(star))
            .with("argmax_ties", Diagnostic::Index(ties));
    }
    Ok(report)
}

/// Fit `shift/η = A + k η` by least squares and return `A` and `k`.
pub fn linear_extrapolation(eta: &[f64], ratio: &[f64]) -> (f64, f64) {
    let n = eta.len() as f64;
    let me = eta.iter().sum::<f64>() / n;
    let mr = ratio.iter().sum::<f64>() / n;
    let sxx: f64 = eta.iter().map(|e| (e - me).powi(2)).sum();
    let sxy: f64 = eta
        .iter()
        .zip(ratio)
        .map(|(e, r)| (e - me) * (r - mr))
        .sum();
    let k = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (mr - k * me, k)
}

fn check_eta_grid(eta_grid: &[f64]) -> Result<()> {
    if eta_grid.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "eta grid needs at least 3 points (got {})",
            eta_grid.len()
        )));
    }
    if eta_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidParameter("eta grid must be positive".into()));
    }
    if eta_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "eta grid must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Realised `shift/η` on a decreasing η grid, extrapolated to `η → 0`.
pub fn aif_finite_eta(
    psi: &PsiSpec,
    data: &[f64],
    p: NormOrder,
    eta_grid: &[f64],
) -> Result<AifReport> {
    check_eta_grid(eta_grid)?;
    let est = solve(psi, data)?;
    let sens = sensitivity(psi, data, &est)?;
    let ratios = eta_grid
        .iter()
        .map(|&eta| {
            attack_with_gradient(psi, data, est.value, &sens.c, eta, p)
                .map(|plan| plan.realized_shift / eta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finite_eta_report(eta_grid, ratios))
}

pub(crate) fn finite_eta_report(eta_grid: &[f64], ratios: Vec<f64>) -> AifReport {
    let (intercept, slope) = linear_extrapolation(eta_grid, &ratios);
    let scale = ratios
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()))
        .max(1e-300);
    let steps: Vec<f64> = ratios.windows(2).map(|w| w[1] - w[0]).collect();
    let up = steps.iter().any(|d| *d > 1e-9 * scale);
    let down = steps.iter().any(|d| *d < -1e-9 * scale);
    AifReport::new(intercept.max(0.0), AifMethod::FiniteEtaExtrapolation)
        .with("eta_grid", Diagnostic::Series(eta_grid.to_vec()))
        .with("ratios", Diagnostic::Series(ratios))
        .with("slope", Diagnostic::Number(slope))
        .with("convergence_warning", Diagnostic::Flag(up && down))
}

/// Largest realised shift over a uniform grid of feasible perturbations.
///
/// Each coordinate ranges over `grid_per_dim` points in `[-R, R]` with
/// `R = N^{1/p} η`, the largest single-coordinate move the budget allows.
pub fn brute_force_attack<E: Estimator + ?Sized>(
    est: &E,
    data: &[f64],
    eta: f64,
    p: NormOrder,
    grid_per_dim: usize,
) -> Result<AttackPlan> {
    let n = data.len();
    if n == 0 || n > 4 || grid_per_dim < 11 {
        return Err(Error::OracleSize {
            n,
            grid: grid_per_dim,
        });
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "attack budget eta must be positive and finite (got {eta})"
        )));
    }
    let base = est.estimate(data)?;
    let reach = p.single_coordinate_reach(n) * eta;
    let g = grid_per_dim;
    let axis: Vec<f64> = (0..g)
        .map(|i| -reach + 2.0 * reach * i as f64 / (g - 1) as f64)
        .collect();
    let limit = match p {
        NormOrder::Infinity => eta,
        NormOrder::One => eta,
        NormOrder::Finite(p) => eta.powf(p),
    } * (1.0 + 1e-12);
    let total = g.pow(n as u32);

    let best = (0..total)
        .into_par_iter()
        .map(|k| {
            let mut delta = vec![0.0; n];
            let mut rest = k;
            for d in delta.iter_mut() {
                *d = axis[rest % g];
                rest /= g;
            }
            (k, delta)
        })
        .filter(|(_, delta)| budget_used(delta, p) <= limit)
        .map(|(idx, delta)| {
            let moved: Vec<f64> = data.iter().zip(&delta).map(|(x, d)| x + d).collect();
            let shift = est.estimate(&moved).map(|t| (t - base).abs());
            (idx, delta, shift)
        })
        .try_fold(
            || None::<(usize, Vec<f64>, f64)>,
            |acc, (idx, delta, shift)| {
                let shift = shift?;
                Ok::<_, Error>(match acc {
                    Some(a) if a.2 > shift || (a.2 == shift && a.0 < idx) => Some(a),
                    _ => Some((idx, delta, shift)),
                })
            },
        )
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (None, x) | (x, None) => x,
                    (Some(a), Some(b)) => {
                        if a.2 > b.2 || (a.2 == b.2 && a.0 < b.0) {
                            Some(a)
                        } else {
                            Some(b)
                        }
                    }
                })
            },
        )?;
    let (_, delta, realized) = best.expect("the zero perturbation is always feasible");
    Ok(AttackPlan {
        delta,
        eta,
        p,
        predicted_shift: None,
        realized_shift: realized,
        argmax: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::m_estimator::{builtin_psi, BuiltinPsi};
    use proptest::prelude::*;

    fn mean() -> PsiSpec {
        builtin_psi(BuiltinPsi::Mean).unwrap()
    }

    fn huber(b: f64) -> PsiSpec {
        builtin_psi(BuiltinPsi::Huber { b }).unwrap()
    }

    fn gauss() -> PsiSpec {
        builtin_psi(BuiltinPsi::GaussianScaleMle).unwrap()
    }

    const P_ALL: [NormOrder; 4] = [
        NormOrder::One,
        NormOrder::Finite(1.5),
        NormOrder::Finite(2.0),
        NormOrder::Infinity,
    ];

    #[test]
    fn mean_p1_puts_budget_on_lowest_tied_index() {
        let plan = optimal_attack(&mean(), &[1.0, 2.0, 3.0], 0.1, NormOrder::One).unwrap();
        assert_eq!(plan.argmax, Some(0));
        assert!((plan.delta[0] - 0.3).abs() < 1e-15);
        assert_eq!(&plan.delta[1..], &[0.0, 0.0]);
        assert!((plan.predicted_shift.unwrap() - 0.1).abs() < 1e-15);
        assert!((plan.realized_shift - 0.1).abs() < 1e-14);
    }

    #[test]
    fn gaussian_scale_p2_shift() {
        // c_n = x_n / (N T_N) and the p = 2 AIF is ||x||₂ / (√N T_N) = 1.
        let plan = optimal_attack(
            &gauss(),
            &[1.0, 2.0, 2.0, 3.0],
            0.01,
            NormOrder::Finite(2.0),
        )
        .unwrap();
        assert!((plan.predicted_shift.unwrap() - 0.01).abs() < 1e-15);
        assert!((plan.budget_used() - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn huber_p_inf_is_sign_of_gradient() {
        let x = [-0.9, 0.0, 1.0, 10.0];
        let plan = optimal_attack(&huber(1.5), &x, 0.05, NormOrder::Infinity).unwrap();
        assert_eq!(plan.delta, vec![0.05, 0.05, 0.05, 0.0]);
    }

    #[test]
    fn null_gradient_and_bad_eta() {
        assert_eq!(
            optimal_delta(&[0.0, 0.0], 0.1, NormOrder::One),
            Err(Error::NullGradient)
        );
        assert!(matches!(
            optimal_attack(&mean(), &[1.0], 0.0, NormOrder::One),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn aif_examples() {
        for p in P_ALL {
            let r = aif_empirical(&mean(), &[1.0, 5.0, -2.0, 7.5], p).unwrap();
            assert!((r.value - 1.0).abs() < 1e-15);
            assert_eq!(r.method, AifMethod::ClosedForm);
            assert!(r.number("numerator").is_some() && r.number("denominator").is_some());
        }
        // Four of five points strictly inside the corners: β = 4/5.
        let x = [-1.0, 0.0, 0.0, 1.0, 10.0];
        let r = aif_empirical(&huber(1.5), &x, NormOrder::Finite(2.0)).unwrap();
        assert!((r.number("estimate").unwrap() - 0.375).abs() < 1e-15);
        assert!((r.value - 1.25f64.sqrt()).abs() < 1e-15);
        for p in [1.5, 3.0] {
            let r = aif_empirical(&huber(1.5), &x, NormOrder::Finite(p)).unwrap();
            assert!((r.value - 0.8f64.powf(-1.0 / p)).abs() < 1e-14);
        }
        let x = [1.0, 2.0, 2.0, 3.0];
        let r = aif_empirical(&gauss(), &x, NormOrder::One).unwrap();
        assert!((r.value - 3.0 / 4.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(r.number("argmax_index"), Some(3.0));
        let r = aif_empirical(&gauss(), &x, NormOrder::Finite(2.0)).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn finite_eta_examples() {
        let r = aif_finite_eta(
            &mean(),
            &[1.0, 2.0, 3.0],
            NormOrder::Finite(2.0),
            &[0.1, 0.05, 0.025],
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
        if let Some(Diagnostic::Series(ratios)) = r.diagnostics.get("ratios") {
            assert!(ratios.iter().all(|v| (v - 1.0).abs() < 1e-9));
        } else {
            panic!("missing ratios");
        }

        let data = crate::DistributionModel::StandardNormal
            .sample(20, 7)
            .unwrap();
        let grid = [1e-3, 5e-4, 2.5e-4, 1.25e-4];
        let exact = aif_empirical(&huber(1.5), &data, NormOrder::Finite(2.0))
            .unwrap()
            .value;
        let r = aif_finite_eta(&huber(1.5), &data, NormOrder::Finite(2.0), &grid).unwrap();
        assert!((r.value - exact).abs() < 1e-3 * exact);

        let x = [1.0, 2.0, 2.0, 3.0];
        let r = aif_finite_eta(&gauss(), &x, NormOrder::One, &[1e-2, 5e-3, 2.5e-3]).unwrap();
        assert!((r.value - 3.0 / 4.5f64.sqrt()).abs() < 1e-3);

        assert!(aif_finite_eta(&mean(), &x, NormOrder::One, &[0.1, 0.2, 0.05]).is_err());
        assert!(aif_finite_eta(&mean(), &x, NormOrder::One, &[0.1, 0.05]).is_err());
    }

    #[test]
    fn brute_force_examples() {
        let p1 = NormOrder::One;
        let plan = optimal_attack(&mean(), &[0.0, 1.0], 0.1, p1).unwrap();
        let brute = brute_force_attack(&mean(), &[0.0, 1.0], 0.1, p1, 21).unwrap();
        assert!((brute.realized_shift - plan.realized_shift).abs() <= 0.02 * plan.realized_shift);

        // [-0.5, 0.5, 3] puts x = -0.5 exactly on the lower corner at T_N = 0.5.
        let x = [-0.45, 0.5, 3.0];
        let p2 = NormOrder::Finite(2.0);
        let plan = optimal_attack(&huber(1.0), &x, 0.05, p2).unwrap();
        let brute = brute_force_attack(&huber(1.0), &x, 0.05, p2, 21).unwrap();
        assert!(brute.realized_shift <= plan.realized_shift * 1.02);

        let x = [1.0, 2.0];
        let pi = NormOrder::Infinity;
        let plan = optimal_attack(&gauss(), &x, 0.01, pi).unwrap();
        let brute = brute_force_attack(&gauss(), &x, 0.01, pi, 21).unwrap();
        assert!((brute.realized_shift - plan.realized_shift).abs() <= 0.02 * plan.realized_shift);

        assert!(matches!(
            brute_force_attack(&mean(), &[0.0; 5], 0.1, p1, 21),
            Err(Error::OracleSize { n: 5, grid: 21 })
        ));
        assert!(matches!(
            brute_force_attack(&mean(), &[0.0; 2], 0.1, p1, 5),
            Err(Error::OracleSize { .. })
        ));
    }

    fn builtin_strategy() -> impl Strategy<Value = PsiSpec> {
        prop_oneof![Just(mean()), (0.5f64..2.0).prop_map(huber), Just(gauss()),]
    }

    fn p_strategy() -> impl Strategy<Value = NormOrder> {
        prop_oneof![
            Just(NormOrder::One),
            (1.1f64..6.0).prop_map(NormOrder::Finite),
            Just(NormOrder::Infinity),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn brute_force_never_beats_optimal(
            psi in builtin_strategy(),
            p in prop_oneof![Just(NormOrder::One), Just(NormOrder::Finite(2.0)), Just(NormOrder::Infinity)],
            x in prop::collection::vec(0.2f64..5.0, 3),
        ) {
            let spread = x.iter().cloned().fold(f64::MIN, f64::max)
                - x.iter().cloned().fold(f64::MAX, f64::min);
            prop_assume!(spread > 0.1);
            let eta = 0.01 * spread;
            let plan = match optimal_attack(&psi, &x, eta, p) {
                Ok(plan) => plan,
                Err(_) => return Ok(()),
            };
            // Samples within reach of a corner make the first-order model moot.
            if let Ok(est) = solve(&psi, &x) {
                let reach = p.single_coordinate_reach(3) * eta * 2.0;
                let bps = psi.breakpoints_x(est.value);
                prop_assume!(!x.iter().any(|v| bps.iter().any(|b| (v - b).abs() < reach)));
            }
            let brute = brute_force_attack(&psi, &x, eta, p, 21).unwrap();
            prop_assert!(brute.realized_shift <= plan.realized_shift * 1.02 + 1e-12,
                "brute {} optimal {}", brute.realized_shift, plan.realized_shift);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn plan_invariants(
            psi in builtin_strategy(),
            p in p_strategy(),
            eta in 1e-4f64..0.1,
            x in prop::collection::vec(-5.0f64..5.0, 2..30),
        ) {
            let plan = match optimal_attack(&psi, &x, eta, p) {
                Ok(plan) => plan,
                Err(_) => return Ok(()),
            };
            let est = solve(&psi, &x).unwrap();
            let c = sensitivity(&psi, &x, &est).unwrap().c;
            match p {
                NormOrder::Finite(pv) => {
                    let used = plan.budget_used();
                    prop_assert!((used - eta.powf(pv)).abs() <= 1e-9 * eta.powf(pv));
                }
                NormOrder::One => prop_assert!(plan.budget_used() <= eta * (1.0 + 1e-12)),
                NormOrder::Infinity => prop_assert!(plan.budget_used() <= eta + 1e-12),
            }
            for (d, cv) in plan.delta.iter().zip(&c) {
                if *d != 0.0 {
                    prop_assert_eq!(d.signum(), cv.signum());
                }
            }
            // The first-order shift is η times the closed-form AIF.
            let aif = aif_empirical(&psi, &x, p).unwrap().value;
            let pred = plan.predicted_shift.unwrap();
            prop_assert!((pred - eta * aif).abs() <= 1e-10 * eta * aif.max(1.0));
        }

        #[test]
        fn jensen_chain(
            psi in builtin_strategy(),
            p in p_strategy(),
            x in prop::collection::vec(-5.0f64..5.0, 2..30),
        ) {
            let est = match solve(&psi, &x) {
                Ok(e) => e,
                Err(_) => return Ok(()),
            };
            let aif = match aif_empirical(&psi, &x, p) {
                Ok(r) => r.value,
                Err(_) => return Ok(()),
            };
            let n = x.len() as f64;
            let t = est.value;
            let mean_abs = x.iter().map(|&v| psi.psi_dx(v, t).abs()).sum::<f64>() / n;
            let denom = (x.iter().map(|&v| psi.psi_dtheta(v, t)).sum::<f64>() / n).abs();
            prop_assert!(aif >= mean_abs / denom * (1.0 - 1e-12));
            if psi.kind() == crate::PsiKind::Location {
                prop_assert!(aif >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn jensen_equality_when_derivatives_are_equal() {
        let x = [-4.0, -1.0, 1.0, 4.0];
        let psi = gauss();
        let lower = {
            let t = solve(&psi, &x).unwrap().value;
            let n = x.len() as f64;
            x.iter().map(|&v| psi.psi_dx(v, t).abs()).sum::<f64>()
                / n
                / (x.iter().map(|&v| psi.psi_dtheta(v, t)).sum::<f64>() / n).abs()
        };
        let x = [-2.0, 2.0, 2.0, -2.0];
        for p in P_ALL {
            let r = aif_empirical(&psi, &x, p).unwrap().value;
            assert!((r - 1.0).abs() < 1e-14, "{p}: {r}");
        }
        assert!(lower < 1.0);
    }
}

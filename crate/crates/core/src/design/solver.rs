//! Multiplier solver for the AIF/IF tradeoff designs.
//!
//! Minimising `½ ∫ g² f` subject to `∫ g b f = 1`, `∫ g F ≤ ξ`,
//! `∫ g (1 - F) ≤ ξ` and `g ≥ 0` gives, pointwise,
//!
//! ```text
//! g(x) = max(0, ν b(x) - (ϑ₁ F(x) + ϑ₂ (1 - F(x))) / f(x))
//! ```
//!
//! with `b ≡ 1` for location and `b(x) = x` for scale. The multipliers are
//! found by damped Newton on the stationarity conditions of the concave dual
//! `-½ ∫ g² f + ν - ξ(ϑ₁ + ϑ₂)`, one system per choice of active IF
//! constraints. Each ϑ is carried as its logarithm: for wide budgets ϑ is far
//! below the smallest positive double.

use crate::distributions::DistributionModel;
use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};

pub(crate) const MAX_ITERATIONS: usize = 200;
pub(crate) const TOLERANCE: f64 = 1e-10;
const MAX_HALVINGS: usize = 60;
const MAX_EXPANSIONS: i32 = 62;
const LOGIT_POINTS: usize = 400;
const UNIFORM_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Basis {
    One,
    X,
}

impl Basis {
    pub(crate) fn ln(self, x: f64) -> f64 {
        match self {
            Basis::One => 0.0,
            Basis::X => {
                if x > 0.0 {
                    x.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub(crate) fn value(self, x: f64) -> f64 {
        match self {
            Basis::One => 1.0,
            Basis::X => x,
        }
    }
}

pub(crate) fn logsumexp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ν` and the logs of the active multipliers (`None` for inactive ones).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Params {
    pub nu: f64,
    pub s1: Option<f64>,
    pub s2: Option<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub region: Vec<(f64, f64)>,
    /// `∫ g b f`
    pub norm: f64,
    /// `∫ g F`, the IF at `+∞`
    pub upper: f64,
    /// `∫ g (1 - F)`, minus the IF at `-∞`
    pub lower: f64,
    /// `½ ∫ g² f`
    pub objective: f64,
    jac: [[f64; 3]; 3],
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub params: Params,
    pub eval: Evaluation,
    pub iterations: usize,
}

pub(crate) struct Problem<'a> {
    pub model: &'a DistributionModel,
    pub basis: Basis,
    pub xi: f64,
    pub opts: QuadOptions,
}

enum RegionError {
    Unbounded,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(model: &'a DistributionModel, basis: Basis, xi: f64) -> Self {
        Self {
            model,
            basis,
            xi,
            opts: QuadOptions {
                abs_tol: 1e-13,
                rel_tol: 1e-13,
                max_subdivisions: 4000,
            },
        }
    }

    /// Log of `ν b f / (ϑ₁ F + ϑ₂ S)`; the active region is where it is positive.
    fn phi(&self, p: &Params, x: f64) -> f64 {
        let lb = self.basis.ln(x);
        let lf = self.model.ln_pdf(x);
        if lb == f64::NEG_INFINITY || lf == f64::NEG_INFINITY || p.nu <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let t1 = p.s1.map_or(f64::NEG_INFINITY, |s| s + self.model.ln_cdf(x));
        let t2 = p.s2.map_or(f64::NEG_INFINITY, |s| s + self.model.ln_sf(x));
        let v = p.nu.ln() + lb + lf - logsumexp(t1, t2);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    pub(crate) fn g(&self, p: &Params, x: f64) -> f64 {
        let b = self.basis.value(x);
        let lf = self.model.ln_pdf(x);
        if b <= 0.0 || lf == f64::NEG_INFINITY {
            return 0.0;
        }
        let mut v = p.nu * b;
        if let Some(s) = p.s1 {
            v -= (s + self.model.ln_cdf(x) - lf).exp();
        }
        if let Some(s) = p.s2 {
            v -= (s + self.model.ln_sf(x) - lf).exp();
        }
        v.max(0.0)
    }

    /// Lower end of the region where `b > 0` inside the support.
    fn positive_lo(&self) -> f64 {
        let (lo, _) = self.model.support();
        match self.basis {
            Basis::One => lo,
            Basis::X => lo.max(0.0),
        }
    }

    fn scan_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.model.support();
        let mut xs = Vec::with_capacity(LOGIT_POINTS + UNIFORM_POINTS + 4);
        let tmax = 27.6;
        for i in 0..=LOGIT_POINTS {
            let t = -tmax + 2.0 * tmax * i as f64 / LOGIT_POINTS as f64;
            let q = 1.0 / (1.0 + (-t).exp());
            xs.push(self.model.quantile(q));
        }
        let a = self.model.quantile(1e-12);
        let b = self.model.quantile(1.0 - 1e-12);
        for i in 0..=UNIFORM_POINTS {
            xs.push(a + (b - a) * i as f64 / UNIFORM_POINTS as f64);
        }
        if lo.is_finite() {
            xs.push(lo);
        }
        if hi.is_finite() {
            xs.push(hi);
        }
        if self.basis == Basis::X && lo < 0.0 && hi > 0.0 {
            xs.push(0.0);
        }
        xs.retain(|x| x.is_finite() && *x >= lo && *x <= hi);
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }

    fn region(&self, p: &Params) -> std::result::Result<Vec<(f64, f64)>, RegionError> {
        let (lo, hi) = self.model.support();
        let mut xs = self.scan_grid();
        let spread = self.model.spread().max(f64::MIN_POSITIVE);

        // Follow the region outward past the quantile grid on unbounded sides.
        if hi.is_infinite() {
            let top = *xs.last().expect("grid is nonempty");
            if self.phi(p, top) > 0.0 {
                let mut k = 0;
                loop {
                    if k > MAX_EXPANSIONS {
                        return Err(RegionError::Unbounded);
                    }
                    let x = top + spread * 2f64.powi(k);
                    xs.push(x);
                    if self.phi(p, x) <= 0.0 {
                        break;
                    }
                    k += 1;
                }
            }
        }
        if lo.is_infinite() {
            let bottom = xs[0];
            if self.phi(p, bottom) > 0.0 {
                let mut k = 0;
                loop {
                    if k > MAX_EXPANSIONS {
                        return Err(RegionError::Unbounded);
                    }
                    let x = bottom - spread * 2f64.powi(k);
                    xs.push(x);
                    if self.phi(p, x) <= 0.0 {
                        break;
                    }
                    k += 1;
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let vals: Vec<f64> = xs.iter().map(|&x| self.phi(p, x)).collect();

        let mut out = Vec::new();
        let mut i = 0;
        while i < xs.len() {
            if vals[i] <= 0.0 {
                i += 1;
                continue;
            }
            let mut j = i;
            while j + 1 < xs.len() && vals[j + 1] > 0.0 {
                j += 1;
            }
            let left = if i == 0 {
                if !lo.is_finite() {
                    return Err(RegionError::Unbounded);
                }
                lo
            } else if vals[i - 1] == f64::NEG_INFINITY && self.hard_edge(xs[i - 1]) {
                xs[i - 1]
            } else {
                self.boundary(p, xs[i - 1], xs[i])
            };
            let right = if j == xs.len() - 1 {
                if !hi.is_finite() {
                    return Err(RegionError::Unbounded);
                }
                hi
            } else if vals[j + 1] == f64::NEG_INFINITY && self.hard_edge(xs[j + 1]) {
                xs[j + 1]
            } else {
                self.boundary(p, xs[j], xs[j + 1])
            };
            if right > left {
                out.push((left, right));
            }
            i = j + 1;
        }
        Ok(out)
    }

    /// Support ends and the zero of `b` are fixed edges, not free boundaries.
    fn hard_edge(&self, x: f64) -> bool {
        let (lo, hi) = self.model.support();
        x == lo || x == hi || (self.basis == Basis::X && x == 0.0)
    }

    /// Bisect the sign change of φ between `a` and `b`.
    fn boundary(&self, p: &Params, mut a: f64, mut b: f64) -> f64 {
        let fa_pos = self.phi(p, a) > 0.0;
        loop {
            let mid = a + 0.5 * (b - a);
            if mid <= a || mid >= b {
                break;
            }
            if (self.phi(p, mid) > 0.0) == fa_pos {
                a = mid;
            } else {
                b = mid;
            }
        }
        a + 0.5 * (b - a)
    }

    fn over_region<H: Fn(f64) -> f64>(&self, region: &[(f64, f64)], h: H) -> Result<f64> {
        let mut total = 0.0;
        for &(a, b) in region {
            total += integrate(&h, a, b, &self.model.breakpoints(), &self.opts)?.value;
        }
        Ok(total)
    }

    pub(crate) fn evaluate(&self, p: &Params) -> Result<Evaluation> {
        let region = self.region(p).map_err(|RegionError::Unbounded| {
            Error::Degenerate("active region is unbounded; the IF constraint cannot hold".into())
        })?;
        let m = self.model;
        let g = |x: f64| self.g(p, x);
        let norm = self.over_region(&region, |x| g(x) * self.basis.value(x) * m.pdf(x))?;
        let upper = self.over_region(&region, |x| g(x) * m.cdf(x))?;
        let lower = self.over_region(&region, |x| g(x) * m.sf(x))?;
        let objective = 0.5 * self.over_region(&region, |x| g(x) * g(x) * m.pdf(x))?;

        let b = |x: f64| self.basis.value(x);
        let lnb = |x: f64| self.basis.ln(x);
        let bbf = self.over_region(&region, |x| b(x) * b(x) * m.pdf(x))?;
        let bf = self.over_region(&region, |x| b(x) * m.cdf(x))?;
        let bs = self.over_region(&region, |x| b(x) * m.sf(x))?;
        let weighted = |s: Option<f64>, h: &dyn Fn(f64) -> f64| -> Result<f64> {
            match s {
                None => Ok(0.0),
                Some(s) => self.over_region(&region, |x| (s + h(x)).exp()),
            }
        };
        let t1_bf = weighted(p.s1, &|x| lnb(x) + m.ln_cdf(x))?;
        let t2_bs = weighted(p.s2, &|x| lnb(x) + m.ln_sf(x))?;
        let t1_ff = weighted(p.s1, &|x| 2.0 * m.ln_cdf(x) - m.ln_pdf(x))?;
        let t2_ss = weighted(p.s2, &|x| 2.0 * m.ln_sf(x) - m.ln_pdf(x))?;
        let t1_fs = weighted(p.s1, &|x| m.ln_cdf(x) + m.ln_sf(x) - m.ln_pdf(x))?;
        let t2_fs = weighted(p.s2, &|x| m.ln_cdf(x) + m.ln_sf(x) - m.ln_pdf(x))?;

        // Rows: norm, upper, lower. Columns: ν, ln ϑ₁, ln ϑ₂.
        let jac = [
            [bbf, -t1_bf, -t2_bs],
            [bf, -t1_ff, -t2_fs],
            [bs, -t1_fs, -t2_ss],
        ];
        Ok(Evaluation {
            region,
            norm,
            upper,
            lower,
            objective,
            jac,
        })
    }

    fn residual(&self, e: &Evaluation, p: &Params) -> Vec<f64> {
        let mut r = vec![e.norm - 1.0];
        if p.s1.is_some() {
            r.push((e.upper - self.xi) / self.xi);
        }
        if p.s2.is_some() {
            r.push((e.lower - self.xi) / self.xi);
        }
        r
    }

    fn jacobian(&self, e: &Evaluation, p: &Params) -> Vec<Vec<f64>> {
        let mut rows = vec![0usize];
        let mut cols = vec![0usize];
        if p.s1.is_some() {
            rows.push(1);
            cols.push(1);
        }
        if p.s2.is_some() {
            rows.push(2);
            cols.push(2);
        }
        rows.iter()
            .map(|&r| {
                let scale = if r == 0 { 1.0 } else { 1.0 / self.xi };
                cols.iter().map(|&c| e.jac[r][c] * scale).collect()
            })
            .collect()
    }

    fn step(p: &Params, delta: &[f64], t: f64) -> Params {
        let mut k = 1;
        let mut next = Params {
            nu: p.nu + t * delta[0],
            ..*p
        };
        if let Some(s) = p.s1 {
            next.s1 = Some(s + t * delta[k]);
            k += 1;
        }
        if let Some(s) = p.s2 {
            next.s2 = Some(s + t * delta[k]);
        }
        next
    }

    fn newton(&self, start: Params) -> Option<Solution> {
        let mut p = start;
        let mut e = self.evaluate(&p).ok()?;
        let mut r = self.residual(&e, &p);
        for iteration in 0..MAX_ITERATIONS {
            let norm = max_abs(&r);
            if norm <= TOLERANCE {
                return Some(Solution {
                    params: p,
                    eval: e,
                    iterations: iteration,
                });
            }
            let j = self.jacobian(&e, &p);
            let delta = solve_linear(j, r.iter().map(|v| -v).collect())?;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let trial = Self::step(&p, &delta, t);
                if trial.nu > 0.0 && trial.s1.is_none_or_finite() && trial.s2.is_none_or_finite() {
                    if let Ok(te) = self.evaluate(&trial) {
                        let tr = self.residual(&te, &trial);
                        if max_abs(&tr) < norm {
                            p = trial;
                            e = te;
                            r = tr;
                            accepted = true;
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        (max_abs(&r) <= TOLERANCE).then_some(Solution {
            params: p,
            eval: e,
            iterations: MAX_ITERATIONS,
        })
    }

    /// `ν` for the unconstrained design `g = ν b⁺`.
    fn free_nu(&self) -> Result<f64> {
        let m = self
            .model
            .expect(|x| self.basis.value(x).max(0.0).powi(2), &[], &self.opts)?;
        if m <= 0.0 {
            return Err(Error::Degenerate(format!(
                "E[b(X)²] vanishes on the positive part of {}",
                self.model.label()
            )));
        }
        Ok(1.0 / m)
    }

    /// Centre of the part of the support where `b > 0`.
    fn centre(&self) -> f64 {
        let q0 = self.model.cdf(self.positive_lo());
        self.model.quantile(q0 + 0.5 * (1.0 - q0))
    }

    /// Boundary candidates from the centre toward each end of the support.
    fn outward(&self, upward: bool, k: i32) -> f64 {
        let (_, hi) = self.model.support();
        let c = self.centre();
        let spread = self.model.spread();
        let frac = 2f64.powf(-0.5 * k as f64);
        if upward {
            if hi.is_finite() {
                hi - (hi - c) * frac
            } else {
                c + spread * 2f64.powf(0.5 * k as f64) * 0.25
            }
        } else {
            let floor = self.positive_lo();
            if floor.is_finite() {
                floor + (c - floor) * frac
            } else {
                c - spread * 2f64.powf(0.5 * k as f64) * 0.25
            }
        }
    }

    fn ln_multiplier_at(&self, nu: f64, x: f64, upper: bool) -> f64 {
        let tail = if upper {
            self.model.ln_cdf(x)
        } else {
            self.model.ln_sf(x)
        };
        nu.ln() + self.basis.ln(x) + self.model.ln_pdf(x) - tail
    }

    /// Boundary that makes `ν₀ ∫ b·w` from the centre reach ξ.
    fn heuristic_boundary(&self, nu: f64, upper: bool) -> f64 {
        let c = self.centre();
        let mut last = c;
        for k in 0..120 {
            let x = self.outward(upper, k);
            if !x.is_finite() {
                break;
            }
            last = x;
            let (a, b) = if upper { (c, x) } else { (x, c) };
            let mass = integrate(
                |t| {
                    let w = if upper {
                        self.model.cdf(t)
                    } else {
                        self.model.sf(t)
                    };
                    self.basis.value(t).max(0.0) * w
                },
                a,
                b,
                &[],
                &QuadOptions::with_abs_tol(1e-8),
            )
            .map(|r| r.value)
            .unwrap_or(f64::INFINITY);
            if nu * mass >= self.xi {
                break;
            }
        }
        last
    }

    fn starts(&self, nu: f64, active: (bool, bool)) -> Vec<Params> {
        let mut out = Vec::new();
        let make = |xu: f64, xl: f64| Params {
            nu,
            s1: active.0.then(|| self.ln_multiplier_at(nu, xu, true)),
            s2: active.1.then(|| self.ln_multiplier_at(nu, xl, false)),
        };
        out.push(make(
            self.heuristic_boundary(nu, true),
            self.heuristic_boundary(nu, false),
        ));
        for k in [2, 4, 8, 12, 16, 24] {
            out.push(make(self.outward(true, k), self.outward(false, k)));
        }
        out.retain(|p| p.s1.is_none_or_finite() && p.s2.is_none_or_finite());
        out
    }

    fn feasible(&self, s: &Solution) -> bool {
        let slack = 1e-9 * self.xi.max(1.0);
        s.eval.upper <= self.xi + slack && s.eval.lower <= self.xi + slack
    }

    /// Enumerate the four active sets and keep the feasible solution with
    /// the smallest objective.
    pub(crate) fn solve(&self) -> Option<(Solution, (bool, bool))> {
        let nu = self.free_nu().ok()?;
        let mut best: Option<(Solution, (bool, bool))> = None;
        for active in [(false, false), (true, false), (false, true), (true, true)] {
            let found = if active == (false, false) {
                let p = Params {
                    nu,
                    s1: None,
                    s2: None,
                };
                self.evaluate(&p).ok().map(|eval| Solution {
                    params: p,
                    eval,
                    iterations: 0,
                })
            } else {
                self.starts(nu, active)
                    .into_iter()
                    .find_map(|start| self.newton(start).filter(|s| self.feasible(s)))
            };
            if let Some(sol) = found.filter(|s| self.feasible(s)) {
                let better = best.as_ref().is_none_or_gt(sol.eval.objective);
                if better {
                    best = Some((sol, active));
                }
            }
        }
        best
    }
}

trait OptionExt {
    fn is_none_or_finite(&self) -> bool;
}

impl OptionExt for Option<f64> {
    fn is_none_or_finite(&self) -> bool {
        match self {
            None => true,
            Some(v) => v.is_finite(),
        }
    }
}

trait BestExt {
    fn is_none_or_gt(&self, objective: f64) -> bool;
}

impl BestExt for Option<&(Solution, (bool, bool))> {
    fn is_none_or_gt(&self, objective: f64) -> bool {
        match self {
            None => true,
            Some((s, _)) => s.eval.objective > objective,
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Gaussian elimination with partial pivoting for the ≤ 3×3 Newton systems.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col] == 0.0 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (row, r) in rest.iter_mut().enumerate() {
            let f = r[col] / pivot_row[col];
            for (x, p) in r[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[col + 1 + row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `max_{μ ∈ [0,1]} inf_x (μ F + (1 - μ)(1 - F)) / (b f)`, the value of the
/// linear program `min max(∫g F, ∫g (1-F))` over `g ≥ 0` with `∫ g b f = 1`.
/// Budgets above it are feasible.
pub(crate) fn smallest_feasible(model: &DistributionModel, basis: Basis) -> f64 {
    let problem = Problem::new(model, basis, 1.0);
    let xs: Vec<f64> = problem
        .scan_grid()
        .into_iter()
        .filter(|&x| basis.ln(x) > f64::NEG_INFINITY && model.ln_pdf(x) > f64::NEG_INFINITY)
        .collect();
    let ln_ratio = |mu: f64, x: f64| {
        logsumexp(mu.ln() + model.ln_cdf(x), (1.0 - mu).ln() + model.ln_sf(x))
            - basis.ln(x)
            - model.ln_pdf(x)
    };
    let inner = |mu: f64| -> f64 {
        let vals: Vec<f64> = xs.iter().map(|&x| ln_ratio(mu, x)).collect();
        let mut best = 0;
        for (i, v) in vals.iter().enumerate() {
            if *v < vals[best] {
                best = i;
            }
        }
        let a = xs[best.saturating_sub(1)];
        let b = xs[(best + 1).min(xs.len() - 1)];
        let refined = golden_min(|x| ln_ratio(mu, x), a, b);
        vals[best].min(refined).exp()
    };
    let outer = -golden_min(|mu| -inner(mu), 0.0, 1.0);
    outer.max(inner(0.0)).max(inner(1.0))
}

pub(crate) fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

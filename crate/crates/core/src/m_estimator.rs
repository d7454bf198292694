//! ψ-functions, the estimating-equation solver and per-sample sensitivities.
//!
//! A location ψ is stored as a one-argument profile evaluated at `x - θ`, a
//! scale ψ as a profile evaluated at `x / θ`. The partials in `x` and `θ`
//! follow from the chain rule, so every profile only has to supply its value
//! and derivative.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance below which a sample counts as sitting on a ψ′ breakpoint.
pub const BREAKPOINT_GUARD: f64 = 1e-9;
/// Points on the sign-change scan of the estimating equation.
pub const SCAN_POINTS: usize = 512;
/// Bracket doublings before giving up on a sign change.
pub const MAX_DOUBLINGS: usize = 64;

/// How ψ depends on the parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiKind {
    Location,
    Scale,
    General,
}

impl fmt::Display for PsiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Location => "location",
            Self::Scale => "scale",
            Self::General => "general",
        })
    }
}

/// One-argument ψ for location (`u = x - θ`) or scale (`u = x / θ`) kinds.
pub trait Profile: Send + Sync + fmt::Debug {
    fn value(&self, u: f64) -> f64;

    fn derivative(&self, u: f64) -> f64;

    /// Points where the derivative jumps, in `u` coordinates.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Exact `sup |ψ(u)|` over `[lo, hi]` when it is cheap to know.
    fn sup_abs_on(&self, _lo: f64, _hi: f64) -> Option<f64> {
        None
    }

    /// Exact `sup |ψ′(u)|` over `[lo, hi]` when it is cheap to know.
    fn sup_abs_derivative_on(&self, _lo: f64, _hi: f64) -> Option<f64> {
        None
    }
}

type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Form {
    Location(Arc<dyn Profile>),
    Scale(Arc<dyn Profile>),
    General {
        psi: Fn2,
        dx: Fn2,
        dtheta: Fn2,
        breakpoints: Vec<f64>,
    },
}

/// An M-estimator's defining function together with its partials.
#[derive(Clone)]
pub struct PsiSpec {
    label: String,
    form: Form,
    factor: f64,
}

impl fmt::Debug for PsiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PsiSpec")
            .field("label", &self.label)
            .field("kind", &self.kind())
            .field("factor", &self.factor)
            .finish()
    }
}

impl PsiSpec {
    pub fn location(label: impl Into<String>, profile: Arc<dyn Profile>) -> Self {
        Self {
            label: label.into(),
            form: Form::Location(profile),
            factor: 1.0,
        }
    }

    pub fn scale(label: impl Into<String>, profile: Arc<dyn Profile>) -> Self {
        Self {
            label: label.into(),
            form: Form::Scale(profile),
            factor: 1.0,
        }
    }

    /// A ψ(x, θ) with no location or scale structure. `breakpoints` are in
    /// `x` coordinates.
    pub fn general<P, X, T>(
        label: impl Into<String>,
        psi: P,
        dx: X,
        dtheta: T,
        breakpoints: Vec<f64>,
    ) -> Self
    where
        P: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        X: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        T: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            form: Form::General {
                psi: Arc::new(psi),
                dx: Arc::new(dx),
                dtheta: Arc::new(dtheta),
                breakpoints,
            },
            factor: 1.0,
        }
    }

    /// `c·ψ`; the estimator it defines is unchanged for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "psi multiplier must be finite and positive (got {c})"
            )));
        }
        Ok(Self {
            factor: self.factor * c,
            ..self.clone()
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> PsiKind {
        match self.form {
            Form::Location(_) => PsiKind::Location,
            Form::Scale(_) => PsiKind::Scale,
            Form::General { .. } => PsiKind::General,
        }
    }

    pub fn profile(&self) -> Option<&Arc<dyn Profile>> {
        match &self.form {
            Form::Location(p) | Form::Scale(p) => Some(p),
            Form::General { .. } => None,
        }
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn psi(&self, x: f64, theta: f64) -> f64 {
        self.factor
            * match &self.form {
                Form::Location(p) => p.value(x - theta),
                Form::Scale(p) => p.value(x / theta),
                Form::General { psi, .. } => psi(x, theta),
            }
    }

    pub fn psi_dx(&self, x: f64, theta: f64) -> f64 {
        self.factor
            * match &self.form {
                Form::Location(p) => p.derivative(x - theta),
                Form::Scale(p) => p.derivative(x / theta) / theta,
                Form::General { dx, .. } => dx(x, theta),
            }
    }

    pub fn psi_dtheta(&self, x: f64, theta: f64) -> f64 {
        self.factor
            * match &self.form {
                Form::Location(p) => -p.derivative(x - theta),
                Form::Scale(p) => -p.derivative(x / theta) * x / (theta * theta),
                Form::General { dtheta, .. } => dtheta(x, theta),
            }
    }

    /// ψ′ breakpoints mapped to `x` coordinates at parameter `theta`, sorted.
    pub fn breakpoints_x(&self, theta: f64) -> Vec<f64> {
        let mut out: Vec<f64> = match &self.form {
            Form::Location(p) => p.breakpoints().into_iter().map(|b| b + theta).collect(),
            Form::Scale(p) => p.breakpoints().into_iter().map(|b| b * theta).collect(),
            Form::General { breakpoints, .. } => breakpoints.clone(),
        };
        out.sort_by(f64::total_cmp);
        out
    }

    fn to_profile_interval(&self, lo: f64, hi: f64, theta: f64) -> Option<(f64, f64)> {
        match self.form {
            Form::Location(_) => Some((lo - theta, hi - theta)),
            Form::Scale(_) => {
                let (a, b) = (lo / theta, hi / theta);
                Some((a.min(b), a.max(b)))
            }
            Form::General { .. } => None,
        }
    }

    /// `sup |∂ψ/∂x|` over `x ∈ [lo, hi]` if the profile knows it exactly.
    pub fn sup_abs_dx_on(&self, lo: f64, hi: f64, theta: f64) -> Option<f64> {
        let (a, b) = self.to_profile_interval(lo, hi, theta)?;
        let s = self.profile()?.sup_abs_derivative_on(a, b)?;
        Some(match self.form {
            Form::Scale(_) => self.factor * s / theta.abs(),
            _ => self.factor * s,
        })
    }

    /// `sup |ψ(x, θ)|` over `x ∈ [lo, hi]` if the profile knows it exactly.
    pub fn sup_abs_on(&self, lo: f64, hi: f64, theta: f64) -> Option<f64> {
        let (a, b) = self.to_profile_interval(lo, hi, theta)?;
        Some(self.factor * self.profile()?.sup_abs_on(a, b)?)
    }

    fn breakpoint_collision(&self, x: f64, theta: f64) -> bool {
        match &self.form {
            Form::Location(p) => p
                .breakpoints()
                .iter()
                .any(|b| (x - theta - b).abs() <= BREAKPOINT_GUARD),
            Form::Scale(p) => p
                .breakpoints()
                .iter()
                .any(|b| (x / theta - b).abs() <= BREAKPOINT_GUARD),
            Form::General { breakpoints, .. } => breakpoints
                .iter()
                .any(|b| (x - b).abs() <= BREAKPOINT_GUARD),
        }
    }
}

/// `ψ(u) = u`.
#[derive(Debug, Clone, Copy)]
pub struct Identity;

impl Profile for Identity {
    fn value(&self, u: f64) -> f64 {
        u
    }

    fn derivative(&self, _u: f64) -> f64 {
        1.0
    }

    fn sup_abs_on(&self, lo: f64, hi: f64) -> Option<f64> {
        Some(lo.abs().max(hi.abs()))
    }

    fn sup_abs_derivative_on(&self, _lo: f64, _hi: f64) -> Option<f64> {
        Some(1.0)
    }
}

/// `ψ(u) = min(b, max(u, -b))`.
#[derive(Debug, Clone, Copy)]
pub struct Huber {
    pub b: f64,
}

impl Profile for Huber {
    fn value(&self, u: f64) -> f64 {
        u.clamp(-self.b, self.b)
    }

    fn derivative(&self, u: f64) -> f64 {
        if u.abs() < self.b {
            1.0
        } else {
            0.0
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![-self.b, self.b]
    }

    fn sup_abs_on(&self, lo: f64, hi: f64) -> Option<f64> {
        Some(lo.abs().max(hi.abs()).min(self.b))
    }

    fn sup_abs_derivative_on(&self, lo: f64, hi: f64) -> Option<f64> {
        Some(if hi > -self.b && lo < self.b {
            1.0
        } else {
            0.0
        })
    }
}

/// `ψ(u) = u² - 1`.
#[derive(Debug, Clone, Copy)]
pub struct SquareMinusOne;

impl Profile for SquareMinusOne {
    fn value(&self, u: f64) -> f64 {
        u * u - 1.0
    }

    fn derivative(&self, u: f64) -> f64 {
        2.0 * u
    }

    fn sup_abs_on(&self, lo: f64, hi: f64) -> Option<f64> {
        let m = lo.abs().max(hi.abs());
        let inner = if lo <= 0.0 && hi >= 0.0 { 1.0 } else { 0.0 };
        Some((m * m - 1.0).abs().max(inner))
    }

    fn sup_abs_derivative_on(&self, lo: f64, hi: f64) -> Option<f64> {
        Some(2.0 * lo.abs().max(hi.abs()))
    }
}

/// The built-in estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum BuiltinPsi {
    Mean,
    Huber { b: f64 },
    GaussianScaleMle,
}

impl BuiltinPsi {
    /// Parse `mean`, `huber` or `gaussian-scale-mle`; `b` is required for huber.
    pub fn parse(name: &str, b: Option<f64>) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Self::Mean),
            "huber" => b.map(|b| Self::Huber { b }).ok_or_else(|| {
                Error::InvalidParameter("huber requires a corner parameter b".into())
            }),
            "gaussian-scale-mle" => Ok(Self::GaussianScaleMle),
            other => Err(Error::InvalidParameter(format!(
                "unknown builtin psi {other:?} (expected mean, huber or gaussian-scale-mle)"
            ))),
        }
    }
}

impl FromStr for BuiltinPsi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, None)
    }
}

pub fn builtin_psi(name: BuiltinPsi) -> Result<PsiSpec> {
    match name {
        BuiltinPsi::Mean => Ok(PsiSpec::location("mean", Arc::new(Identity))),
        BuiltinPsi::Huber { b } => {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "huber corner b must satisfy 0 < b < inf (got {b})"
                )));
            }
            Ok(PsiSpec::location(
                format!("huber({b})"),
                Arc::new(Huber { b }),
            ))
        }
        BuiltinPsi::GaussianScaleMle => Ok(PsiSpec::scale(
            "gaussian-scale-mle",
            Arc::new(SquareMinusOne),
        )),
    }
}

/// Solution of `Σ ψ(x_n, T_N) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MEstimate {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

/// `c_n = ∂T_N/∂x_n` and the shared denominator `Σ ∂ψ/∂θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub c: Vec<f64>,
    pub denom: f64,
}

/// Anything that maps a data vector to a scalar estimate.
pub trait Estimator: Sync {
    fn estimate(&self, data: &[f64]) -> Result<f64>;
}

impl Estimator for PsiSpec {
    fn estimate(&self, data: &[f64]) -> Result<f64> {
        solve(self, data).map(|e| e.value)
    }
}

fn check_data(data: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("data must be nonempty".into()));
    }
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "data[{i}] = {} is not finite",
            data[i]
        )));
    }
    Ok(())
}

fn median_of(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sorted(data: &[f64]) -> Vec<f64> {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

struct Equation<'a> {
    psi: &'a PsiSpec,
    data: &'a [f64],
}

impl Equation<'_> {
    fn eval(&self, theta: f64) -> f64 {
        self.data.iter().map(|&x| self.psi.psi(x, theta)).sum()
    }
}

#[derive(Clone, Copy)]
enum Spacing {
    Linear,
    Geometric,
}

impl Spacing {
    fn grid(self, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let last = (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i == 0 {
                    lo
                } else if i == n - 1 {
                    hi
                } else {
                    let t = i as f64 / last;
                    match self {
                        Spacing::Linear => lo + (hi - lo) * t,
                        Spacing::Geometric => lo * (hi / lo).powf(t),
                    }
                }
            })
            .collect()
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Bisect a sign change down to adjacent floats (or `abs_floor`).
fn bisect(eq: &Equation<'_>, mut lo: f64, mut hi: f64, abs_floor: f64) -> (f64, usize) {
    let mut flo = eq.eval(lo);
    let fhi = eq.eval(hi);
    if flo == 0.0 {
        return (lo, 0);
    }
    if fhi == 0.0 {
        return (hi, 0);
    }
    let mut best_hi = fhi.abs();
    let mut iterations = 0;
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi || hi - lo <= abs_floor {
            break;
        }
        iterations += 1;
        let fm = eq.eval(mid);
        if fm == 0.0 {
            return (mid, iterations);
        }
        if sign(fm) == sign(flo) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            best_hi = fm.abs();
        }
    }
    if flo.abs() <= best_hi {
        (lo, iterations)
    } else {
        (hi, iterations)
    }
}

/// Solve `Σ ψ(x_n, T) = 0` for `T`.
///
/// The bracket is expanded until its ends differ in sign, then scanned on
/// [`SCAN_POINTS`] points. Exactly one sign change is bisected to full
/// precision; more than one (or an interval of exact zeros) is reported as
/// [`Error::AmbiguousRoot`].
pub fn solve(psi: &PsiSpec, data: &[f64]) -> Result<MEstimate> {
    check_data(data)?;
    let eq = Equation { psi, data };
    let s = sorted(data);
    let max_abs = s.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let (mut lo, mut hi, spacing, scale) = match psi.kind() {
        PsiKind::Scale => {
            if max_abs == 0.0 {
                return Err(Error::NoRoot { doublings: 0 });
            }
            let lo = 1e-6 * max_abs;
            let hi = (2.0 * max_abs * max_abs).max(2.0 * max_abs);
            (lo, hi, Spacing::Geometric, max_abs)
        }
        PsiKind::Location | PsiKind::General => {
            let med = median_of(&s);
            let dev = sorted(&s.iter().map(|x| (x - med).abs()).collect::<Vec<_>>());
            let mut w = 1.4826 * median_of(&dev);
            if w == 0.0 {
                w = 0.5 * (s[s.len() - 1] - s[0]);
            }
            if w == 0.0 {
                w = med.abs().max(1.0) * 1e-3;
            }
            (med - w, med + w, Spacing::Linear, w.max(med.abs()))
        }
    };

    let mut doublings = 0;
    loop {
        let (a, b) = (eq.eval(lo), eq.eval(hi));
        if a.is_nan() || b.is_nan() {
            return Err(Error::Degenerate(format!(
                "estimating equation is NaN on the bracket [{lo}, {hi}]"
            )));
        }
        if sign(a) * sign(b) <= 0 {
            break;
        }
        if doublings == MAX_DOUBLINGS {
            return Err(Error::NoRoot { doublings });
        }
        doublings += 1;
        match spacing {
            Spacing::Geometric => {
                lo *= 0.5;
                hi *= 2.0;
            }
            Spacing::Linear => {
                let c = 0.5 * (lo + hi);
                let w = hi - lo;
                lo = c - w;
                hi = c + w;
            }
        }
    }

    let grid = spacing.grid(lo, hi, SCAN_POINTS);
    let vals: Vec<f64> = grid.iter().map(|&t| eq.eval(t)).collect();
    if vals.iter().any(|v| v.is_nan()) {
        return Err(Error::Degenerate(
            "estimating equation is NaN inside the bracket".into(),
        ));
    }

    enum Found {
        Exact(f64),
        Bracket(f64, f64),
        Flat(f64, f64),
    }
    let mut found = Vec::new();
    let mut i = 0;
    while i < grid.len() {
        if vals[i] == 0.0 {
            let mut j = i;
            while j + 1 < grid.len() && vals[j + 1] == 0.0 {
                j += 1;
            }
            found.push(if j > i {
                Found::Flat(grid[i], grid[j])
            } else {
                Found::Exact(grid[i])
            });
            i = j + 1;
            continue;
        }
        if i + 1 < grid.len() && vals[i + 1] != 0.0 && sign(vals[i]) != sign(vals[i + 1]) {
            found.push(Found::Bracket(grid[i], grid[i + 1]));
        }
        i += 1;
    }

    // Only stops short of adjacent floats for a root at (or within 1e-290 of) zero.
    let abs_floor = 1e-290 * scale;
    let ambiguous = found.len() != 1 || matches!(found[0], Found::Flat(..));
    if ambiguous {
        let mut roots = Vec::new();
        for f in &found {
            match *f {
                Found::Exact(t) => roots.push(t),
                Found::Bracket(a, b) => roots.push(bisect(&eq, a, b, abs_floor).0),
                Found::Flat(a, b) => {
                    roots.push(a);
                    roots.push(b);
                }
            }
        }
        if roots.is_empty() {
            return Err(Error::NoRoot { doublings });
        }
        return Err(Error::AmbiguousRoot { roots });
    }

    let (value, iterations, bracket) = match found[0] {
        Found::Exact(t) => (t, 0, (t, t)),
        Found::Bracket(a, b) => {
            let (t, it) = bisect(&eq, a, b, abs_floor);
            (t, it, (a, b))
        }
        Found::Flat(..) => unreachable!(),
    };
    let residual = eq.eval(value);
    let magnitude = data
        .iter()
        .fold(1.0f64, |m, &x| m.max(psi.psi(x, value).abs()));
    if residual.abs() > data.len() as f64 * 1e-10 * magnitude {
        return Err(Error::Degenerate(format!(
            "estimating equation jumps across zero at {value} (residual {residual:.3e}); psi is discontinuous there"
        )));
    }
    Ok(MEstimate {
        value,
        residual,
        iterations,
        bracket,
    })
}

/// `c_n = -∂ψ/∂x(x_n, T_N) / Σ_m ∂ψ/∂θ(x_m, T_N)`.
pub fn sensitivity(psi: &PsiSpec, data: &[f64], est: &MEstimate) -> Result<Sensitivity> {
    check_data(data)?;
    let t = est.value;
    if let Some(index) = data.iter().position(|&x| psi.breakpoint_collision(x, t)) {
        return Err(Error::BreakpointAmbiguity {
            index,
            value: data[index],
        });
    }
    let dtheta: Vec<f64> = data.iter().map(|&x| psi.psi_dtheta(x, t)).collect();
    let denom: f64 = dtheta.iter().sum();
    let scale: f64 = dtheta.iter().map(|v| v.abs()).sum();
    if denom == 0.0 || denom.abs() <= 1e-14 * scale || !denom.is_finite() {
        return Err(Error::Degenerate(format!(
            "sum of dpsi/dtheta at T_N = {t} is {denom:e}"
        )));
    }
    let c = data.iter().map(|&x| -psi.psi_dx(x, t) / denom).collect();
    Ok(Sensitivity { c, denom })
}

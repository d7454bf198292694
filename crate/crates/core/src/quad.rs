//! Adaptive Gauss–Kronrod (7/15) quadrature over finite and infinite intervals.
//!
//! The integration range is first split at the caller's breakpoints, then each
//! piece is refined by bisecting whichever subinterval carries the largest
//! error estimate. Half-lines are mapped onto `[0, 1)` with `x = c ± t/(1 - t)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_subdivisions: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

/// Value of an integral together with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Identity,
    /// x = origin + t / (1 - t), t in [0, 1)
    Upper(f64),
    /// x = origin - t / (1 - t), t in [0, 1)
    Lower(f64),
}

impl Map {
    #[inline]
    fn apply<F: Fn(f64) -> f64>(&self, f: &F, t: f64) -> f64 {
        match *self {
            Map::Identity => f(t),
            Map::Upper(c) => {
                let s = 1.0 - t;
                f(c + t / s) / (s * s)
            }
            Map::Lower(c) => {
                let s = 1.0 - t;
                f(c - t / s) / (s * s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    map: Map,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, map: Map, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = map.apply(f, center);
    let mut gauss = fc * WG[3];
    let mut kron = fc * WGK[7];
    let mut res_abs = kron.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = map.apply(f, center - dx);
        let f2 = map.apply(f, center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kron += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kron;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kron * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((kron - gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

/// Integrate `f` over `[lo, hi]` (either end may be infinite), splitting at
/// every breakpoint strictly inside the range.
pub fn integrate<F>(
    f: F,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    if lo.is_nan() || hi.is_nan() {
        return Err(Error::InvalidParameter("NaN integration limit".into()));
    }
    if lo == hi {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if lo > hi {
        let r = integrate(f, hi, lo, breakpoints, opts)?;
        return Ok(Integral {
            value: -r.value,
            ..r
        });
    }

    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|b| b.is_finite() && *b > lo && *b < hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    if cuts.is_empty() && lo.is_infinite() && hi.is_infinite() {
        cuts.push(0.0);
    }
    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(lo);
    nodes.extend(cuts);
    nodes.push(hi);

    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (map, ta, tb) = match (a.is_finite(), b.is_finite()) {
            (true, true) => (Map::Identity, a, b),
            (true, false) => (Map::Upper(a), 0.0, 1.0),
            (false, true) => (Map::Lower(b), 0.0, 1.0),
            (false, false) => unreachable!("doubly infinite panels are split at 0"),
        };
        let (value, error) = kronrod(&f, map, ta, tb);
        evaluations += 15;
        heap.push(Panel {
            a: ta,
            b: tb,
            map,
            value,
            error,
        });
    }

    let total = |heap: &BinaryHeap<Panel>| -> (f64, f64) {
        heap.iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
    };

    let mut subdivisions = heap.len();
    loop {
        let (value, error) = total(&heap);
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::QuadratureFailure {
                achieved: f64::INFINITY,
                requested: opts.abs_tol,
            });
        }
        let tol = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= tol {
            return Ok(Integral {
                value,
                error,
                evaluations,
            });
        }
        if subdivisions >= opts.max_subdivisions {
            return Err(Error::QuadratureFailure {
                achieved: error,
                requested: tol,
            });
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split any further in f64.
            return Err(Error::QuadratureFailure {
                achieved: error,
                requested: tol,
            });
        }
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = kronrod(&f, worst.map, a, b);
            evaluations += 15;
            heap.push(Panel {
                a,
                b,
                map: worst.map,
                value,
                error,
            });
        }
        subdivisions += 1;
    }
}

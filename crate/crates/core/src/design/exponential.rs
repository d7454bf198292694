//! Closed-form tradeoff design for `F(x) = 1 - e^{-x}`, `x ≥ 0`.

use crate::error::{Error, Result};

const SCAN_POINTS: usize = 1000;

/// `h(a) = ((ξ+1)a + ξ+2) e^{-a} - (ξ+2-a)`. The boundary `a` of the active
/// region is its positive root.
fn h(xi: f64, a: f64) -> f64 {
    ((xi + 1.0) * a + xi + 2.0) * (-a).exp() - (xi + 2.0 - a)
}

/// Positive root of `h` on `(0, ξ+2)`, with the number of sign changes seen
/// on a geometric scan of that interval.
pub(crate) fn boundary(xi: f64) -> Result<(f64, usize)> {
    if !(xi.is_finite() && xi > 1.0) {
        return Err(Error::OutOfRegime(xi));
    }
    let hi = xi + 2.0;
    let lo = hi * 1e-3;
    // h ≈ -ξa²/2 near zero, so the root is the unique sign change above 0.
    let xs: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| lo * (hi / lo).powf(i as f64 / SCAN_POINTS as f64))
        .collect();
    let vals: Vec<f64> = xs.iter().map(|&a| h(xi, a)).collect();
    let changes: Vec<usize> = (0..SCAN_POINTS)
        .filter(|&i| vals[i].signum() != vals[i + 1].signum())
        .collect();
    if changes.len() != 1 {
        return Err(Error::Degenerate(format!(
            "expected one positive root of the boundary equation for xi = {xi}, found {}",
            changes.len()
        )));
    }
    let (mut a, mut b) = (xs[changes[0]], xs[changes[0] + 1]);
    let fa_neg = h(xi, a) < 0.0;
    loop {
        let mid = a + 0.5 * (b - a);
        if mid <= a || mid >= b {
            break;
        }
        if (h(xi, mid) < 0.0) == fa_neg {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((a + 0.5 * (b - a), changes.len()))
}

/// `(a, ν, ϑ₁)` for budget ξ.
pub(crate) fn multipliers(xi: f64) -> Result<(f64, f64, f64)> {
    let (a, _) = boundary(xi)?;
    let nu = (xi + 2.0) / a;
    // Equal to (ξ+2-a)/a² at the root, without the cancellation.
    let theta1 = ((xi + 1.0) * a + xi + 2.0) * (-a).exp() / (a * a);
    Ok((a, nu, theta1))
}

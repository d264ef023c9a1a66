//! Real branches of the Lambert W function, refined by Halley iteration.

use std::f64::consts::E;

use crate::error::{Error, Result};

const BRANCH_POINT: f64 = -1.0 / E;
const TOL: f64 = 1e-14;
const MAX_ITER: usize = 64;

/// Halley's method on `f(w) = w e^w - x`.
fn halley(x: f64, mut w: f64) -> f64 {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= TOL * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

/// Series about the branch point in `p = ±sqrt(2(e x + 1))`.
fn branch_series(p: f64) -> f64 {
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

fn check_domain(x: f64) -> Result<()> {
    // values within rounding of -1/e are treated as the branch point
    if x.is_nan() || x < BRANCH_POINT - 4.0 * f64::EPSILON {
        return Err(Error::NoRealSolution { arg: x });
    }
    Ok(())
}

/// Principal branch `W_0(x)` for `x >= -1/e`, with `W_0(-1/e) = -1`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    check_domain(x)?;
    if x <= BRANCH_POINT {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let start = if x < -0.25 {
        branch_series((2.0 * (E * x + 1.0)).max(0.0).sqrt())
    } else if x < 3.0 {
        // log1p is a decent start from -0.25 through moderate x
        x.ln_1p() * 0.8
    } else {
        let l = x.ln();
        l - l.ln()
    };
    Ok(halley(x, start))
}

/// Lower branch `W_{-1}(x)` for `-1/e <= x < 0`.
pub fn lambert_wm1(x: f64) -> Result<f64> {
    check_domain(x)?;
    if x >= 0.0 {
        return Err(Error::NoRealSolution { arg: x });
    }
    if x <= BRANCH_POINT {
        return Ok(-1.0);
    }
    let start = if x < -0.25 {
        branch_series(-(2.0 * (E * x + 1.0)).max(0.0).sqrt())
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2
    };
    Ok(halley(x, start))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(w: f64, x: f64) -> f64 {
        (w * w.exp() - x).abs() / x.abs().max(1e-300)
    }

    #[test]
    fn known_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-14);
        // omega constant
        assert!((lambert_w0(1.0).unwrap() - 0.567_143_290_409_783_8).abs() < 1e-14);
        assert_eq!(lambert_w0(BRANCH_POINT).unwrap(), -1.0);
        assert_eq!(lambert_wm1(BRANCH_POINT).unwrap(), -1.0);
        let w = lambert_wm1(-0.1).unwrap();
        assert!((w - -3.577_152_063_957_297).abs() < 1e-12);
    }

    #[test]
    fn both_branches_invert_on_negative_domain() {
        let mut x = BRANCH_POINT + 1e-9;
        while x < -1e-12 {
            let w0 = lambert_w0(x).unwrap();
            let wm = lambert_wm1(x).unwrap();
            assert!(w0 >= -1.0 && wm <= -1.0, "x={x} w0={w0} wm={wm}");
            assert!(residual(w0, x) < 1e-10, "w0 residual at {x}");
            assert!(residual(wm, x) < 1e-10, "wm1 residual at {x}");
            x *= 0.7;
        }
    }

    #[test]
    fn principal_branch_positive_domain() {
        for &x in &[1e-10, 0.3, 2.0, 10.0, 1e3, 1e10] {
            let w = lambert_w0(x).unwrap();
            assert!(residual(w, x) < 1e-12, "x={x}");
        }
    }

    #[test]
    fn outside_domain() {
        assert!(matches!(lambert_w0(-0.5), Err(Error::NoRealSolution { .. })));
        assert!(lambert_wm1(0.5).is_err());
    }
}

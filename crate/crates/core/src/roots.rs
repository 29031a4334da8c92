//! Bracketing root finders: an Illinois regula-falsi / bisection hybrid plus
//! geometric bracket expansion.

use crate::{Error, Result};

pub const MAX_DOUBLINGS: u32 = 60;
const MAX_ITER: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Find a root of `f` in `[lo, hi]` given `f(lo)` and `f(hi)` of opposite sign.
///
/// Illinois steps are used while they shrink the bracket fast enough; otherwise the
/// step falls back to bisection. Stops once the bracket is narrower than `tol`.
pub fn find_root<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    bracketed(&mut f, lo, hi, f_lo, f_hi, tol)
}

/// Same as [`find_root`] when both end values are already known.
pub fn bracketed<F>(
    f: &mut F,
    mut lo: f64,
    mut hi: f64,
    mut f_lo: f64,
    mut f_hi: f64,
    tol: f64,
) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    if f_lo == 0.0 {
        return Ok(Root {
            x: lo,
            fx: 0.0,
            iterations: 0,
        });
    }
    if f_hi == 0.0 {
        return Ok(Root {
            x: hi,
            fx: 0.0,
            iterations: 0,
        });
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::InvalidBracket(format!(
            "no sign change on [{lo}, {hi}]: f = ({f_lo}, {f_hi})"
        )));
    }
    // which end was retained last time (for the Illinois halving)
    let mut side = 0i8;
    let mut width = hi - lo;
    for it in 1..=MAX_ITER {
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let bisect = it % 3 == 0 && (hi - lo) > 0.5 * width;
        if bisect || !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        if it % 3 == 0 {
            width = hi - lo;
        }
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(Root {
                x,
                fx,
                iterations: it,
            });
        }
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            let (x, fx) = if f_lo.abs() < f_hi.abs() {
                (lo, f_lo)
            } else {
                (hi, f_hi)
            };
            return Ok(Root {
                x,
                fx,
                iterations: it,
            });
        }
    }
    let x = 0.5 * (lo + hi);
    Ok(Root {
        x,
        fx: f(x)?,
        iterations: MAX_ITER,
    })
}

/// Expand `start + dir * step * 2^k` (k = 0, 1, ...) until `accept(f(x))` holds.
///
/// Returns the last rejected point with its value and the first accepted one.
pub fn expand<F, P>(
    mut f: F,
    start: f64,
    dir: f64,
    step: f64,
    accept: P,
) -> Result<((f64, f64), (f64, f64))>
where
    F: FnMut(f64) -> Result<f64>,
    P: Fn(f64) -> bool,
{
    let mut prev = (start, f(start)?);
    if accept(prev.1) {
        return Ok((prev, prev));
    }
    for k in 0..=MAX_DOUBLINGS {
        let x = start + dir * step * 2f64.powi(k as i32);
        let fx = f(x)?;
        if accept(fx) {
            return Ok((prev, (x, fx)));
        }
        prev = (x, fx);
    }
    Err(Error::BracketExpansion(format!(
        "no acceptable point within {MAX_DOUBLINGS} doublings from {start}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_and_kinked_roots() {
        let r = find_root(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-14).unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-13);
        let r = find_root(
            |x: f64| Ok((x - 0.3).abs() * 3.0 + (x - 0.3) - 0.01),
            0.0,
            0.3,
            1e-14,
        )
        .unwrap();
        assert!((r.x - 0.295).abs() < 1e-12);
        let r = find_root(|x: f64| Ok(x.powi(9)), -1.0, 3.0, 1e-12).unwrap();
        assert!(r.x.abs() < 1e-11);
    }

    #[test]
    fn no_sign_change() {
        assert!(matches!(
            find_root(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-10),
            Err(Error::InvalidBracket(_))
        ));
    }

    #[test]
    fn expansion() {
        let ((x0, _), (x1, f1)) = expand(|x| Ok(x - 100.0), 0.0, 1.0, 1.0, |v| v > 0.0).unwrap();
        assert_eq!((x0, x1), (64.0, 128.0));
        assert!(f1 > 0.0);
        assert!(expand(|_| Ok(-1.0), 0.0, -1.0, 1.0, |v| v > 0.0).is_err());
    }
}

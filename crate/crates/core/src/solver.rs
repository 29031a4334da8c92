//! Average cost, first-order conditions and the boundary solvers.
//!
//! The two-boundary problem is reduced to the scalar equation `g(a) = 0` where
//! `b_a` solves `pi1(b_a) = pi2(a)` on `[xhat1, inf)`; `g` is increasing on its
//! domain, so a bracketing search downward from the domain's upper endpoint
//! finds the unique root.

use serde::Serialize;

use crate::model::{PiPair, Problem};
use crate::quad::Direction;
use crate::roots::{self, Root};
use crate::{Error, Result};

/// Relative tolerance on first-order residuals, scaled by `q_u + q_d`.
pub const FOC_TOL_FACTOR: f64 = 1e-6;

// a one-sided tail counts as unattainable once ln S' has grown by this much
const SCALE_TAIL_GROWTH: f64 = 36.0;

pub fn foc_tol(p: &Problem) -> f64 {
    FOC_TOL_FACTOR * p.q_sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Ok,
    /// Solved, but a residual or cross-check exceeded its tolerance.
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Only downward control at an upper boundary `b`.
    DownControl,
    /// Only upward control at a lower boundary `a`.
    UpControl,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoBoundarySolution {
    pub a_star: f64,
    pub b_star: f64,
    pub lambda_star: f64,
    pub residual_i1: f64,
    pub residual_i2: f64,
    /// `|pi1(b*) - pi2(a*)|`
    pub residual_match: f64,
    pub iterations: usize,
    /// Upper endpoint of the domain of `g`.
    pub domain_endpoint: f64,
    pub pi: PiPair,
    pub status: SolveStatus,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OneSidedSolution {
    pub boundary: f64,
    pub lambda: f64,
    pub residual: f64,
    pub side: Side,
    pub iterations: usize,
}

fn require_order(a: f64, b: f64) -> Result<()> {
    if !(a < b) {
        return Err(Error::OutOfDomain(format!("need a < b, got ({a}, {b})")));
    }
    Ok(())
}

/// `C(a, b) = [∫_a^b c m' + q_u / S'(a) + q_d / S'(b)] / m(a, b)`.
pub fn average_cost(p: &Problem, a: f64, b: f64) -> Result<f64> {
    require_order(a, b)?;
    let num = p.speed_integral(|t| p.c(t), a, b)?
        + p.cost().q_u * p.inv_scale_density(a)?
        + p.cost().q_d * p.inv_scale_density(b)?;
    Ok(num / p.speed_measure(a, b)?)
}

/// `I1(a, b) = ∫_a^b (pi1(t) - pi1(b)) m'(t) dt + (q_u + q_d) / S'(a)`; defined for `a <= b`.
pub fn foc_i1(p: &Problem, a: f64, b: f64) -> Result<f64> {
    if !(a <= b) {
        return Err(Error::OutOfDomain(format!("need a <= b, got ({a}, {b})")));
    }
    let pb = p.pi1(b);
    let tail = p.q_sum() * p.inv_scale_density(a)?;
    if a == b {
        return Ok(tail);
    }
    Ok(p.speed_integral(|t| p.pi1(t) - pb, a, b)? + tail)
}

/// `I2(a, b) = ∫_a^b (pi2(t) - pi2(a)) m'(t) dt + (q_u + q_d) / S'(b)`; defined for `a <= b`.
pub fn foc_i2(p: &Problem, a: f64, b: f64) -> Result<f64> {
    if !(a <= b) {
        return Err(Error::OutOfDomain(format!("need a <= b, got ({a}, {b})")));
    }
    let pa = p.pi2(a);
    let tail = p.q_sum() * p.inv_scale_density(b)?;
    if a == b {
        return Ok(tail);
    }
    Ok(p.speed_integral(|t| p.pi2(t) - pa, a, b)? + tail)
}

fn slack(v: f64) -> f64 {
    1e-12 * (1.0 + v.abs())
}

/// Upper endpoint of the set of `a` on which `b_a` is defined.
///
/// Case analysis on `pi1(xhat1)`, `pi2(xhat2)`, `pi1(xhat2)`, `pi2(xhat1)`: the
/// endpoint is `ahat` (where `pi2(ahat) = pi1(xhat1)`), `xhat2`, or the crossing
/// `xtilde` of `pi1` and `pi2` in `[xhat1, xhat2]`.
pub fn g_domain_endpoint(p: &Problem, pi: &PiPair) -> Result<f64> {
    let (x1, x2) = (pi.xhat1, pi.xhat2);
    let p11 = p.pi1(x1);
    let p22 = p.pi2(x2);
    if x1 >= x2 {
        return if p11 >= p22 { ahat(p, pi, p11) } else { Ok(x2) };
    }
    let p21 = p.pi2(x1);
    let p12 = p.pi1(x2);
    if p11 >= p21 {
        ahat(p, pi, p11)
    } else if p22 >= p12 {
        Ok(x2)
    } else {
        // pi1 - pi2 = q mu goes from negative at xhat1 to positive at xhat2
        let r = roots::find_root(|x| Ok(p.pi1(x) - p.pi2(x)), x1, x2, p.root_tol())?;
        Ok(r.x)
    }
}

// root of pi2(x) = level on (-inf, xhat2]
fn ahat(p: &Problem, pi: &PiPair, level: f64) -> Result<f64> {
    let f = |x: f64| Ok(p.pi2(x) - level);
    let top = f(pi.xhat2)?;
    if top >= -slack(level) {
        return Ok(pi.xhat2);
    }
    let ((x0, f0), (x1, f1)) = roots::expand(f, pi.xhat2, -1.0, 1.0, |v| v >= 0.0)
        .map_err(|e| existence(e, "pi2 does not rise to pi1(xhat1) below xhat2"))?;
    Ok(roots::bracketed(&mut |x| f(x), x1, x0, f1, f0, p.root_tol())?.x)
}

fn existence(e: Error, context: &str) -> Error {
    match e {
        Error::BracketExpansion(msg) => Error::ExistenceNotEstablished(format!("{context}: {msg}")),
        Error::Quad(q) => {
            Error::ExistenceNotEstablished(format!("{context}: quadrature failed ({q})"))
        }
        other => other,
    }
}

/// The unique `b >= xhat1` with `pi1(b) = pi2(a)`.
pub fn b_of_a(p: &Problem, pi: &PiPair, a: f64) -> Result<f64> {
    let target = p.pi2(a);
    let p11 = p.pi1(pi.xhat1);
    if !target.is_finite() {
        return Err(Error::OutOfDomain(format!("pi2({a}) is not finite")));
    }
    if target < p11 - slack(p11) {
        return Err(Error::OutOfDomain(format!(
            "b_a undefined at a = {a}: pi2(a) = {target} is below min pi1 = {p11}"
        )));
    }
    if p11 >= target {
        return Ok(pi.xhat1);
    }
    let f = |x: f64| Ok(p.pi1(x) - target);
    let ((x0, f0), (x1, f1)) = roots::expand(f, pi.xhat1, 1.0, 1.0, |v| v >= 0.0).map_err(|e| {
        existence(
            e,
            "pi1 does not reach pi2(a) above xhat1 (limiting assumption (ii))",
        )
    })?;
    Ok(roots::bracketed(&mut |x| f(x), x0, x1, f0, f1, p.root_tol())?.x)
}

/// `g(a) = ∫_a^{b_a} (c - pi1(b_a)) m' + q_d / S'(b_a) + q_u / S'(a)`.
pub fn g_function(p: &Problem, pi: &PiPair, a: f64) -> Result<f64> {
    let b = b_of_a(p, pi, a)?;
    g_at(p, a, b)
}

fn g_at(p: &Problem, a: f64, b: f64) -> Result<f64> {
    let pb = p.pi1(b);
    let boundary =
        p.cost().q_d * p.inv_scale_density(b)? + p.cost().q_u * p.inv_scale_density(a)?;
    if b <= a {
        return Ok(boundary);
    }
    Ok(p.speed_integral(|t| p.c(t) - pb, a, b)? + boundary)
}

/// Solve the two-boundary problem: `a*` is the root of `g`, `b* = b_{a*}` and
/// `lambda* = C(a*, b*)`.
pub fn solve_two_boundary(p: &Problem, pi: &PiPair) -> Result<TwoBoundarySolution> {
    let endpoint = g_domain_endpoint(p, pi)?;
    let g = |a: f64| g_function(p, pi, a);
    let g_end = g(endpoint)?;
    if !(g_end > 0.0) {
        return Err(Error::ExistenceNotEstablished(format!(
            "g is not positive at the upper end of its domain: g({endpoint}) = {g_end}"
        )));
    }
    let mut evaluations = 0usize;
    let ((x_hi, g_hi), (x_lo, g_lo)) = roots::expand(
        |a| {
            evaluations += 1;
            g(a)
        },
        endpoint,
        -1.0,
        1.0,
        |v| v < 0.0,
    )
    .map_err(|e| existence(e, "g has no sign change below its domain endpoint"))?;
    let Root {
        x: a_star,
        iterations,
        ..
    } = roots::bracketed(&mut |a| g(a), x_lo, x_hi, g_lo, g_hi, p.root_tol())?;
    let b_star = b_of_a(p, pi, a_star)?;
    let lambda_star = average_cost(p, a_star, b_star)?;
    let residual_i1 = foc_i1(p, a_star, b_star)?;
    let residual_i2 = foc_i2(p, a_star, b_star)?;
    let residual_match = (p.pi1(b_star) - p.pi2(a_star)).abs();

    let tol = foc_tol(p);
    let mut warnings = pi.diagnostics.clone();
    let mut status = SolveStatus::Ok;
    for (name, r) in [("I1", residual_i1), ("I2", residual_i2)] {
        if !(r.abs() < tol) {
            status = SolveStatus::Warning;
            warnings.push(format!(
                "|{name}(a*, b*)| = {:e} exceeds foc_tol = {tol:e}",
                r.abs()
            ));
        }
    }
    for (name, v) in [("pi1(b*)", p.pi1(b_star)), ("pi2(a*)", p.pi2(a_star))] {
        let gap = (lambda_star - v).abs();
        if gap > 100.0 * tol {
            status = SolveStatus::Warning;
            warnings.push(format!("|lambda* - {name}| = {gap:e} exceeds 100 foc_tol"));
        }
    }
    Ok(TwoBoundarySolution {
        a_star,
        b_star,
        lambda_star,
        residual_i1,
        residual_i2,
        residual_match,
        iterations: evaluations + iterations,
        domain_endpoint: endpoint,
        pi: pi.clone(),
        status,
        warnings,
    })
}

/// `F(b) = ∫_a^b (pi1(b) - pi2(t)) m' - (q_u + q_d) / S'(b)`; zero at the best `b` for a fixed `a`.
pub fn fixed_a_condition(p: &Problem, a: f64, b: f64) -> Result<f64> {
    require_order(a, b)?;
    let pb = p.pi1(b);
    Ok(p.speed_integral(|t| pb - p.pi2(t), a, b)? - p.q_sum() * p.inv_scale_density(b)?)
}

/// `G(a) = ∫_a^b (pi2(a) - pi1(t)) m' - (q_u + q_d) / S'(a)`; zero at the best `a` for a fixed `b`.
pub fn fixed_b_condition(p: &Problem, a: f64, b: f64) -> Result<f64> {
    require_order(a, b)?;
    let pa = p.pi2(a);
    Ok(p.speed_integral(|t| pa - p.pi1(t), a, b)? - p.q_sum() * p.inv_scale_density(a)?)
}

/// Best upper boundary when the lower boundary `a` is imposed.
pub fn solve_b_given_a(p: &Problem, pi: &PiPair, a: f64) -> Result<OneSidedSolution> {
    if !a.is_finite() {
        return Err(Error::OutOfDomain(format!(
            "fixed boundary a = {a} is not finite"
        )));
    }
    // F is increasing beyond xhat1 and negative at both a and xhat1
    let lo = a.max(pi.xhat1);
    let f = |b: f64| {
        if b <= a {
            Ok(-p.q_sum() * p.inv_scale_density(a)?)
        } else {
            fixed_a_condition(p, a, b)
        }
    };
    let ((x0, f0), (x1, f1)) = roots::expand(f, lo, 1.0, 1.0, |v| v > 0.0)
        .map_err(|e| existence(e, "no upper boundary solves the fixed-a condition"))?;
    let root = roots::bracketed(&mut |b| f(b), x0, x1, f0, f1, p.root_tol())?;
    Ok(OneSidedSolution {
        boundary: root.x,
        lambda: average_cost(p, a, root.x)?,
        residual: fixed_a_condition(p, a, root.x)?,
        side: Side::DownControl,
        iterations: root.iterations,
    })
}

/// Best lower boundary when the upper boundary `b` is imposed.
pub fn solve_a_given_b(p: &Problem, pi: &PiPair, b: f64) -> Result<OneSidedSolution> {
    if !b.is_finite() {
        return Err(Error::OutOfDomain(format!(
            "fixed boundary b = {b} is not finite"
        )));
    }
    let hi = b.min(pi.xhat2);
    let f = |a: f64| {
        if a >= b {
            Ok(-p.q_sum() * p.inv_scale_density(b)?)
        } else {
            fixed_b_condition(p, a, b)
        }
    };
    let ((x0, f0), (x1, f1)) = roots::expand(f, hi, -1.0, 1.0, |v| v > 0.0)
        .map_err(|e| existence(e, "no lower boundary solves the fixed-b condition"))?;
    let root = roots::bracketed(&mut |a| f(a), x1, x0, f1, f0, p.root_tol())?;
    Ok(OneSidedSolution {
        boundary: root.x,
        lambda: average_cost(p, root.x, b)?,
        residual: fixed_b_condition(p, root.x, b)?,
        side: Side::UpControl,
        iterations: root.iterations,
    })
}

fn tail_direction(side: Side) -> Direction {
    match side {
        Side::DownControl => Direction::Down,
        Side::UpControl => Direction::Up,
    }
}

fn tail_labels(side: Side) -> (&'static str, &'static str, &'static str) {
    match side {
        Side::DownControl => ("(D1)", "(D2)", "-inf"),
        Side::UpControl => ("(U1)", "(U2)", "+inf"),
    }
}

/// Numerical check that the uncontrolled tail is unattainable: `m` and `c m'`
/// are integrable along it and `S'` grows without bound.
pub fn check_one_sided_conditions(p: &Problem, from: f64, side: Side) -> Result<()> {
    let dir = tail_direction(side);
    let (c1, c2, end) = tail_labels(side);
    for (what, r) in [
        ("m'", p.speed_integral_tail(|_| 1.0, from, dir)),
        ("c m'", p.speed_integral_tail(|t| p.c(t), from, dir)),
    ] {
        match r {
            Ok(v) if v.is_finite() => {}
            Ok(v) => {
                return Err(Error::OneSidedCondition(format!(
                    "{c1}: ∫ {what} towards {end} is {v}"
                )));
            }
            Err(Error::Quad(q)) => {
                return Err(Error::OneSidedCondition(format!(
                    "{c1}: ∫ {what} towards {end} does not converge ({q})"
                )));
            }
            Err(e) => return Err(e),
        }
    }
    let sign = match side {
        Side::DownControl => -1.0,
        Side::UpControl => 1.0,
    };
    let l0 = p.log_scale(from)?;
    for k in 0..=roots::MAX_DOUBLINGS as i32 {
        let l = p.log_scale(from + sign * 2f64.powi(k))?;
        if l - l0 > SCALE_TAIL_GROWTH {
            return Ok(());
        }
    }
    Err(Error::OneSidedCondition(format!(
        "{c2}: S' does not diverge towards {end}"
    )))
}

/// `l1(b) = ∫_{-inf}^b (pi1(b) - pi1(t)) m'(t) dt`.
pub fn l1(p: &Problem, b: f64) -> Result<f64> {
    let pb = p.pi1(b);
    p.speed_integral_tail(|t| pb - p.pi1(t), b, Direction::Down)
}

/// `l2(a) = ∫_a^inf (pi2(a) - pi2(t)) m'(t) dt`.
pub fn l2(p: &Problem, a: f64) -> Result<f64> {
    let pa = p.pi2(a);
    p.speed_integral_tail(|t| pa - p.pi2(t), a, Direction::Up)
}

/// `J1(b)`: average of `pi1` under the stationary law on `(-inf, b]`.
pub fn j1(p: &Problem, b: f64) -> Result<f64> {
    Ok(p.speed_integral_tail(|t| p.pi1(t), b, Direction::Down)?
        / p.speed_integral_tail(|_| 1.0, b, Direction::Down)?)
}

/// `J2(a)`: average of `pi2` under the stationary law on `[a, inf)`.
pub fn j2(p: &Problem, a: f64) -> Result<f64> {
    Ok(p.speed_integral_tail(|t| p.pi2(t), a, Direction::Up)?
        / p.speed_integral_tail(|_| 1.0, a, Direction::Up)?)
}

/// Optimal upper boundary when only downward control is available.
pub fn solve_one_sided_down(p: &Problem, pi: &PiPair) -> Result<OneSidedSolution> {
    check_one_sided_conditions(p, pi.xhat1, Side::DownControl)?;
    let f = |b: f64| l1(p, b);
    let ((x0, f0), (x1, f1)) = roots::expand(f, pi.xhat1, 1.0, 1.0, |v| v > 0.0)
        .map_err(|e| existence(e, "l1 has no sign change above xhat1"))?;
    let root = roots::bracketed(&mut |b| f(b), x0, x1, f0, f1, p.root_tol())?;
    let b = root.x;
    Ok(OneSidedSolution {
        boundary: b,
        lambda: p.pi1(b),
        residual: p.pi1(b) - j1(p, b)?,
        side: Side::DownControl,
        iterations: root.iterations,
    })
}

/// Optimal lower boundary when only upward control is available.
pub fn solve_one_sided_up(p: &Problem, pi: &PiPair) -> Result<OneSidedSolution> {
    check_one_sided_conditions(p, pi.xhat2, Side::UpControl)?;
    let f = |a: f64| l2(p, a);
    let ((x0, f0), (x1, f1)) = roots::expand(f, pi.xhat2, -1.0, 1.0, |v| v > 0.0)
        .map_err(|e| existence(e, "l2 has no sign change below xhat2"))?;
    let root = roots::bracketed(&mut |a| f(a), x1, x0, f1, f0, p.root_tol())?;
    let a = root.x;
    Ok(OneSidedSolution {
        boundary: a,
        lambda: p.pi2(a),
        residual: p.pi2(a) - j2(p, a)?,
        side: Side::UpControl,
        iterations: root.iterations,
    })
}

/// Stationary form of the first-order conditions:
/// `r1 = E[pi1] - pi1(b) + q / (S'(a) m)`, `r2 = E[pi2] - pi2(a) + q / (S'(b) m)`.
pub fn stationary_residuals(p: &Problem, _pi: &PiPair, a: f64, b: f64) -> Result<(f64, f64)> {
    require_order(a, b)?;
    let m = p.speed_measure(a, b)?;
    Ok((foc_i1(p, a, b)? / m, foc_i2(p, a, b)? / m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(mu: &str, sigma: &str, c: &str, q_u: f64, q_d: f64) -> (Problem, PiPair) {
        let p = Problem::from_exprs(mu, sigma, c, q_u, q_d).unwrap();
        let pi = p.default_pi_pair().unwrap();
        (p, pi)
    }

    #[test]
    fn average_cost_examples() {
        let (p, _) = problem("0", "1", "abs(x)", 1.0, 1.0);
        assert!((average_cost(&p, -1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((average_cost(&p, -2.0, 2.0).unwrap() - 1.25).abs() < 1e-12);
        assert!(average_cost(&p, 1.0, 1.0).is_err());
    }

    #[test]
    fn foc_identities() {
        let (p, _) = problem("0", "1", "abs(x)", 1.0, 1.0);
        assert!((foc_i1(&p, 0.3, 0.3).unwrap() - 2.0).abs() < 1e-14);
        let (p, _) = problem("-0.4*x", "1+0.1*x^2", "max(-0.5*x, x)", 0.7, 1.3);
        for (a, b) in [(-1.5, 0.4), (-0.2, 2.0), (0.1, 0.3)] {
            let lhs = foc_i1(&p, a, b).unwrap() - foc_i2(&p, a, b).unwrap();
            let rhs = (p.pi2(a) - p.pi1(b)) * p.speed_measure(a, b).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn driftless_piecewise_cost() {
        let (p, pi) = problem("0", "1", "max(-0.5*x, x)", 1.0, 1.0);
        // b_a = -(k1/k2) a
        assert!((b_of_a(&p, &pi, -1.2).unwrap() - 0.6).abs() < 1e-10);
        // g(a) is twice 1 - (k1 / 2 sigma^2)(1 + k1/k2) a^2 under m' = 2/sigma^2
        let a = -0.9;
        let want = 2.0 * (1.0 - 0.25 * 1.5 * a * a);
        assert!((g_function(&p, &pi, a).unwrap() - want).abs() < 1e-10);
        let s = solve_two_boundary(&p, &pi).unwrap();
        assert!((s.a_star + (8.0f64 / 3.0).sqrt()).abs() < 1e-8);
        assert!((s.b_star - (2.0f64 / 3.0).sqrt()).abs() < 1e-8);
        assert!((s.lambda_star - s.b_star).abs() < 1e-8);
        assert_eq!(s.status, SolveStatus::Ok);
    }

    #[test]
    fn symmetric_drift_closed_form() {
        let (p, pi) = problem("0.1", "1", "abs(x)", 1.0, 1.0);
        let endpoint = g_domain_endpoint(&p, &pi).unwrap();
        assert!((endpoint + 0.2).abs() < 1e-10);
        let s = solve_two_boundary(&p, &pi).unwrap();
        let mu: f64 = 0.1;
        let a = (1.0 / (2.0 * mu)) * (1.0 - (1.0 - (-4.0 * mu * mu).exp()).sqrt()).ln();
        assert!((s.a_star - a).abs() < 1e-8, "{} vs {a}", s.a_star);
        assert!((s.b_star - (-a - 0.2)).abs() < 1e-8);
    }

    #[test]
    fn fixed_lower_boundary() {
        let (p, pi) = problem("0", "1", "abs(x)", 1.0, 1.0);
        let s = solve_b_given_a(&p, &pi, -2.0).unwrap();
        assert!((s.boundary - (10f64.sqrt() - 2.0)).abs() < 1e-9);
        let s = solve_b_given_a(&p, &pi, -1.0).unwrap();
        assert!((s.boundary - 1.0).abs() < 1e-9);
        let s = solve_a_given_b(&p, &pi, 1.0).unwrap();
        assert!((s.boundary + 1.0).abs() < 1e-9);
    }

    #[test]
    fn ou_one_sided() {
        let (p, pi) = problem("-x", "1", "abs(x)", 0.0, 0.1);
        let s = solve_one_sided_down(&p, &pi).unwrap();
        assert!((s.boundary - 0.535234705578).abs() < 1e-8, "{}", s.boundary);
        let j = j1(&p, s.boundary).unwrap();
        assert!((j - s.lambda).abs() < 1e-8);
        assert!(j1(&p, s.boundary + 0.1).unwrap() > j);
        assert!(j1(&p, s.boundary - 0.1).unwrap() > j);
    }

    #[test]
    fn one_sided_conditions_fail_for_brownian_motion() {
        let (p, pi) = problem("0", "1", "abs(x)", 0.0, 1.0);
        assert!(
            matches!(solve_one_sided_down(&p, &pi), Err(Error::OneSidedCondition(m)) if m.contains("(D1)"))
        );
    }

    #[test]
    fn stationary_residuals_vanish_at_optimum() {
        let (p, pi) = problem("0", "1", "abs(x)", 1.0, 1.0);
        let (r1, r2) = stationary_residuals(&p, &pi, -1.0, 1.0).unwrap();
        assert!(r1.abs() < 1e-10 && r2.abs() < 1e-10);
        let (r1, _) = stationary_residuals(&p, &pi, -1.2, 1.0).unwrap();
        assert!(r1.abs() > 1e-6);
    }
}

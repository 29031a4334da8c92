//! Diffusion and cost model plus the classical diffusion characteristics.
//!
//! With `L(x) = -∫_{anchor}^{x} 2 mu(y) / sigma(y)^2 dy` the scale density is
//! `S'(x) = exp(L(x))` and the speed density is `m'(x) = 2 / (sigma(x)^2 S'(x))`.
//! Everything is computed through `L` so that far tails underflow to zero instead of
//! producing `inf * 0`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::expr::{self, Expr, ExprError};
use crate::quad::{self, Direction, QuadError};
use crate::{Error, Result};

pub const DEFAULT_QUAD_TOL: f64 = 1e-11;
pub const DEFAULT_ROOT_TOL: f64 = 1e-11;
pub const DEFAULT_BRACKET: (f64, f64) = (-50.0, 50.0);
pub const DEFAULT_KINK_WINDOW: (f64, f64) = (-100.0, 100.0);
const DIAGNOSTIC_GRID: usize = 1024;

#[derive(Clone)]
enum Repr {
    Expr(Arc<Expr>),
    Native(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// A real function of one variable, either a parsed expression or native code
/// with declared kink points.
#[derive(Clone)]
pub struct ScalarFn {
    repr: Repr,
    label: String,
    declared_kinks: Vec<f64>,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.label)
    }
}

impl ScalarFn {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        Ok(Self::from_expr(expr::parse(source)?, source))
    }

    /// Parse with named parameters bound to values (see [`expr::parse_with`]).
    pub fn parse_with(source: &str, params: &BTreeMap<String, f64>) -> Result<Self, ExprError> {
        Ok(Self::from_expr(expr::parse_with(source, params)?, source))
    }

    pub fn from_expr(e: Expr, label: &str) -> Self {
        ScalarFn {
            repr: Repr::Expr(Arc::new(e)),
            label: label.to_string(),
            declared_kinks: Vec::new(),
        }
    }

    pub fn constant(v: f64) -> Self {
        Self::from_expr(Expr::Num(v), &format!("{v:?}"))
    }

    pub fn native<F>(label: &str, f: F, kinks: Vec<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ScalarFn {
            repr: Repr::Native(Arc::new(f)),
            label: label.to_string(),
            declared_kinks: kinks,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.repr {
            Repr::Expr(e) => Some(e),
            Repr::Native(_) => None,
        }
    }

    /// Evaluate, mapping domain errors to NaN.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Expr(e) => e.eval(x).unwrap_or(f64::NAN),
            Repr::Native(f) => f(x),
        }
    }

    pub fn try_eval(&self, x: f64) -> Result<f64, ExprError> {
        match &self.repr {
            Repr::Expr(e) => e.eval(x),
            Repr::Native(f) => Ok(f(x)),
        }
    }

    /// Non-smooth points in `[lo, hi]`.
    pub fn kinks(&self, lo: f64, hi: f64) -> Vec<f64> {
        match &self.repr {
            Repr::Expr(e) => expr::kink_points(e, lo, hi),
            Repr::Native(_) => self
                .declared_kinks
                .iter()
                .copied()
                .filter(|&k| k >= lo && k <= hi)
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub mu: ScalarFn,
    pub sigma: ScalarFn,
}

#[derive(Debug, Clone)]
pub struct CostSpec {
    pub c: ScalarFn,
    pub q_u: f64,
    pub q_d: f64,
}

const DYADIC_LEVELS: usize = 64;

// ln S' at anchor ± 2^j, filled on first use.
#[derive(Debug)]
struct ScaleCache {
    up: Vec<OnceLock<f64>>,
    down: Vec<OnceLock<f64>>,
}

impl ScaleCache {
    fn new() -> Arc<Self> {
        Arc::new(ScaleCache {
            up: (0..DYADIC_LEVELS).map(|_| OnceLock::new()).collect(),
            down: (0..DYADIC_LEVELS).map(|_| OnceLock::new()).collect(),
        })
    }
}

/// A fully specified control problem with its numerical settings.
///
/// `anchor` is the base point of the scale density (`S'(anchor) = 1`); every
/// quantity of interest is invariant under its choice.
#[derive(Debug, Clone)]
pub struct Problem {
    diffusion: DiffusionSpec,
    cost: CostSpec,
    anchor: f64,
    quad_tol: f64,
    root_tol: f64,
    bracket1: (f64, f64),
    bracket2: (f64, f64),
    kink_window: (f64, f64),
    kinks: Vec<f64>,
    scale_cache: Arc<ScaleCache>,
}

impl Problem {
    pub fn new(diffusion: DiffusionSpec, cost: CostSpec) -> Result<Self> {
        let mut p = Problem {
            diffusion,
            cost,
            anchor: 0.0,
            quad_tol: DEFAULT_QUAD_TOL,
            root_tol: DEFAULT_ROOT_TOL,
            bracket1: DEFAULT_BRACKET,
            bracket2: DEFAULT_BRACKET,
            kink_window: DEFAULT_KINK_WINDOW,
            kinks: Vec::new(),
            scale_cache: ScaleCache::new(),
        };
        p.refresh_kinks();
        p.validate()?;
        Ok(p)
    }

    /// Shorthand for expression-defined problems.
    pub fn from_exprs(mu: &str, sigma: &str, c: &str, q_u: f64, q_d: f64) -> Result<Self> {
        Self::new(
            DiffusionSpec {
                mu: ScalarFn::parse(mu)?,
                sigma: ScalarFn::parse(sigma)?,
            },
            CostSpec {
                c: ScalarFn::parse(c)?,
                q_u,
                q_d,
            },
        )
    }

    pub fn with_anchor(mut self, anchor: f64) -> Result<Self> {
        self.anchor = anchor;
        self.scale_cache = ScaleCache::new();
        self.validate()?;
        Ok(self)
    }

    pub fn with_tolerances(mut self, quad_tol: f64, root_tol: f64) -> Result<Self> {
        self.quad_tol = quad_tol;
        self.root_tol = root_tol;
        self.scale_cache = ScaleCache::new();
        self.validate()?;
        Ok(self)
    }

    pub fn with_brackets(mut self, bracket1: (f64, f64), bracket2: (f64, f64)) -> Result<Self> {
        self.bracket1 = bracket1;
        self.bracket2 = bracket2;
        self.validate()?;
        Ok(self)
    }

    pub fn with_kink_window(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidProblem(format!(
                "kink window [{lo}, {hi}] is empty"
            )));
        }
        self.kink_window = (lo, hi);
        self.refresh_kinks();
        Ok(self)
    }

    /// A copy with the volatility replaced (used for comparative statics).
    pub fn with_sigma(&self, sigma: ScalarFn) -> Result<Self> {
        let mut p = self.clone();
        p.diffusion.sigma = sigma;
        p.refresh_kinks();
        p.validate()?;
        Ok(p)
    }

    fn refresh_kinks(&mut self) {
        let (lo, hi) = self.kink_window;
        let mut ks = self.diffusion.mu.kinks(lo, hi);
        ks.extend(self.diffusion.sigma.kinks(lo, hi));
        ks.extend(self.cost.c.kinks(lo, hi));
        ks.sort_by(|a, b| a.total_cmp(b));
        ks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        self.kinks = ks;
        self.scale_cache = ScaleCache::new();
    }

    fn validate(&self) -> Result<()> {
        let q = &self.cost;
        if !(q.q_u >= 0.0 && q.q_d >= 0.0) {
            return Err(Error::InvalidProblem(format!(
                "control prices must be nonnegative (q_u = {}, q_d = {})",
                q.q_u, q.q_d
            )));
        }
        if !(q.q_u + q.q_d > 0.0) {
            return Err(Error::InvalidProblem(
                "q_u + q_d must be positive; with both prices zero the optimality conditions degenerate"
                    .into(),
            ));
        }
        if !self.anchor.is_finite() {
            return Err(Error::InvalidProblem("anchor must be finite".into()));
        }
        if !(self.quad_tol > 0.0 && self.root_tol > 0.0) {
            return Err(Error::InvalidProblem("tolerances must be positive".into()));
        }
        for (name, (lo, hi)) in [("bracket1", self.bracket1), ("bracket2", self.bracket2)] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidProblem(format!(
                    "{name} [{lo}, {hi}] is not an interval"
                )));
            }
        }
        self.diffusion.mu.try_eval(self.anchor)?;
        self.cost.c.try_eval(self.anchor)?;
        self.check_sigma(self.anchor)?;
        Ok(())
    }

    pub fn diffusion(&self) -> &DiffusionSpec {
        &self.diffusion
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn root_tol(&self) -> f64 {
        self.root_tol
    }

    pub fn bracket1(&self) -> (f64, f64) {
        self.bracket1
    }

    pub fn bracket2(&self) -> (f64, f64) {
        self.bracket2
    }

    pub fn kink_window(&self) -> (f64, f64) {
        self.kink_window
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    /// Breakpoints for integrals over `(a, b)`: kinks plus dyadic points
    /// `anchor ± 2^j`, so that long ranges keep local features resolved.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .kinks
            .iter()
            .copied()
            .filter(|&k| k > a && k < b)
            .collect();
        if b - a > 2.0 {
            for j in 0..=62 {
                let d = 2f64.powi(j);
                for x in [self.anchor - d, self.anchor + d] {
                    if x > a && x < b {
                        out.push(x);
                    }
                }
                if self.anchor - d < a && self.anchor + d > b {
                    break;
                }
            }
        }
        out.sort_by(|x, y| x.total_cmp(y));
        out
    }

    pub fn mu(&self, x: f64) -> f64 {
        self.diffusion.mu.eval(x)
    }

    pub fn sigma(&self, x: f64) -> f64 {
        self.diffusion.sigma.eval(x)
    }

    pub fn c(&self, x: f64) -> f64 {
        self.cost.c.eval(x)
    }

    pub fn q_sum(&self) -> f64 {
        self.cost.q_u + self.cost.q_d
    }

    /// `pi1 = c + q_d mu`
    pub fn pi1(&self, x: f64) -> f64 {
        self.c(x) + self.cost.q_d * self.mu(x)
    }

    /// `pi2 = c - q_u mu`
    pub fn pi2(&self, x: f64) -> f64 {
        self.c(x) - self.cost.q_u * self.mu(x)
    }

    fn check_sigma(&self, x: f64) -> Result<()> {
        let s = self.diffusion.sigma.try_eval(x)?;
        if !(s > 0.0) {
            return Err(Error::NonPositiveVolatility { x, value: s });
        }
        Ok(())
    }

    /// Turn a quadrature failure into the most specific error available.
    pub(crate) fn diagnose(&self, err: QuadError) -> Error {
        if let QuadError::NonFinite { x } = err {
            for f in [&self.diffusion.mu, &self.diffusion.sigma, &self.cost.c] {
                if let Err(e) = f.try_eval(x) {
                    return e.into();
                }
            }
            if let Err(e) = self.check_sigma(x) {
                return e;
            }
            if let Err(e) = self.log_scale(x) {
                return e;
            }
        }
        err.into()
    }

    #[inline]
    fn drift_ratio(&self, y: f64) -> f64 {
        let s = self.sigma(y);
        if s > 0.0 {
            2.0 * self.mu(y) / (s * s)
        } else {
            f64::NAN
        }
    }

    /// `ln S'(x)`, zero at the anchor.
    ///
    /// Values at `anchor ± 2^j` are cached; a query integrates only from the
    /// nearest cached point between it and the anchor.
    pub fn log_scale(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::OutOfDomain(format!("scale density at x = {x}")));
        }
        let d = x - self.anchor;
        if d == 0.0 {
            return Ok(0.0);
        }
        if d.abs() <= 1.0 {
            return self.log_scale_segment(self.anchor, x);
        }
        let level = (d.abs().log2().floor() as usize).min(DYADIC_LEVELS - 1);
        let dir = d.signum();
        let base = self.anchor + dir * 2f64.powi(level as i32);
        Ok(self.dyadic_log_scale(dir, level)? + self.log_scale_segment(base, x)?)
    }

    fn dyadic_log_scale(&self, dir: f64, level: usize) -> Result<f64> {
        let slots = if dir > 0.0 {
            &self.scale_cache.up
        } else {
            &self.scale_cache.down
        };
        if let Some(v) = slots[level].get() {
            return Ok(*v);
        }
        let point = self.anchor + dir * 2f64.powi(level as i32);
        let v = if level == 0 {
            self.log_scale_segment(self.anchor, point)?
        } else {
            let prev = self.anchor + dir * 2f64.powi(level as i32 - 1);
            self.dyadic_log_scale(dir, level - 1)? + self.log_scale_segment(prev, point)?
        };
        Ok(*slots[level].get_or_init(|| v))
    }

    // -∫_from^to 2 mu / sigma^2, either orientation
    fn log_scale_segment(&self, from: f64, to: f64) -> Result<f64> {
        if from == to {
            return Ok(0.0);
        }
        let (lo, hi, sign) = if to > from {
            (from, to, -1.0)
        } else {
            (to, from, 1.0)
        };
        let kinks: Vec<f64> = self
            .kinks
            .iter()
            .copied()
            .filter(|&k| k > lo && k < hi)
            .collect();
        let r = quad::integrate(|y| self.drift_ratio(y), lo, hi, self.quad_tol, &kinks).map_err(
            |e| match e {
                QuadError::NonFinite { x } => match self.check_sigma(x) {
                    Err(err) => err,
                    Ok(()) => self
                        .diffusion
                        .mu
                        .try_eval(x)
                        .err()
                        .map(Error::from)
                        .unwrap_or(Error::Quad(e)),
                },
                other => Error::Quad(other),
            },
        )?;
        Ok(sign * r.value)
    }

    pub fn scale_density(&self, x: f64) -> Result<f64> {
        Ok(self.log_scale(x)?.exp())
    }

    /// `1 / S'(x)`, computed without overflow in the intermediate.
    pub fn inv_scale_density(&self, x: f64) -> Result<f64> {
        Ok((-self.log_scale(x)?).exp())
    }

    pub fn speed_density(&self, x: f64) -> Result<f64> {
        self.check_sigma(x)?;
        let s = self.sigma(x);
        Ok(2.0 / (s * s) * (-self.log_scale(x)?).exp())
    }

    #[inline]
    fn speed_density_raw(&self, x: f64) -> f64 {
        let s = self.sigma(x);
        match self.log_scale(x) {
            Ok(l) if s > 0.0 => 2.0 / (s * s) * (-l).exp(),
            _ => f64::NAN,
        }
    }

    /// `∫_a^b h(t) m'(t) dt`.
    pub fn speed_integral<H: Fn(f64) -> f64>(&self, h: H, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(Error::OutOfDomain(format!(
                "integration range [{a}, {b}] is reversed"
            )));
        }
        let bp = self.breakpoints(a, b);
        quad::integrate(
            |t| h(t) * self.speed_density_raw(t),
            a,
            b,
            self.quad_tol,
            &bp,
        )
        .map(|r| r.value)
        .map_err(|e| self.diagnose(e))
    }

    /// `∫ h(t) m'(t) dt` over `(-inf, from]` or `[from, inf)`.
    pub fn speed_integral_tail<H: Fn(f64) -> f64>(
        &self,
        h: H,
        from: f64,
        direction: Direction,
    ) -> Result<f64> {
        let kinks = self.kinks.clone();
        quad::integrate_semi_infinite(
            |t| {
                let m = self.speed_density_raw(t);
                // the far tail of m' can underflow to zero while h grows
                if m == 0.0 {
                    0.0
                } else {
                    h(t) * m
                }
            },
            from,
            direction,
            self.quad_tol,
            &kinks,
        )
        .map(|r| r.value)
        .map_err(|e| match e {
            QuadError::Divergent { .. } => Error::Quad(e),
            other => self.diagnose(other),
        })
    }

    /// `m(a, b) = ∫_a^b m'(t) dt`.
    pub fn speed_measure(&self, a: f64, b: f64) -> Result<f64> {
        if !(a <= b) {
            return Err(Error::OutOfDomain(format!(
                "speed measure needs a <= b, got ({a}, {b})"
            )));
        }
        self.speed_integral(|_| 1.0, a, b)
    }

    /// Density of the stationary law of the process reflected at `a` and `b`.
    pub fn stationary_density(&self, a: f64, b: f64, x: f64) -> Result<f64> {
        if !(a < b) {
            return Err(Error::OutOfDomain(format!("need a < b, got ({a}, {b})")));
        }
        if !(a <= x && x <= b) {
            return Err(Error::OutOfDomain(format!("x = {x} outside [{a}, {b}]")));
        }
        Ok(self.speed_density(x)? / self.speed_measure(a, b)?)
    }

    /// Long-run rates `(alpha, beta)` of the upward control at `a` and the
    /// downward control at `b`.
    pub fn control_rates(&self, a: f64, b: f64) -> Result<(f64, f64)> {
        if !(a < b) {
            return Err(Error::OutOfDomain(format!("need a < b, got ({a}, {b})")));
        }
        let m = self.speed_measure(a, b)?;
        Ok((
            self.inv_scale_density(a)? / m,
            self.inv_scale_density(b)? / m,
        ))
    }

    /// Locate the minimizers of `pi1` and `pi2` inside the given brackets.
    pub fn pi_pair(&self, bracket1: (f64, f64), bracket2: (f64, f64)) -> Result<PiPair> {
        let mut diagnostics = Vec::new();
        let (xhat1, min1) = self.argmin(|x| self.pi1(x), bracket1, "pi1", &mut diagnostics)?;
        let (xhat2, min2) = self.argmin(|x| self.pi2(x), bracket2, "pi2", &mut diagnostics)?;
        self.check_cost_floor(
            bracket1.0.min(bracket2.0),
            bracket1.1.max(bracket2.1),
            &mut diagnostics,
        );
        Ok(PiPair {
            xhat1,
            xhat2,
            pi1_min: min1,
            pi2_min: min2,
            diagnostics,
        })
    }

    /// [`Problem::pi_pair`] on the problem's own brackets.
    pub fn default_pi_pair(&self) -> Result<PiPair> {
        self.pi_pair(self.bracket1, self.bracket2)
    }

    fn argmin<F: Fn(f64) -> f64>(
        &self,
        f: F,
        (lo, hi): (f64, f64),
        name: &str,
        diagnostics: &mut Vec<String>,
    ) -> Result<(f64, f64)> {
        if !(lo < hi) {
            return Err(Error::InvalidBracket(format!(
                "{name}: [{lo}, {hi}] is empty"
            )));
        }
        let n = DIAGNOSTIC_GRID;
        let h = (hi - lo) / (n - 1) as f64;
        let grid: Vec<f64> = (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + h * i as f64 })
            .collect();
        let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            let x = grid[i];
            for g in [&self.diffusion.mu, &self.cost.c] {
                g.try_eval(x)?;
            }
            return Err(Error::InvalidBracket(format!(
                "{name} is not finite at x = {x}"
            )));
        }
        let (imin, _) = vals
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty grid");
        if imin == 0 || imin == n - 1 {
            return Err(Error::InvalidBracket(format!(
                "{name} has no interior minimum on [{lo}, {hi}]"
            )));
        }
        let golden = golden_section(&f, grid[imin - 1], grid[imin + 1], self.root_tol);
        let mut best = (grid[imin], vals[imin]);
        let candidates = self
            .kinks
            .iter()
            .copied()
            .filter(|&k| k > lo && k < hi)
            .chain(std::iter::once(golden));
        for x in candidates {
            let v = f(x);
            if v < best.1 || (v == best.1 && x != best.0 && self.kinks.contains(&x)) {
                best = (x, v);
            }
        }
        let (xhat, _) = best;
        let slack = |v: f64| 1e-12 * (1.0 + v.abs());
        let violations = grid
            .windows(2)
            .zip(vals.windows(2))
            .filter(|(xs, vs)| {
                if xs[1] <= xhat {
                    vs[1] > vs[0] + slack(vs[0])
                } else if xs[0] >= xhat {
                    vs[1] < vs[0] - slack(vs[0])
                } else {
                    false
                }
            })
            .count();
        if violations > 0 {
            diagnostics.push(format!(
                "assumption (i): {name} is not monotone on both sides of its minimizer {xhat} \
                 ({violations} violations on a {n}-point grid over [{lo}, {hi}])"
            ));
        }
        Ok(best)
    }

    fn check_cost_floor(&self, lo: f64, hi: f64, diagnostics: &mut Vec<String>) {
        let c0 = self.c(0.0);
        let n = DIAGNOSTIC_GRID;
        let h = (hi - lo) / (n - 1) as f64;
        if c0 < 0.0 {
            diagnostics.push(format!("cost floor: c(0) = {c0} is negative"));
        }
        if let Some(x) = (0..n)
            .map(|i| lo + h * i as f64)
            .find(|&x| self.c(x) < c0 - 1e-12 * (1.0 + c0.abs()))
        {
            diagnostics.push(format!(
                "cost floor: c({x}) < c(0); the cost is not minimized at 0"
            ));
        }
    }
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a) > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
        if x1 <= a || x2 >= b {
            break;
        }
    }
    0.5 * (a + b)
}

/// Minimizers of the shifted costs `pi1 = c + q_d mu` and `pi2 = c - q_u mu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiPair {
    pub xhat1: f64,
    pub xhat2: f64,
    pub pi1_min: f64,
    pub pi2_min: f64,
    /// Assumption checks that failed on the diagnostic grid; empty when all pass.
    pub diagnostics: Vec<String>,
}

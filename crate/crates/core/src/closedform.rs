//! Analytic solutions of the worked examples, used as oracles for the generic
//! solver, and the catalog that builds those examples as [`Problem`]s.
//!
//! All oracle roots are solved to [`ORACLE_TOL`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::model::{Problem, ScalarFn};
use crate::normal;
use crate::quad;
use crate::roots;
use crate::solver::Side;
use crate::{Error, Result};

pub const ORACLE_TOL: f64 = 1e-12;

/// Brownian motion, `c = max(-k1 x, k2 x)`, no drift, `q_u = q_d = 1`:
/// returns `(a*, b*, lambda*)`.
pub fn bm_piecewise_nodrift(k1: f64, k2: f64, sigma: f64) -> (f64, f64, f64) {
    let s2 = sigma * sigma;
    let a = -(2.0 * k2 * s2 / (k1 * (k1 + k2))).sqrt();
    let b = (2.0 * k1 * s2 / (k2 * (k1 + k2))).sqrt();
    (a, b, k2 * b)
}

/// Brownian motion with drift `mu > 0`, `c = k |x|`, `q_u = q_d = 1`: `(a*, b*)`.
pub fn bm_symmetric_drift(mu: f64, sigma: f64, k: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    // 1 - sqrt(1 - e^{-t}) = 1 - sqrt(-expm1(-t)), kept accurate for small t
    let t = 4.0 * mu * mu / (k * s2);
    let a = s2 / (2.0 * mu) * (1.0 - (-(-t).exp_m1()).sqrt()).ln();
    (a, -a - 2.0 * mu / k)
}

/// Closed-form `g(a)` for Brownian motion with drift `mu > 0` and
/// `c = max(-k1 x, k2 x)`, in the normalization `S'(0) = 1`, `m' = 2 / (sigma^2 S')`.
pub fn bm_piecewise_gfun(mu: f64, sigma: f64, k1: f64, k2: f64, a: f64) -> f64 {
    let s2 = sigma * sigma;
    let r = 2.0 * mu / s2;
    s2 / (2.0 * mu * mu)
        * (k1 + k2 - k2 * (-r * (k1 / k2 * a + 2.0 * mu / k2)).exp() - k1 * (r * a).exp())
}

fn bm_piecewise_drift(mu: f64, sigma: f64, k1: f64, k2: f64) -> Result<(f64, f64)> {
    let ahat = -2.0 * mu / k1;
    let g = |a: f64| Ok(bm_piecewise_gfun(mu, sigma, k1, k2, a));
    let ((x0, g0), (x1, g1)) = roots::expand(g, ahat, -1.0, 1.0, |v| v < 0.0)?;
    let a = roots::bracketed(&mut |a| g(a), x1, x0, g1, g0, ORACLE_TOL)?.x;
    Ok((a, -k1 / k2 * a - 2.0 * mu / k2))
}

/// `F(kappa)` for `mu(x) = mu x`, `c = |x|`, `q = 1`, in units of `sigma`.
pub fn symmetric_kappa_equation(mu: f64, kappa: f64) -> Result<f64> {
    let integral = quad::integrate(|y| (mu * y * y).exp(), 0.0, kappa, 1e-14, &[])?.value;
    Ok(
        (1.0 + mu) / (2.0 * mu) * (mu * kappa * kappa).exp_m1() + 0.5
            - (1.0 + mu) * kappa * integral,
    )
}

/// `kappa*` such that the optimal boundaries are `±kappa* sigma` for `mu(x) = mu x`.
pub fn symmetric_kappa(mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::OutOfDomain(format!(
            "symmetric_kappa needs mu > 0, got {mu}"
        )));
    }
    Ok(roots::find_root(|k| symmetric_kappa_equation(mu, k), 1e-6, 10.0, ORACLE_TOL)?.x)
}

/// `h(b) = 1/2 + (e^{-b}(1 + b) - 1) / sigma^2` for `c = max(1 - e^x, 1 - e^{-x})`, no drift.
pub fn exp_cost_h(sigma: f64, b: f64) -> f64 {
    0.5 + ((-b).exp() * (1.0 + b) - 1.0) / (sigma * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExpCostBoundary {
    Exists {
        b_star: f64,
    },
    /// `h` stays above its positive limit `1/2 - 1/sigma^2`.
    NotExists {
        h_limit: f64,
    },
}

pub fn exp_cost_boundary(sigma: f64) -> Result<ExpCostBoundary> {
    let h_limit = 0.5 - 1.0 / (sigma * sigma);
    if h_limit >= 0.0 {
        return Ok(ExpCostBoundary::NotExists { h_limit });
    }
    let h = |b: f64| Ok(exp_cost_h(sigma, b));
    let ((x0, h0), (x1, h1)) = roots::expand(h, 0.0, 1.0, 1.0, |v| v < 0.0)?;
    let b_star = roots::bracketed(&mut |b| h(b), x0, x1, h0, h1, ORACLE_TOL)?.x;
    Ok(ExpCostBoundary::Exists { b_star })
}

/// Left side of the boundary equation for drift `mu sgn(x)`, constant `sigma` and even `c`.
pub fn alternating_drift_equation(
    mu: f64,
    sigma: f64,
    q: f64,
    c: &ScalarFn,
    y: f64,
) -> Result<f64> {
    let k = 2.0 * mu / (sigma * sigma);
    let integral = quad::integrate(
        |t| (k * t).exp() * c.eval(t),
        0.0,
        y,
        1e-14,
        &c.kinks(0.0, y),
    )?
    .value;
    Ok(q + 2.0 / (sigma * sigma) * integral - (k * y).exp_m1() * c.eval(y) / mu)
}

/// `y* > 0` for the alternating-drift model; the lower boundary is `-y*`.
pub fn alternating_drift_boundary(mu: f64, sigma: f64, q: f64, c: &ScalarFn) -> Result<f64> {
    let f = |y: f64| alternating_drift_equation(mu, sigma, q, c, y);
    let start = 1e-9;
    let ((x0, f0), (x1, f1)) = roots::expand(f, start, 1.0, 1e-3, |v| v < 0.0)?;
    Ok(roots::bracketed(&mut |y| f(y), x0, x1, f0, f1, ORACLE_TOL)?.x)
}

/// Left minus right side of the one-sided equation for `mu(x) = -mu x`, `c = |x|`;
/// the optimal boundary is `zeta* sigma`.
pub fn ou_one_sided_equation(mu: f64, q_d: f64, zeta: f64) -> f64 {
    let e = (-mu * zeta * zeta).exp();
    (2.0 - e) / mu + q_d * e
        - (1.0 - q_d * mu) * 2.0 * zeta * (PI / mu).sqrt() * normal::cdf((2.0 * mu).sqrt() * zeta)
}

pub fn ou_one_sided_zeta(mu: f64, q_d: f64) -> Result<f64> {
    if !(mu > 0.0) || !(q_d >= 0.0) {
        return Err(Error::OutOfDomain(format!(
            "need mu > 0 and q_d >= 0, got ({mu}, {q_d})"
        )));
    }
    if q_d * mu >= 1.0 {
        return Err(Error::InvalidBracket(format!(
            "no sign change: q_d mu = {} >= 1, control never pays off",
            q_d * mu
        )));
    }
    Ok(roots::find_root(
        |z| Ok(ou_one_sided_equation(mu, q_d, z)),
        1e-6,
        20.0,
        ORACLE_TOL,
    )?
    .x)
}

/// Speed measure of `dX = (alpha - beta X) dt + sigma dW` with `S'(0) = 1`.
#[derive(Debug, Clone, Copy)]
struct OuMoments {
    alpha: f64,
    beta: f64,
    sigma: f64,
}

impl OuMoments {
    fn z(&self, t: f64) -> f64 {
        (2.0 * self.beta).sqrt() * t / self.sigma
            - 2f64.sqrt() * self.alpha / (self.beta.sqrt() * self.sigma)
    }

    fn k(&self) -> f64 {
        self.alpha * self.alpha / (self.beta * self.sigma * self.sigma)
    }

    fn measure(&self, a: f64, b: f64) -> f64 {
        2.0 / self.sigma
            * (PI / self.beta).sqrt()
            * self.k().exp()
            * (normal::cdf(self.z(b)) - normal::cdf(self.z(a)))
    }

    // ∫_a^b t m'(t) dt
    fn first(&self, a: f64, b: f64) -> f64 {
        let (za, zb) = (self.z(a), self.z(b));
        self.alpha / self.beta * self.measure(a, b)
            + self.k().exp() / self.beta * (2.0 * PI).sqrt() * (normal::pdf(za) - normal::pdf(zb))
    }

    fn inv_scale(&self, x: f64) -> f64 {
        (-(self.beta * x * x - 2.0 * self.alpha * x) / (self.sigma * self.sigma)).exp()
    }
}

/// Example B by direct assembly: `dX = (alpha - beta X) dt + sigma dW`,
/// `c = max(-k1 x, k2 x)`, `q_u = q_d = 1`. Returns `(a*, b*)`.
pub fn ou_two_boundary_reference(
    alpha: f64,
    beta: f64,
    sigma: f64,
    k1: f64,
    k2: f64,
) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta < k1.min(k2)) {
        return Err(Error::InvalidProblem(format!(
            "need 0 < beta < min(k1, k2), got beta = {beta}"
        )));
    }
    let ou = OuMoments { alpha, beta, sigma };
    let b_of = |a: f64| ((beta - k1) * a - 2.0 * alpha) / (k2 - beta);
    let g = |a: f64| -> Result<f64> {
        let b = b_of(a);
        let (lo, hi) = (a.min(0.0), b.max(0.0));
        let cost = k2 * ou.first(0.0, hi) - k1 * ou.first(lo, 0.0);
        let pi1_b = k2 * b + alpha - beta * b;
        Ok(cost - pi1_b * ou.measure(a, b) + ou.inv_scale(b) + ou.inv_scale(a))
    };
    // pi2(ahat) = pi1(0) = alpha; there b_ahat = 0
    let ahat = -2.0 * alpha / (k1 - beta);
    let ((x0, g0), (x1, g1)) = roots::expand(g, ahat.min(0.0), -1.0, 1.0, |v| v < 0.0)?;
    let a = roots::bracketed(&mut |a| g(a), x1, x0, g1, g0, ORACLE_TOL)?.x;
    Ok((a, b_of(a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogId {
    BmPiecewise,
    BmSymmetric,
    OuLinearCost,
    SymmetricLinearDrift,
    ExpCostDriftless,
    AlternatingDrift,
    OuOneSided,
}

impl CatalogId {
    pub const ALL: [CatalogId; 7] = [
        CatalogId::BmPiecewise,
        CatalogId::BmSymmetric,
        CatalogId::OuLinearCost,
        CatalogId::SymmetricLinearDrift,
        CatalogId::ExpCostDriftless,
        CatalogId::AlternatingDrift,
        CatalogId::OuOneSided,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CatalogId::BmPiecewise => "bm_piecewise",
            CatalogId::BmSymmetric => "bm_symmetric",
            CatalogId::OuLinearCost => "ou_linear_cost",
            CatalogId::SymmetricLinearDrift => "symmetric_linear_drift",
            CatalogId::ExpCostDriftless => "exp_cost_driftless",
            CatalogId::AlternatingDrift => "alternating_drift",
            CatalogId::OuOneSided => "ou_one_sided",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            CatalogId::BmPiecewise => "Brownian motion, drift mu, cost max(-k1 x, k2 x), q = 1",
            CatalogId::BmSymmetric => "Brownian motion, drift mu > 0, cost k |x|, q = 1",
            CatalogId::OuLinearCost => {
                "Ornstein-Uhlenbeck alpha - beta x, cost max(-k1 x, k2 x), q = 1"
            }
            CatalogId::SymmetricLinearDrift => {
                "linear drift mu x, cost |x|, q = 1; boundaries ±kappa* sigma"
            }
            CatalogId::ExpCostDriftless => {
                "no drift, cost max(1 - e^x, 1 - e^-x), q = 1; needs sigma < sqrt(2)"
            }
            CatalogId::AlternatingDrift => "drift mu sgn(x), cost |x|, q_u = q_d = q",
            CatalogId::OuOneSided => "drift -mu x, cost |x|, downward control only at price q_d",
        }
    }

    /// Parameter names with defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            CatalogId::BmPiecewise => &[("mu", 0.0), ("sigma", 1.0), ("k1", 0.5), ("k2", 1.0)],
            CatalogId::BmSymmetric => &[("mu", 0.1), ("sigma", 1.0), ("k", 1.0)],
            CatalogId::OuLinearCost => &[
                ("alpha", 0.1),
                ("beta", 0.1),
                ("sigma", 0.5),
                ("k1", 0.5),
                ("k2", 1.0),
            ],
            CatalogId::SymmetricLinearDrift => &[("mu", 0.05), ("sigma", 1.0)],
            CatalogId::ExpCostDriftless => &[("sigma", 1.0)],
            CatalogId::AlternatingDrift => &[("mu", 0.1), ("sigma", 1.0), ("q", 1.0)],
            CatalogId::OuOneSided => &[("mu", 1.0), ("sigma", 1.0), ("q_d", 0.1)],
        }
    }

    pub fn is_one_sided(self) -> bool {
        self == CatalogId::OuOneSided
    }
}

impl fmt::Display for CatalogId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CatalogId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CatalogId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidProblem(format!("unknown catalog model '{s}'")))
    }
}

/// Reference solution of a catalog model.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Reference {
    TwoBoundary {
        a_star: f64,
        b_star: f64,
        lambda_star: f64,
    },
    OneSided {
        boundary: f64,
        lambda: f64,
        side: Side,
    },
    NotExists {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogModel {
    pub id: CatalogId,
    pub params: BTreeMap<String, f64>,
}

fn lit(v: f64) -> String {
    if v < 0.0 {
        format!("({v:?})")
    } else {
        format!("{v:?}")
    }
}

impl CatalogModel {
    /// Build with defaults overridden by `overrides`; unknown names are rejected.
    pub fn new(id: CatalogId, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut params: BTreeMap<String, f64> = id
            .defaults()
            .iter()
            .map(|&(k, v)| (k.to_string(), v))
            .collect();
        for (k, &v) in overrides {
            match params.get_mut(k) {
                Some(slot) => *slot = v,
                None => {
                    let known: Vec<&str> = id.defaults().iter().map(|d| d.0).collect();
                    return Err(Error::InvalidProblem(format!(
                        "model {id} has no parameter '{k}' (known: {})",
                        known.join(", ")
                    )));
                }
            }
        }
        let model = CatalogModel { id, params };
        model.check()?;
        Ok(model)
    }

    pub fn with_defaults(id: CatalogId) -> Self {
        CatalogModel::new(id, &BTreeMap::new()).expect("defaults are valid")
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    fn check(&self) -> Result<()> {
        for (k, v) in &self.params {
            if !v.is_finite() {
                return Err(Error::InvalidProblem(format!(
                    "{}: parameter {k} = {v} is not finite",
                    self.id
                )));
            }
        }
        let positive: &[&str] = match self.id {
            CatalogId::BmPiecewise => &["sigma", "k1", "k2"],
            CatalogId::BmSymmetric => &["mu", "sigma", "k"],
            CatalogId::OuLinearCost => &["beta", "sigma", "k1", "k2"],
            CatalogId::SymmetricLinearDrift => &["mu", "sigma"],
            CatalogId::ExpCostDriftless => &["sigma"],
            CatalogId::AlternatingDrift => &["mu", "sigma", "q"],
            CatalogId::OuOneSided => &["mu", "sigma", "q_d"],
        };
        for &k in positive {
            if !(self.param(k) > 0.0) {
                return Err(Error::InvalidProblem(format!(
                    "{}: {k} must be positive",
                    self.id
                )));
            }
        }
        match self.id {
            CatalogId::BmPiecewise if self.param("mu") < 0.0 => Err(Error::InvalidProblem(
                "bm_piecewise: mu must be nonnegative".into(),
            )),
            CatalogId::OuLinearCost
                if self.param("beta") >= self.param("k1").min(self.param("k2")) =>
            {
                Err(Error::InvalidProblem(
                    "ou_linear_cost: beta must be below min(k1, k2)".into(),
                ))
            }
            CatalogId::OuOneSided if self.param("q_d") * self.param("mu") >= 1.0 => Err(
                Error::InvalidProblem("ou_one_sided: q_d mu must be below 1".into()),
            ),
            _ => Ok(()),
        }
    }

    /// `(drift, sigma, cost, q_u, q_d)` as expression sources.
    pub fn expressions(&self) -> (String, String, String, f64, f64) {
        let p = |k: &str| lit(self.param(k));
        let sigma = p("sigma");
        match self.id {
            CatalogId::BmPiecewise => (
                p("mu"),
                sigma,
                format!("max(-{}*x, {}*x)", p("k1"), p("k2")),
                1.0,
                1.0,
            ),
            CatalogId::BmSymmetric => (p("mu"), sigma, format!("{}*abs(x)", p("k")), 1.0, 1.0),
            CatalogId::OuLinearCost => (
                format!("{} - {}*x", p("alpha"), p("beta")),
                sigma,
                format!("max(-{}*x, {}*x)", p("k1"), p("k2")),
                1.0,
                1.0,
            ),
            CatalogId::SymmetricLinearDrift => {
                (format!("{}*x", p("mu")), sigma, "abs(x)".into(), 1.0, 1.0)
            }
            CatalogId::ExpCostDriftless => (
                "0".into(),
                sigma,
                "max(1 - exp(x), 1 - exp(-x))".into(),
                1.0,
                1.0,
            ),
            CatalogId::AlternatingDrift => {
                let q = self.param("q");
                (format!("{}*sgn(x)", p("mu")), sigma, "abs(x)".into(), q, q)
            }
            CatalogId::OuOneSided => (
                format!("-{}*x", p("mu")),
                sigma,
                "abs(x)".into(),
                0.0,
                self.param("q_d"),
            ),
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let (mu, sigma, c, q_u, q_d) = self.expressions();
        Problem::from_exprs(&mu, &sigma, &c, q_u, q_d)
    }

    /// The oracle solution.
    pub fn reference(&self) -> Result<Reference> {
        let p = |k: &str| self.param(k);
        let two = |a: f64, b: f64, lambda: f64| Reference::TwoBoundary {
            a_star: a,
            b_star: b,
            lambda_star: lambda,
        };
        Ok(match self.id {
            CatalogId::BmPiecewise => {
                let (mu, sigma, k1, k2) = (p("mu"), p("sigma"), p("k1"), p("k2"));
                if mu == 0.0 {
                    let (a, b, l) = bm_piecewise_nodrift(k1, k2, sigma);
                    two(a, b, l)
                } else {
                    let (a, b) = bm_piecewise_drift(mu, sigma, k1, k2)?;
                    two(a, b, k2 * b + mu)
                }
            }
            CatalogId::BmSymmetric => {
                let (a, b) = bm_symmetric_drift(p("mu"), p("sigma"), p("k"));
                two(a, b, p("k") * b + p("mu"))
            }
            CatalogId::OuLinearCost => {
                let (alpha, beta) = (p("alpha"), p("beta"));
                let (a, b) = ou_two_boundary_reference(alpha, beta, p("sigma"), p("k1"), p("k2"))?;
                two(a, b, p("k2") * b + alpha - beta * b)
            }
            CatalogId::SymmetricLinearDrift => {
                let b = symmetric_kappa(p("mu"))? * p("sigma");
                two(-b, b, (1.0 + p("mu")) * b)
            }
            CatalogId::ExpCostDriftless => match exp_cost_boundary(p("sigma"))? {
                ExpCostBoundary::Exists { b_star } => two(-b_star, b_star, -(-b_star).exp_m1()),
                ExpCostBoundary::NotExists { h_limit } => Reference::NotExists {
                    reason: format!(
                        "sigma >= sqrt(2): h(b) decreases to {h_limit} > 0 and has no root"
                    ),
                },
            },
            CatalogId::AlternatingDrift => {
                let (mu, q) = (p("mu"), p("q"));
                let y = alternating_drift_boundary(mu, p("sigma"), q, &ScalarFn::parse("abs(x)")?)?;
                two(-y, y, y + q * mu)
            }
            CatalogId::OuOneSided => {
                let b = ou_one_sided_zeta(p("mu"), p("q_d"))? * p("sigma");
                Reference::OneSided {
                    boundary: b,
                    lambda: (1.0 - p("q_d") * p("mu")) * b,
                    side: Side::DownControl,
                }
            }
        })
    }
}

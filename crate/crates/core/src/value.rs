//! Marginal value `v'`, the convex weight `p`, and a tabulated value function
//! checked against the free-boundary system.

use rayon::prelude::*;
use serde::Serialize;

use crate::format::g12;
use crate::model::Problem;
use crate::solver::TwoBoundarySolution;
use crate::{Error, Result};

pub const DEFAULT_GRID: usize = 513;
pub const MIN_GRID: usize = 16;
// fraction of b* - a* added on each side of the continuation region
const MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct ValueTable {
    pub grid: Vec<f64>,
    pub v: Vec<f64>,
    pub v_prime: Vec<f64>,
    /// `v''` from the HJB equation inside `(a*, b*)`, zero outside.
    pub v_second: Vec<f64>,
    pub p_weight: Vec<f64>,
    pub a_star: f64,
    pub b_star: f64,
    pub lambda_star: f64,
    /// Max over interior nodes of `|FD(v') - v''|`, kink nodes excluded.
    pub hjb_residual_max: f64,
    /// `min v''` over `[a*, b*]`; convexity holds when it is nonnegative.
    pub min_v_second: f64,
    pub convex: bool,
}

fn check_inside(sol: &TwoBoundarySolution, x: f64) -> Result<()> {
    if !(sol.a_star <= x && x <= sol.b_star) {
        return Err(Error::OutOfDomain(format!(
            "x = {x} outside [a*, b*] = [{}, {}]",
            sol.a_star, sol.b_star
        )));
    }
    Ok(())
}

/// `∫_x^{b*} (pi1(t) - pi1(b*)) m'(t) dt`
fn excess(p: &Problem, sol: &TwoBoundarySolution, x: f64) -> Result<f64> {
    let pb = p.pi1(sol.b_star);
    if x >= sol.b_star {
        return Ok(0.0);
    }
    p.speed_integral(|t| p.pi1(t) - pb, x, sol.b_star)
}

/// `v'(x) = q_d + S'(x) ∫_x^{b*} (pi1(t) - pi1(b*)) m'(t) dt` on `[a*, b*]`.
pub fn marginal_value(p: &Problem, sol: &TwoBoundarySolution, x: f64) -> Result<f64> {
    check_inside(sol, x)?;
    Ok(p.cost().q_d + p.scale_density(x)? * excess(p, sol, x)?)
}

/// `p(x) = S'(x) / (q_u + q_d) ∫_x^{b*} (pi1(b*) - pi1(t)) m'(t) dt`, so that
/// `v' = (1 - p) q_d - p q_u`.
pub fn convex_weight(p: &Problem, sol: &TwoBoundarySolution, x: f64) -> Result<f64> {
    check_inside(sol, x)?;
    Ok(-p.scale_density(x)? * excess(p, sol, x)? / p.q_sum())
}

/// `D(x) = ∫_x^{b*} (pi1 - pi1(b*)) m' + (q_u + q_d) / S'(x) = (v'(x) + q_u) / S'(x)`.
pub fn d_function(p: &Problem, sol: &TwoBoundarySolution, x: f64) -> Result<f64> {
    check_inside(sol, x)?;
    Ok(excess(p, sol, x)? + p.q_sum() * p.inv_scale_density(x)?)
}

fn table_grid(p: &Problem, a: f64, b: f64, n: usize) -> Vec<f64> {
    let margin = MARGIN * (b - a);
    let (lo, hi) = (a - margin, b + margin);
    let h = (hi - lo) / (n - 1) as f64;
    let mut exact: Vec<f64> = vec![a, b];
    exact.extend(p.kinks().iter().copied().filter(|&k| k > lo && k < hi));
    let mut grid: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + h * i as f64 })
        .filter(|x| exact.iter().all(|e| (x - e).abs() > 0.25 * h))
        .collect();
    grid.extend(exact);
    grid.sort_by(|x, y| x.total_cmp(y));
    grid.dedup();
    grid
}

/// Tabulate `v`, `v'` and `p` on a grid around `[a*, b*]` and measure how well
/// the table satisfies `(A v)(x) + c(x) = lambda*` in the interior.
///
/// The grid is `n_grid` uniform points with `a*`, `b*` and the kinks of the
/// model inserted exactly; `v(a*) = 0`.
pub fn build_value_table(
    p: &Problem,
    sol: &TwoBoundarySolution,
    n_grid: usize,
) -> Result<ValueTable> {
    if n_grid < MIN_GRID {
        return Err(Error::OutOfDomain(format!(
            "n_grid must be at least {MIN_GRID}, got {n_grid}"
        )));
    }
    let (a, b, lambda) = (sol.a_star, sol.b_star, sol.lambda_star);
    let grid = table_grid(p, a, b, n_grid);
    let (q_u, q_d) = (p.cost().q_u, p.cost().q_d);

    let rows: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&x| {
            if x <= a {
                Ok((-q_u, 1.0))
            } else if x >= b {
                Ok((q_d, 0.0))
            } else {
                let w = p.scale_density(x)? * excess(p, sol, x)?;
                Ok((q_d + w, -w / p.q_sum()))
            }
        })
        .collect::<Result<_>>()?;
    let v_prime: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let p_weight: Vec<f64> = rows.iter().map(|r| r.1).collect();

    let v_second: Vec<f64> = grid
        .iter()
        .zip(&v_prime)
        .map(|(&x, &dv)| {
            if x <= a || x >= b {
                0.0
            } else {
                let s = p.sigma(x);
                2.0 * (lambda - p.c(x) - p.mu(x) * dv) / (s * s)
            }
        })
        .collect();

    // trapezoidal integration outward from a*
    let ia = grid
        .iter()
        .position(|&x| x == a)
        .expect("a* is a grid node");
    let mut v = vec![0.0; grid.len()];
    for i in ia + 1..grid.len() {
        v[i] = v[i - 1] + 0.5 * (v_prime[i] + v_prime[i - 1]) * (grid[i] - grid[i - 1]);
    }
    for i in (0..ia).rev() {
        v[i] = v[i + 1] - 0.5 * (v_prime[i] + v_prime[i + 1]) * (grid[i + 1] - grid[i]);
    }

    let kinks = p.kinks();
    let mut hjb_residual_max: f64 = 0.0;
    for i in 1..grid.len() - 1 {
        let (x0, x1, x2) = (grid[i - 1], grid[i], grid[i + 1]);
        if x0 < a || x2 > b || kinks.contains(&x1) {
            continue;
        }
        let (h0, h1) = (x1 - x0, x2 - x1);
        // three-point derivative on a nonuniform stencil
        let fd = -h1 / (h0 * (h0 + h1)) * v_prime[i - 1]
            + (h1 - h0) / (h0 * h1) * v_prime[i]
            + h0 / (h1 * (h0 + h1)) * v_prime[i + 1];
        hjb_residual_max = hjb_residual_max.max((fd - v_second[i]).abs());
    }

    let min_v_second = grid
        .iter()
        .zip(&v_second)
        .filter(|(&x, _)| x > a && x < b)
        .map(|(_, &s)| s)
        .fold(f64::INFINITY, f64::min);
    let convex = min_v_second >= -1e-9 * (1.0 + lambda.abs());

    Ok(ValueTable {
        grid,
        v,
        v_prime,
        v_second,
        p_weight,
        a_star: a,
        b_star: b,
        lambda_star: lambda,
        hjb_residual_max,
        min_v_second,
        convex,
    })
}

impl ValueTable {
    /// CSV with columns `x,v,v_prime,p_weight`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,v,v_prime,p_weight\n");
        for i in 0..self.grid.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                g12(self.grid[i]),
                g12(self.v[i]),
                g12(self.v_prime[i]),
                g12(self.p_weight[i])
            ));
        }
        out
    }
}

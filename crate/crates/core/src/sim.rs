//! Euler simulation of reflected diffusions.
//!
//! Reflection is by projection: after each Euler step the state is clamped back
//! into the allowed region and the overshoot is booked as control (local time).
//! Replicate `r` draws from ChaCha8 seeded with `base_seed` on stream `r`, so
//! results do not depend on how replicates are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::format::g12;
use crate::model::Problem;
use crate::quad::Direction;
use crate::solver::Side;
use crate::{Error, Result};

/// Distance beyond which a one-sided path is declared divergent.
pub const GUARD_BAND: f64 = 1e4;
pub const DEFAULT_BINS: usize = 32;
// mass of the stationary law left below the automatic histogram range
const HIST_TAIL_MASS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub replicates: usize,
    pub base_seed: u64,
    pub x0: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Histogram range; defaults to `[a, b]`, or an automatic range on the open side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hist_range: Option<(f64, f64)>,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            horizon: 2000.0,
            burn_in: 100.0,
            replicates: 16,
            base_seed: 0,
            x0: 0.0,
            bins: DEFAULT_BINS,
            hist_range: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSimConfig(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon.is_finite() && self.horizon >= 100.0 * self.dt) {
            return bad(format!("horizon {} must be at least 100 dt", self.horizon));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.horizon) {
            return bad(format!("burn_in {} must lie in [0, horizon)", self.burn_in));
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        if !self.x0.is_finite() {
            return bad(format!("x0 = {} is not finite", self.x0));
        }
        if let Some((lo, hi)) = self.hist_range {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return bad(format!("histogram range ({lo}, {hi}) is empty"));
            }
        }
        Ok(())
    }

    fn steps(&self) -> (u64, u64) {
        let total = (self.horizon / self.dt).round() as u64;
        let burn = (self.burn_in / self.dt).round() as u64;
        (total, burn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateStats {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Fraction of post-burn-in time spent in each bin; samples outside the
    /// range are counted in the nearest end bin.
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    pub lambda_hat: f64,
    pub lambda_se: f64,
    /// Upward control per unit time.
    pub alpha_hat: f64,
    pub alpha_se: f64,
    /// Downward control per unit time.
    pub beta_hat: f64,
    pub beta_se: f64,
    pub histogram: Histogram,
    pub replicates: Vec<ReplicateStats>,
}

impl SimEstimate {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("lo,hi,mass\n");
        let h = &self.histogram;
        for (i, m) in h.masses.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                g12(h.edges[i]),
                g12(h.edges[i + 1]),
                g12(*m)
            ));
        }
        out
    }

    pub fn replicates_csv(&self) -> String {
        let mut out = String::from("replicate,lambda,alpha,beta\n");
        for (i, r) in self.replicates.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{},{}\n",
                g12(r.lambda),
                g12(r.alpha),
                g12(r.beta)
            ));
        }
        out
    }
}

struct Path {
    stats: ReplicateStats,
    counts: Vec<u64>,
}

// Run one replicate; `lo`/`hi` are the reflecting boundaries (infinite when absent).
fn run_replicate(
    p: &Problem,
    lo: f64,
    hi: f64,
    cfg: &SimConfig,
    edges: &[f64],
    replicate: usize,
) -> Result<Path> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed);
    rng.set_stream(replicate as u64);
    let (total, burn) = cfg.steps();
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let bins = edges.len() - 1;
    let (h_lo, h_hi) = (edges[0], edges[bins]);
    let width = (h_hi - h_lo) / bins as f64;
    let (guard_lo, guard_hi) = (
        if lo.is_finite() {
            f64::NEG_INFINITY
        } else {
            hi - GUARD_BAND
        },
        if hi.is_finite() {
            f64::INFINITY
        } else {
            lo + GUARD_BAND
        },
    );

    let mut counts = vec![0u64; bins];
    let (mut cost, mut up, mut down) = (0.0, 0.0, 0.0);
    let mut x = cfg.x0;
    for step in 0..total {
        let keep = step >= burn;
        if keep {
            cost += p.c(x) * dt;
            let k = ((x - h_lo) / width).floor();
            let k = if k < 0.0 {
                0
            } else {
                (k as usize).min(bins - 1)
            };
            counts[k] += 1;
        }
        let xi: f64 = StandardNormal.sample(&mut rng);
        let next = x + p.mu(x) * dt + p.sigma(x) * sqrt_dt * xi;
        if !next.is_finite() {
            return Err(Error::PathDiverged(format!(
                "state became {next} at step {step} from x = {x}"
            )));
        }
        if next < lo {
            if keep {
                up += lo - next;
            }
            x = lo;
        } else if next > hi {
            if keep {
                down += next - hi;
            }
            x = hi;
        } else {
            x = next;
        }
        if x < guard_lo || x > guard_hi {
            return Err(Error::PathDiverged(format!(
                "replicate {replicate} reached x = {x} at t = {}; the uncontrolled tail is probably attainable \
                 (check (D1)/(D2) or (U1)/(U2))",
                step as f64 * dt
            )));
        }
    }
    let t = (total - burn) as f64 * dt;
    let (q_u, q_d) = (p.cost().q_u, p.cost().q_d);
    Ok(Path {
        stats: ReplicateStats {
            lambda: (cost + q_u * up + q_d * down) / t,
            alpha: up / t,
            beta: down / t,
        },
        counts,
    })
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn simulate(
    p: &Problem,
    lo: f64,
    hi: f64,
    cfg: &SimConfig,
    range: (f64, f64),
) -> Result<SimEstimate> {
    let bins = cfg.bins;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| {
            if i == bins {
                range.1
            } else {
                range.0 + (range.1 - range.0) * i as f64 / bins as f64
            }
        })
        .collect();
    let paths: Vec<Path> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(p, lo, hi, cfg, &edges, r))
        .collect::<Result<_>>()?;

    let stats: Vec<ReplicateStats> = paths.iter().map(|path| path.stats).collect();
    let (lambda_hat, lambda_se) = mean_se(stats.iter().map(|s| s.lambda));
    let (alpha_hat, alpha_se) = mean_se(stats.iter().map(|s| s.alpha));
    let (beta_hat, beta_se) = mean_se(stats.iter().map(|s| s.beta));
    let mut counts = vec![0u64; bins];
    for path in &paths {
        for (c, k) in counts.iter_mut().zip(&path.counts) {
            *c += k;
        }
    }
    let total: u64 = counts.iter().sum();
    let masses = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(SimEstimate {
        lambda_hat,
        lambda_se,
        alpha_hat,
        alpha_se,
        beta_hat,
        beta_se,
        histogram: Histogram { edges, masses },
        replicates: stats,
    })
}

/// Simulate the process reflected at `a < b` and estimate its long-run average cost.
pub fn simulate_reflected(p: &Problem, a: f64, b: f64, cfg: &SimConfig) -> Result<SimEstimate> {
    cfg.validate()?;
    if !(a < b && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidSimConfig(format!(
            "need finite a < b, got ({a}, {b})"
        )));
    }
    if !(a <= cfg.x0 && cfg.x0 <= b) {
        return Err(Error::InvalidSimConfig(format!(
            "x0 = {} outside [{a}, {b}]",
            cfg.x0
        )));
    }
    simulate(p, a, b, cfg, cfg.hist_range.unwrap_or((a, b)))
}

// Point beyond which the stationary law on the one-sided region has negligible mass.
fn open_end(p: &Problem, boundary: f64, side: Side) -> Result<f64> {
    let (dir, sign) = match side {
        Side::DownControl => (Direction::Down, -1.0),
        Side::UpControl => (Direction::Up, 1.0),
    };
    let total = p.speed_integral_tail(|_| 1.0, boundary, dir)?;
    for k in 0..=crate::roots::MAX_DOUBLINGS as i32 {
        let x = boundary + sign * 2f64.powi(k - 4);
        if p.speed_integral_tail(|_| 1.0, x, dir)? <= HIST_TAIL_MASS * total {
            return Ok(x);
        }
    }
    Err(Error::OneSidedCondition(format!(
        "stationary law on the open side of {boundary} has no usable tail"
    )))
}

/// Simulate with reflection at a single boundary: downward control keeps the
/// process at or below `boundary`, upward control at or above it.
pub fn simulate_one_sided(
    p: &Problem,
    boundary: f64,
    side: Side,
    cfg: &SimConfig,
) -> Result<SimEstimate> {
    cfg.validate()?;
    if !boundary.is_finite() {
        return Err(Error::InvalidSimConfig(format!(
            "boundary {boundary} is not finite"
        )));
    }
    let (lo, hi) = match side {
        Side::DownControl => (f64::NEG_INFINITY, boundary),
        Side::UpControl => (boundary, f64::INFINITY),
    };
    if !(lo <= cfg.x0 && cfg.x0 <= hi) {
        return Err(Error::InvalidSimConfig(format!(
            "x0 = {} is on the controlled side of {boundary}",
            cfg.x0
        )));
    }
    let range = match cfg.hist_range {
        Some(r) => r,
        None => {
            let end = open_end(p, boundary, side)?;
            if end < boundary {
                (end, boundary)
            } else {
                (boundary, end)
            }
        }
    };
    simulate(p, lo, hi, cfg, range)
}

/// Sup over bins of `|empirical mass - stationary mass|` for the law reflected at
/// `a` and `b`; either end may be infinite. End bins absorb the mass beyond the
/// histogram range, matching how samples are binned.
pub fn occupation_vs_stationary(est: &SimEstimate, p: &Problem, a: f64, b: f64) -> Result<f64> {
    let edges = &est.histogram.edges;
    let n = est.histogram.masses.len();
    let measure = |lo: f64, hi: f64| -> Result<f64> {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => p.speed_measure(lo, hi),
            (false, true) => p.speed_integral_tail(|_| 1.0, hi, Direction::Down),
            (true, false) => p.speed_integral_tail(|_| 1.0, lo, Direction::Up),
            (false, false) => Err(Error::OutOfDomain("both ends infinite".into())),
        }
    };
    let total = measure(a, b)?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let lo = if i == 0 { a } else { edges[i].max(a) };
        let hi = if i == n - 1 { b } else { edges[i + 1].min(b) };
        let target = if lo < hi {
            measure(lo, hi)? / total
        } else {
            0.0
        };
        worst = worst.max((est.histogram.masses[i] - target).abs());
    }
    Ok(worst)
}

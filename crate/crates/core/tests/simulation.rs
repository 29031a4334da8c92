use std::time::Instant;

use ergodic::closedform::ou_one_sided_zeta;
use ergodic::sim::{occupation_vs_stationary, simulate_one_sided, simulate_reflected, SimConfig};
use ergodic::solver::{self, Side};
use ergodic::Problem;

fn driftless() -> Problem {
    Problem::from_exprs("0", "1", "abs(x)", 1.0, 1.0).unwrap()
}

#[test]
fn driftless_optimum_matches_analytic_cost() {
    let p = driftless();
    let cfg = SimConfig::default();
    let start = Instant::now();
    let est = simulate_reflected(&p, -1.0, 1.0, &cfg).unwrap();
    assert!(start.elapsed().as_secs_f64() < 60.0);
    assert!(
        (est.lambda_hat - 1.0).abs() < 3.0 * est.lambda_se,
        "{} ± {}",
        est.lambda_hat,
        est.lambda_se
    );
    assert!((est.lambda_hat - 1.0).abs() < 0.02);
    // the projected walk reflects like a process on an interval widened by
    // 0.5826 sigma sqrt(dt) at each end, so its control rates sit just below 1/4
    let widened = 2.0 + 2.0 * 0.5826 * cfg.dt.sqrt();
    let rate = 1.0 / (2.0 * widened);
    assert!(
        (est.alpha_hat - rate).abs() < 3.0 * est.alpha_se,
        "{} vs {rate}",
        est.alpha_hat
    );
    assert!(
        (est.beta_hat - rate).abs() < 3.0 * est.beta_se,
        "{} vs {rate}",
        est.beta_hat
    );
    assert!(occupation_vs_stationary(&est, &p, -1.0, 1.0).unwrap() < 0.01);
    let again = simulate_reflected(&p, -1.0, 1.0, &cfg).unwrap();
    assert_eq!(est, again);
}

#[test]
fn cost_bias_shrinks_with_step() {
    let p = driftless();
    let gap = |dt: f64| {
        let cfg = SimConfig {
            dt,
            horizon: 1000.0,
            burn_in: 50.0,
            replicates: 16,
            ..SimConfig::default()
        };
        let est = simulate_reflected(&p, -1.5, 1.5, &cfg).unwrap();
        (
            est.lambda_hat - ergodic::solver::average_cost(&p, -1.5, 1.5).unwrap(),
            est.lambda_se,
        )
    };
    let (coarse, se_c) = gap(4e-3);
    let (fine, se_f) = gap(1e-3);
    assert!(
        fine.abs() < coarse.abs() + 3.0 * (se_c * se_c + se_f * se_f).sqrt(),
        "{coarse} -> {fine}"
    );
}

#[test]
fn suboptimal_boundaries_cost_more() {
    let p = driftless();
    let cfg = SimConfig {
        horizon: 1000.0,
        burn_in: 50.0,
        ..SimConfig::default()
    };
    let wide = simulate_reflected(&p, -2.0, 2.0, &cfg).unwrap();
    let opt = simulate_reflected(&p, -1.0, 1.0, &cfg).unwrap();
    assert!((wide.lambda_hat - 1.25).abs() < 3.0 * wide.lambda_se);
    let joint = (wide.lambda_se.powi(2) + opt.lambda_se.powi(2)).sqrt();
    assert!(wide.lambda_hat - opt.lambda_hat > 3.0 * joint);
}

#[test]
fn drifted_occupation_follows_exponential_density() {
    let p = Problem::from_exprs("0.1", "1", "abs(x)", 1.0, 1.0).unwrap();
    let cfg = SimConfig {
        horizon: 2000.0,
        replicates: 8,
        ..SimConfig::default()
    };
    let est = simulate_reflected(&p, -1.0, 1.0, &cfg).unwrap();
    assert!(occupation_vs_stationary(&est, &p, -1.0, 1.0).unwrap() < 0.02);
}

#[test]
fn ou_one_sided_at_optimum() {
    let p = Problem::from_exprs("-x", "1", "abs(x)", 0.0, 0.1).unwrap();
    let pi = p.default_pi_pair().unwrap();
    let b = solver::solve_one_sided_down(&p, &pi).unwrap();
    assert!((b.boundary - ou_one_sided_zeta(1.0, 0.1).unwrap()).abs() < 1e-8);
    let cfg = SimConfig {
        horizon: 1000.0,
        burn_in: 50.0,
        ..SimConfig::default()
    };
    let est = simulate_one_sided(&p, b.boundary, Side::DownControl, &cfg).unwrap();
    assert!(
        (est.lambda_hat - b.lambda).abs() < 3.0 * est.lambda_se,
        "{} vs {}",
        est.lambda_hat,
        b.lambda
    );
    let gap = occupation_vs_stationary(&est, &p, f64::NEG_INFINITY, b.boundary).unwrap();
    assert!(gap < 0.02, "{gap}");
    for shift in [-0.25, 0.25] {
        let off = simulate_one_sided(&p, b.boundary + shift, Side::DownControl, &cfg).unwrap();
        let joint = (off.lambda_se.powi(2) + est.lambda_se.powi(2)).sqrt();
        assert!(
            off.lambda_hat - est.lambda_hat > 2.0 * joint,
            "shift {shift}"
        );
    }
}

use std::path::{Path, PathBuf};
use std::process::Command;

use ergodic_cli::RunConfig;

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

struct Run {
    stdout: String,
    stderr: String,
    code: i32,
}

fn ergodic(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_ergodic"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
        code: out.status.code().unwrap(),
    }
}

fn config(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn field(report: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    let line = report
        .lines()
        .find(|l| l.starts_with(&prefix))
        .unwrap_or_else(|| panic!("no {key} in\n{report}"));
    line[prefix.len()..]
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

const DRIFTLESS: &str = "[problem]\ndrift = \"0\"\nsigma = \"1\"\ncost = \"abs(x)\"\n";

#[test]
fn solve_catalog_piecewise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "p.toml", "[problem]\ncatalog = \"bm_piecewise\"\n");
    let r = ergodic(&["solve", "--config", &cfg]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!((field(&r.stdout, "a*") + 1.632993).abs() < 1e-6);
    assert!((field(&r.stdout, "b*") - 0.816497).abs() < 1e-6);
    assert!(r.stdout.contains("status = ok"));
}

#[test]
fn solve_expressions_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &dir,
        "k.toml",
        "[problem]\ndrift = \"0.05*x\"\nsigma = \"1\"\ncost = \"abs(x)\"\n",
    );
    let r = ergodic(&["solve", "--config", &cfg]);
    assert_eq!(r.code, 0);
    assert!((field(&r.stdout, "a*") + 0.972044).abs() < 1e-6);
    assert!((field(&r.stdout, "b*") - 0.972044).abs() < 1e-6);
}

#[test]
fn solve_exp_cost_beyond_threshold_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &dir,
        "e.toml",
        "[problem]\ncatalog = \"exp_cost_driftless\"\n[problem.params]\nsigma = 1.5\n",
    );
    let r = ergodic(&["solve", "--config", &cfg]);
    assert_eq!(r.code, 2);
    assert!(
        r.stderr
            .contains("existence not established (σ ≥ √2 regime)"),
        "{}",
        r.stderr
    );
}

#[test]
fn solve_json_and_value_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &dir,
        "d.toml",
        &format!("{DRIFTLESS}[solver]\nvalue_grid = 65\n"),
    );
    let csv = dir.path().join("v.csv");
    let r = ergodic(&[
        "solve",
        "--config",
        &cfg,
        "--json",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert!((doc["solution"]["a_star"].as_f64().unwrap() + 1.0).abs() < 1e-8);
    assert_eq!(doc["value_table"]["convex"], true);
    let table = std::fs::read_to_string(csv).unwrap();
    assert!(table.starts_with("x,v,v_prime,p_weight\n"));
    assert!(table.lines().count() > 65);
}

#[test]
fn solve_one_sided_and_fixed_modes() {
    let dir = tempfile::tempdir().unwrap();
    let ou = config(&dir, "o.toml", "[problem]\ncatalog = \"ou_one_sided\"\n");
    let r = ergodic(&["solve", "--config", &ou]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("mode: one_sided down_control"));
    assert!((field(&r.stdout, "b*") - 0.535234705578).abs() < 1e-9);

    let d = config(&dir, "d.toml", DRIFTLESS);
    let r = ergodic(&["solve", "--config", &d, "--fix-a", "-2"]);
    assert_eq!(r.code, 0);
    // with a fixed at -2 the upper boundary solves b^2 + 4b - 6 = 0
    assert!((field(&r.stdout, "b*") - (10f64.sqrt() - 2.0)).abs() < 1e-8);
    let r = ergodic(&["solve", "--config", &d, "--fix-b", "2"]);
    assert!((field(&r.stdout, "a*") - (2.0 - 10f64.sqrt())).abs() < 1e-8);

    // brownian motion without drift never settles: S' stays 1
    let r = ergodic(&["solve", "--config", &d, "--one-sided", "down"]);
    assert_eq!(r.code, 2, "{}", r.stdout);
    assert!(r.stderr.contains("one-sided condition"));
    let r = ergodic(&["solve", "--config", &d, "--fix-a", "-1", "--fix-b", "1"]);
    assert_eq!(r.code, 1);
}

#[test]
fn input_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad_expr = config(
        &dir,
        "b.toml",
        "[problem]\ndrift = \"0 +\"\nsigma = \"1\"\ncost = \"abs(x)\"\n",
    );
    assert_eq!(ergodic(&["solve", "--config", &bad_expr]).code, 1);
    let both = config(
        &dir,
        "c.toml",
        "[problem]\ncatalog = \"bm_symmetric\"\ncost = \"x\"\n",
    );
    assert_eq!(ergodic(&["solve", "--config", &both]).code, 1);
    let unknown = config(
        &dir,
        "u.toml",
        "[problem]\ncatalog = \"bm_symmetric\"\n[problem.params]\nzeta = 1.0\n",
    );
    let r = ergodic(&["solve", "--config", &unknown]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("zeta"));
    assert_eq!(ergodic(&["solve", "--config", "/nonexistent.toml"]).code, 1);
    assert_eq!(ergodic(&["frobnicate"]).code, 1);
    assert_eq!(ergodic(&["--help"]).code, 0);
}

#[test]
fn eval_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let d = config(&dir, "d.toml", DRIFTLESS);
    let eval = |args: &[&str]| -> f64 {
        let mut all = vec!["eval", "--config", &d];
        all.extend_from_slice(args);
        let r = ergodic(&all);
        assert_eq!(r.code, 0, "{}", r.stderr);
        r.stdout.trim().parse().unwrap()
    };
    assert_eq!(eval(&["C", "-1", "1"]), 1.0);
    assert_eq!(eval(&["I1", "0.3", "0.3"]), 2.0);
    assert_eq!(eval(&["S", "-5"]), 1.0);
    assert_eq!(eval(&["m", "-1", "1"]), 4.0);
    assert!((eval(&["vprime", "1"]) - 1.0).abs() < 1e-9);
    assert!((eval(&["p", "-1"]) - 1.0).abs() < 1e-8);

    let a = config(
        &dir,
        "a.toml",
        "[problem]\ncatalog = \"bm_piecewise\"\n[problem.params]\nk1 = 1.0\n",
    );
    let r = ergodic(&["eval", "--config", &a, "g", "-1"]);
    assert!(r.stdout.trim().parse::<f64>().unwrap().abs() < 1e-12);

    let r = ergodic(&["eval", "--config", &d, "nonsense", "1"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("unknown quantity"));
    assert_eq!(ergodic(&["eval", "--config", &d, "C", "1"]).code, 1);
}

#[test]
fn catalog_list_names_every_model() {
    let r = ergodic(&["catalog", "list"]);
    assert_eq!(r.code, 0);
    for id in ergodic::closedform::CatalogId::ALL {
        assert!(r.stdout.contains(id.name()));
    }
}

#[test]
fn dump_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        "[problem]\ndrift = \"mu*x\"\nsigma = \"1\"\ncost = \"abs(x)\"\nbracket1 = [-5.0, 5.0]\n\
                [problem.params]\nmu = 0.05\n[sim]\nreplicates = 4\nboundaries = [-1.0, 1.0]\n\
                [sweep]\nparameter = \"mu\"\nvalues = [0.01, 0.02]\n";
    let cfg = config(&dir, "r.toml", text);
    let r = ergodic(&["--dump-config", "solve", "--config", &cfg]);
    assert_eq!(r.code, 0);
    assert_eq!(
        RunConfig::from_toml(&r.stdout).unwrap(),
        RunConfig::from_toml(text).unwrap()
    );
    let again = config(&dir, "again.toml", &r.stdout);
    assert_eq!(
        ergodic(&["--dump-config", "sweep", "--config", &again]).stdout,
        r.stdout
    );
}

#[test]
fn sweep_records_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &dir,
        "s.toml",
        "[problem]\ncatalog = \"exp_cost_driftless\"\n[sweep]\nparameter = \"sigma\"\nvalues = [1.0, 1.5, 0.5]\n",
    );
    let r = ergodic(&["sweep", "--config", &cfg]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(
        lines[0],
        "sigma,a_star,b_star,lambda_star,residual_i1,residual_i2,status"
    );
    assert!(lines[1].starts_with("1,") && lines[1].ends_with(",ok"));
    assert_eq!(lines[2], "1.5,,,,,,existence_not_established");
    assert!(lines[3].starts_with("0.5,"));

    let bad = config(
        &dir,
        "b.toml",
        "[problem]\ncatalog = \"bm_symmetric\"\n[sweep]\nparameter = \"nu\"\nvalues = [1.0]\n",
    );
    assert_eq!(ergodic(&["sweep", "--config", &bad]).code, 1);
    let undeclared = config(
        &dir,
        "u.toml",
        &format!("{DRIFTLESS}[sweep]\nparameter = \"mu\"\nvalues = [1.0]\n"),
    );
    let r = ergodic(&["sweep", "--config", &undeclared]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("[problem.params]"));
}

fn parse_csv(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn assert_values_match(got: &str, want: &str) {
    let (g, w) = (parse_csv(got), parse_csv(want));
    assert_eq!(g.len(), w.len());
    assert_eq!(g[0], w[0]);
    for (gr, wr) in g.iter().zip(&w).skip(1) {
        assert_eq!(gr.len(), wr.len());
        for (gc, wc) in gr.iter().zip(wr) {
            match (gc.parse::<f64>(), wc.parse::<f64>()) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "{x} vs {y}"),
                _ => assert_eq!(gc, wc),
            }
        }
    }
}

#[test]
fn figure_sweeps_match_golden_files() {
    for name in [
        "figure1_ou_boundaries",
        "figure2_kappa_linearity",
        "figure3_ou_one_sided",
    ] {
        let cfg = repo_file(&format!("configs/{name}.toml"));
        let first = ergodic(&["sweep", "--config", cfg.to_str().unwrap()]);
        assert_eq!(first.code, 0, "{name}: {}", first.stderr);
        let second = ergodic(&["sweep", "--config", cfg.to_str().unwrap()]);
        assert_eq!(first.stdout, second.stdout, "{name} is not byte-stable");
        let golden =
            std::fs::read_to_string(repo_file(&format!("crates/cli/tests/golden/{name}.csv")))
                .unwrap();
        assert_values_match(&first.stdout, &golden);
        assert!(first.stdout.ends_with('\n') && !first.stdout.contains('\r'));
    }
}

#[test]
fn sweep_out_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let cfg = repo_file("configs/figure2_kappa_linearity.toml");
    let r = ergodic(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("wrote 6 rows"));
    assert_eq!(std::fs::read_to_string(out).unwrap().lines().count(), 7);
}

const SHORT_SIM: &str = "[sim]\ndt = 2e-3\nhorizon = 200.0\nreplicates = 4\n";

#[test]
fn simulate_reports_and_flags_suboptimal_policies() {
    let dir = tempfile::tempdir().unwrap();
    let d = config(&dir, "d.toml", &format!("{DRIFTLESS}{SHORT_SIM}"));
    let r = ergodic(&["simulate", "--config", &d, "--at-optimum"]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    assert!(field(&r.stdout, "z").abs() < 3.0);
    assert!(r.stdout.contains("(policy is optimal)"));

    let r = ergodic(&["simulate", "--config", &d, "--boundaries", "-2", "2"]);
    assert_eq!(r.code, 0);
    assert_eq!(field(&r.stdout, "analytic"), 1.25);
    assert!(field(&r.stdout, "z").abs() < 4.0);
    assert!(r.stdout.contains("above optimal by 0.25"));

    let missing = config(&dir, "m.toml", DRIFTLESS);
    assert_eq!(
        ergodic(&["simulate", "--config", &missing, "--at-optimum"]).code,
        1
    );
    assert_eq!(ergodic(&["simulate", "--config", &d]).code, 1);
}

#[test]
fn simulate_is_deterministic_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = config(
        &dir,
        "d.toml",
        &format!("{DRIFTLESS}{SHORT_SIM}boundaries = [-1.0, 1.0]\n"),
    );
    let (h, rep) = (dir.path().join("h.csv"), dir.path().join("r.csv"));
    let args = [
        "simulate",
        "--config",
        &d,
        "--hist-out",
        h.to_str().unwrap(),
        "--replicates-out",
        rep.to_str().unwrap(),
    ];
    let first = ergodic(&args);
    let (h1, r1) = (std::fs::read(&h).unwrap(), std::fs::read(&rep).unwrap());
    let second = ergodic(&args);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(h1, std::fs::read(&h).unwrap());
    assert_eq!(r1, std::fs::read(&rep).unwrap());
    assert_eq!(String::from_utf8(r1).unwrap().lines().count(), 5);
}

#[test]
fn simulate_far_from_theory_exits_3() {
    // no burn-in and a horizon far shorter than the mixing time: the path never
    // leaves the neighbourhood of x0 = a, so lambda_hat sits near c(a) = 1, not C(a, b)
    let dir = tempfile::tempdir().unwrap();
    let biased = config(
        &dir,
        "b.toml",
        "[problem]\ndrift = \"0\"\nsigma = \"0.05\"\ncost = \"abs(x)\"\n\
         [sim]\ndt = 1e-3\nhorizon = 1.0\nburn_in = 0.0\nreplicates = 8\nx0 = -1.0\n",
    );
    let r = ergodic(&[
        "simulate",
        "--config",
        &biased,
        "--boundaries",
        "-1",
        "1",
        "--json",
    ]);
    assert_eq!(r.code, 3, "{}", r.stdout);
    assert!(r.stderr.contains("verification failure"));
    let doc: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert!(doc["z"].as_f64().unwrap().abs() > 4.0);
}

#[test]
fn simulate_one_sided_at_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let ou = config(
        &dir,
        "o.toml",
        &format!("[problem]\ncatalog = \"ou_one_sided\"\n{SHORT_SIM}"),
    );
    let r = ergodic(&["simulate", "--config", &ou, "--at-optimum"]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    assert!(r.stdout.contains("policy: down_control at 0.535234705578"));
    let r = ergodic(&["simulate", "--config", &ou, "--boundary", "1.0"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("above optimal"));
    assert_eq!(ergodic(&["simulate", "--config", &ou]).code, 1);
}

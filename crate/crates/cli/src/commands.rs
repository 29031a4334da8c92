//! Argument parsing and the commands behind the `ergodic` binary.
//!
//! Every command returns an [`Output`] instead of printing, so the whole tool
//! can be driven in-process.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ergodic::closedform::{CatalogId, CatalogModel, Reference};
use ergodic::format::g12;
use ergodic::sim::{occupation_vs_stationary, simulate_one_sided, simulate_reflected, SimEstimate};
use ergodic::solver::{
    self, average_cost, solve_a_given_b, solve_b_given_a, solve_one_sided_down, solve_one_sided_up,
    solve_two_boundary, OneSidedSolution, Side, SolveStatus, TwoBoundarySolution,
};
use ergodic::value::{build_value_table, convex_weight, marginal_value};
use ergodic::{PiPair, Problem};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ResolvedProblem, SolveMode};
use crate::{CliError, Exit, Output, RunConfig};

/// `|z|` above which a simulation is reported as disagreeing with theory.
pub const Z_FAIL: f64 = 4.0;

#[derive(Debug, Parser)]
#[command(
    name = "ergodic",
    version,
    about = "Optimal reflection boundaries for ergodic singular control"
)]
pub struct Cli {
    /// Print the parsed config as TOML and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the optimal boundaries.
    Solve(SolveArgs),
    /// Solve over a parameter grid and write CSV.
    Sweep(SweepArgs),
    /// Monte Carlo estimate of the cost of a reflection policy.
    Simulate(SimulateArgs),
    /// Evaluate a single model quantity.
    Eval(EvalArgs),
    /// Built-in models with closed-form references.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CatalogAction {
    /// List catalog ids, parameters and defaults.
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Down,
    Up,
}

impl SideArg {
    fn side(self) -> Side {
        match self {
            SideArg::Down => Side::DownControl,
            SideArg::Up => Side::UpControl,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Write the value table (two-boundary problems only).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
    #[arg(long, value_enum, conflicts_with_all = ["fix_a", "fix_b"])]
    pub one_sided: Option<SideArg>,
    /// Hold the lower boundary fixed and optimize the upper one.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "fix_b")]
    pub fix_a: Option<f64>,
    /// Hold the upper boundary fixed and optimize the lower one.
    #[arg(long, allow_negative_numbers = true)]
    pub fix_b: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true,
          conflicts_with_all = ["at_optimum", "one_sided", "boundary"])]
    pub boundaries: Option<Vec<f64>>,
    /// Use the solved optimal boundaries.
    #[arg(long, conflicts_with = "boundary")]
    pub at_optimum: bool,
    #[arg(long, value_enum)]
    pub one_sided: Option<SideArg>,
    #[arg(long, allow_negative_numbers = true)]
    pub boundary: Option<f64>,
    #[arg(long)]
    pub hist_out: Option<PathBuf>,
    #[arg(long)]
    pub replicates_out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// One of: S, L, mprime, m, pi1, pi2, C, I1, I2, g, vprime, p, J1, J2, mu, sigma, c.
    pub quantity: String,
    #[arg(allow_negative_numbers = true)]
    pub args: Vec<f64>,
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Output {
                    stdout: String::new(),
                    stderr: text,
                    exit: Exit::Input,
                }
            } else {
                Output::ok(text)
            };
        }
    };
    match dispatch(&cli) {
        Ok(out) => out,
        Err(e) => Output {
            stdout: String::new(),
            stderr: format!("{e}\n"),
            exit: e.exit(),
        },
    }
}

fn dispatch(cli: &Cli) -> Result<Output, CliError> {
    let config_path = match &cli.command {
        Command::Solve(a) => Some(&a.config),
        Command::Sweep(a) => Some(&a.config),
        Command::Simulate(a) => Some(&a.config),
        Command::Eval(a) => Some(&a.config),
        Command::Catalog { .. } => None,
    };
    if cli.dump_config {
        let path = config_path
            .ok_or_else(|| CliError::Input("--dump-config needs a command with --config".into()))?;
        return Ok(Output::ok(RunConfig::load(path)?.to_toml()));
    }
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Catalog {
            action: CatalogAction::List,
        } => Ok(Output::ok(catalog_list())),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

/// The mode a problem is solved in when no flag says otherwise.
fn default_mode(r: &ResolvedProblem) -> SolveMode {
    match r.catalog.as_ref().map(|m| m.reference()) {
        Some(Ok(Reference::OneSided {
            side: Side::DownControl,
            ..
        })) => SolveMode::OneSidedDown,
        Some(Ok(Reference::OneSided {
            side: Side::UpControl,
            ..
        })) => SolveMode::OneSidedUp,
        _ => SolveMode::TwoBoundary,
    }
}

fn mode_of(side: Side) -> SolveMode {
    match side {
        Side::DownControl => SolveMode::OneSidedDown,
        Side::UpControl => SolveMode::OneSidedUp,
    }
}

fn pi_pair(p: &Problem) -> Result<PiPair, CliError> {
    Ok(p.default_pi_pair()?)
}

/// Attach the catalog's explanation to an existence failure.
fn with_hint(e: CliError, catalog: Option<&CatalogModel>) -> CliError {
    let CliError::Existence { hint: None, detail } = e else {
        return e;
    };
    let hint = match catalog.map(|m| (m.id, m.reference())) {
        Some((CatalogId::ExpCostDriftless, Ok(Reference::NotExists { .. }))) => {
            Some("σ ≥ √2 regime".to_string())
        }
        Some((_, Ok(Reference::NotExists { reason }))) => Some(reason),
        _ => None,
    };
    CliError::Existence { hint, detail }
}

fn solve_mode(p: &Problem, pi: &PiPair, mode: SolveMode) -> Result<Solved, CliError> {
    Ok(match mode {
        SolveMode::TwoBoundary => Solved::Two(solve_two_boundary(p, pi)?),
        SolveMode::OneSidedDown => Solved::One(solve_one_sided_down(p, pi)?),
        SolveMode::OneSidedUp => Solved::One(solve_one_sided_up(p, pi)?),
    })
}

enum Solved {
    Two(TwoBoundarySolution),
    One(OneSidedSolution),
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Ok => "ok",
        SolveStatus::Warning => "warning",
    }
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::DownControl => "down_control",
        Side::UpControl => "up_control",
    }
}

// ---- solve ----

fn cmd_solve(args: &SolveArgs) -> Result<Output, CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let r = cfg.resolve(&[])?;
    let p = &r.problem;
    let catalog = r.catalog.as_ref();
    let pi = pi_pair(p).map_err(|e| with_hint(e, catalog))?;

    if let Some(a) = args.fix_a {
        let s = solve_b_given_a(p, &pi, a).map_err(|e| with_hint(e.into(), catalog))?;
        return fixed_report(args, &r, &pi, "a", a, &s);
    }
    if let Some(b) = args.fix_b {
        let s = solve_a_given_b(p, &pi, b).map_err(|e| with_hint(e.into(), catalog))?;
        return fixed_report(args, &r, &pi, "b", b, &s);
    }
    let mode = args
        .one_sided
        .map(|s| mode_of(s.side()))
        .unwrap_or_else(|| default_mode(&r));
    if args.out.is_some() && mode != SolveMode::TwoBoundary {
        return Err(CliError::Input(
            "--out writes a value table, which needs a two-boundary solve".into(),
        ));
    }
    let reference = catalog.map(|m| m.reference());
    match solve_mode(p, &pi, mode).map_err(|e| with_hint(e, catalog))? {
        Solved::Two(sol) => two_boundary_report(args, &cfg, &r, &sol, reference),
        Solved::One(sol) => one_sided_report(args, &r, &pi, &sol, reference),
    }
}

fn diagnostics_lines(out: &mut String, pi: &PiPair) {
    for d in &pi.diagnostics {
        let _ = writeln!(out, "diagnostic: {d}");
    }
}

fn two_boundary_report(
    args: &SolveArgs,
    cfg: &RunConfig,
    r: &ResolvedProblem,
    sol: &TwoBoundarySolution,
    reference: Option<ergodic::Result<Reference>>,
) -> Result<Output, CliError> {
    let p = &r.problem;
    let mut warnings = sol.warnings.clone();
    let table = match build_value_table(p, sol, cfg.value_grid()) {
        Ok(t) => Some(t),
        Err(e) => {
            warnings.push(format!("value table: {e}"));
            None
        }
    };
    if let (Some(path), Some(t)) = (&args.out, &table) {
        write_file(path, &t.to_csv())?;
    }
    let reference = match reference {
        Some(Ok(r)) => Some(r),
        Some(Err(e)) => {
            warnings.push(format!("catalog reference unavailable: {e}"));
            None
        }
        None => None,
    };
    if let Some(Reference::NotExists { reason }) = &reference {
        warnings.push(format!(
            "solver converged but the catalog reports no optimum: {reason}"
        ));
    }

    if args.json {
        let table_json = table.as_ref().map(|t| {
            json!({
                "points": t.grid.len(),
                "hjb_residual_max": t.hjb_residual_max,
                "min_v_second": t.min_v_second,
                "convex": t.convex,
            })
        });
        let doc = json!({
            "mode": "two_boundary",
            "model": r.label,
            "solution": sol,
            "value_table": table_json,
            "reference": reference,
            "warnings": warnings,
        });
        return Ok(Output::ok(format!(
            "{}\n",
            serde_json::to_string_pretty(&doc).expect("serializable")
        )));
    }

    let mut out = String::new();
    let _ = writeln!(out, "model: {}", r.label);
    let _ = writeln!(out, "mode: two_boundary");
    let _ = writeln!(out, "a* = {}", g12(sol.a_star));
    let _ = writeln!(out, "b* = {}", g12(sol.b_star));
    let _ = writeln!(out, "lambda* = {}", g12(sol.lambda_star));
    let _ = writeln!(out, "residual I1 = {}", g12(sol.residual_i1));
    let _ = writeln!(out, "residual I2 = {}", g12(sol.residual_i2));
    let _ = writeln!(out, "residual match = {}", g12(sol.residual_match));
    let _ = writeln!(out, "xhat1 = {}", g12(sol.pi.xhat1));
    let _ = writeln!(out, "xhat2 = {}", g12(sol.pi.xhat2));
    let _ = writeln!(out, "g domain endpoint = {}", g12(sol.domain_endpoint));
    let _ = writeln!(out, "iterations = {}", sol.iterations);
    if let Some(t) = &table {
        let _ = writeln!(
            out,
            "value table: {} points, hjb residual max = {}, min v'' = {}, convex = {}",
            t.grid.len(),
            g12(t.hjb_residual_max),
            g12(t.min_v_second),
            if t.convex { "yes" } else { "no" }
        );
    }
    if let Some(Reference::TwoBoundary {
        a_star,
        b_star,
        lambda_star,
    }) = &reference
    {
        let _ = writeln!(
            out,
            "reference: a* = {}, b* = {}, lambda* = {} (|da| = {}, |db| = {})",
            g12(*a_star),
            g12(*b_star),
            g12(*lambda_star),
            g12((sol.a_star - a_star).abs()),
            g12((sol.b_star - b_star).abs())
        );
    }
    diagnostics_lines(&mut out, &sol.pi);
    for w in &warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let status = if warnings.is_empty() {
        sol.status
    } else {
        SolveStatus::Warning
    };
    let _ = writeln!(out, "status = {}", status_name(status));
    Ok(Output::ok(out))
}

fn one_sided_report(
    args: &SolveArgs,
    r: &ResolvedProblem,
    pi: &PiPair,
    sol: &OneSidedSolution,
    reference: Option<ergodic::Result<Reference>>,
) -> Result<Output, CliError> {
    let reference = reference.and_then(|r| r.ok());
    if args.json {
        let doc = json!({
            "mode": side_name(sol.side),
            "model": r.label,
            "solution": sol,
            "reference": reference,
            "diagnostics": pi.diagnostics,
        });
        return Ok(Output::ok(format!(
            "{}\n",
            serde_json::to_string_pretty(&doc).expect("serializable")
        )));
    }
    let mut out = String::new();
    let _ = writeln!(out, "model: {}", r.label);
    let _ = writeln!(out, "mode: one_sided {}", side_name(sol.side));
    let name = match sol.side {
        Side::DownControl => "b*",
        Side::UpControl => "a*",
    };
    let _ = writeln!(out, "{name} = {}", g12(sol.boundary));
    let _ = writeln!(out, "lambda* = {}", g12(sol.lambda));
    let _ = writeln!(out, "residual = {}", g12(sol.residual));
    let _ = writeln!(out, "iterations = {}", sol.iterations);
    if let Some(Reference::OneSided {
        boundary, lambda, ..
    }) = &reference
    {
        let _ = writeln!(
            out,
            "reference: boundary = {}, lambda = {} (|d| = {})",
            g12(*boundary),
            g12(*lambda),
            g12((sol.boundary - boundary).abs())
        );
    }
    diagnostics_lines(&mut out, pi);
    Ok(Output::ok(out))
}

fn fixed_report(
    args: &SolveArgs,
    r: &ResolvedProblem,
    pi: &PiPair,
    fixed_name: &str,
    fixed: f64,
    sol: &OneSidedSolution,
) -> Result<Output, CliError> {
    if args.out.is_some() {
        return Err(CliError::Input(
            "--out writes a value table, which needs a two-boundary solve".into(),
        ));
    }
    let free = if fixed_name == "a" { "b" } else { "a" };
    if args.json {
        let doc = json!({
            "mode": format!("fixed_{fixed_name}"),
            "model": r.label,
            "fixed": fixed,
            "boundary": sol.boundary,
            "lambda": sol.lambda,
            "residual": sol.residual,
            "iterations": sol.iterations,
            "diagnostics": pi.diagnostics,
        });
        return Ok(Output::ok(format!(
            "{}\n",
            serde_json::to_string_pretty(&doc).expect("serializable")
        )));
    }
    let mut out = String::new();
    let _ = writeln!(out, "model: {}", r.label);
    let _ = writeln!(out, "mode: fixed_{fixed_name}");
    let _ = writeln!(out, "{fixed_name} = {} (fixed)", g12(fixed));
    let _ = writeln!(out, "{free}* = {}", g12(sol.boundary));
    let _ = writeln!(out, "lambda = {}", g12(sol.lambda));
    let _ = writeln!(out, "residual = {}", g12(sol.residual));
    let _ = writeln!(out, "iterations = {}", sol.iterations);
    diagnostics_lines(&mut out, pi);
    Ok(Output::ok(out))
}

// ---- sweep ----

fn cmd_sweep(args: &SweepArgs) -> Result<Output, CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::Input("sweep needs a [sweep] section".into()))?;
    let mut names = vec![sweep.parameter.clone()];
    names.extend(sweep.series_parameter.clone());
    for name in &names {
        let known = match cfg.catalog_id()? {
            Some(id) => id.defaults().iter().any(|d| d.0 == name),
            None => cfg.problem.params.contains_key(name),
        };
        if !known {
            return Err(CliError::Input(match cfg.catalog_id()? {
                Some(id) => format!("sweep: model {id} has no parameter '{name}'"),
                None => format!("sweep: parameter '{name}' is not declared in [problem.params]"),
            }));
        }
    }

    let series: Vec<Option<f64>> = match &sweep.series_values {
        Some(v) => v.iter().map(|&s| Some(s)).collect(),
        None => vec![None],
    };
    let mut points = Vec::new();
    for s in &series {
        for &v in &sweep.values {
            let mut overrides = vec![(sweep.parameter.clone(), v)];
            if let (Some(name), Some(s)) = (&sweep.series_parameter, s) {
                overrides.push((name.clone(), *s));
            }
            let r = cfg.resolve(&overrides)?;
            points.push((*s, v, r));
        }
    }
    let mode = sweep.mode.unwrap_or_else(|| default_mode(&points[0].2));

    let rows: Vec<String> = points
        .par_iter()
        .map(|(s, v, r)| {
            let mut row = String::new();
            if let Some(s) = s {
                row.push_str(&format!("{},", g12(*s)));
            }
            row.push_str(&format!("{},", g12(*v)));
            let result = pi_pair(&r.problem).and_then(|pi| solve_mode(&r.problem, &pi, mode));
            row.push_str(&match result {
                Ok(Solved::Two(t)) => format!(
                    "{},{},{},{},{},{}",
                    g12(t.a_star),
                    g12(t.b_star),
                    g12(t.lambda_star),
                    g12(t.residual_i1),
                    g12(t.residual_i2),
                    status_name(t.status)
                ),
                Ok(Solved::One(o)) => {
                    format!(
                        "{},{},{},ok",
                        g12(o.boundary),
                        g12(o.lambda),
                        g12(o.residual)
                    )
                }
                Err(e) => {
                    let blanks = if mode == SolveMode::TwoBoundary {
                        ",,,,,"
                    } else {
                        ",,,"
                    };
                    let status = match e {
                        CliError::Existence { .. } => "existence_not_established",
                        CliError::Input(_) => "error",
                    };
                    format!("{blanks}{status}")
                }
            });
            row
        })
        .collect();

    let mut csv = String::new();
    if let Some(name) = &sweep.series_parameter {
        csv.push_str(&format!("{name},"));
    }
    csv.push_str(&sweep.parameter);
    csv.push_str(if mode == SolveMode::TwoBoundary {
        ",a_star,b_star,lambda_star,residual_i1,residual_i2,status\n"
    } else {
        ",boundary,lambda,residual,status\n"
    });
    for row in rows {
        csv.push_str(&row);
        csv.push('\n');
    }
    match &args.out {
        Some(path) => {
            write_file(path, &csv)?;
            Ok(Output::ok(format!(
                "wrote {} rows to {}\n",
                points.len(),
                path.display()
            )))
        }
        None => Ok(Output::ok(csv)),
    }
}

// ---- simulate ----

enum Policy {
    Two { a: f64, b: f64 },
    One { boundary: f64, side: Side },
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Output, CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let r = cfg.resolve(&[])?;
    let p = &r.problem;
    let catalog = r.catalog.as_ref();
    let side = match (args.one_sided, &args.boundaries) {
        (Some(s), _) => Some(s.side()),
        (None, Some(_)) => None,
        (None, None) => match default_mode(&r) {
            SolveMode::OneSidedDown => Some(Side::DownControl),
            SolveMode::OneSidedUp => Some(Side::UpControl),
            SolveMode::TwoBoundary => None,
        },
    };

    // Optimal policy, needed for --at-optimum and for the comparison line.
    let optimum = || -> Result<Solved, CliError> {
        let pi = pi_pair(p)?;
        let mode = side.map(mode_of).unwrap_or(SolveMode::TwoBoundary);
        solve_mode(p, &pi, mode).map_err(|e| with_hint(e, catalog))
    };

    let policy = match side {
        Some(side) => {
            let boundary = match (args.boundary, args.at_optimum) {
                (Some(x), _) => x,
                (None, true) => match optimum()? {
                    Solved::One(o) => o.boundary,
                    Solved::Two(_) => unreachable!("one-sided mode"),
                },
                (None, false) => {
                    return Err(CliError::Input(
                        "one-sided simulate needs --boundary or --at-optimum".into(),
                    ))
                }
            };
            Policy::One { boundary, side }
        }
        None => {
            if args.boundary.is_some() {
                return Err(CliError::Input(
                    "--boundary applies to one-sided policies; use --boundaries A B".into(),
                ));
            }
            let (a, b) = if let Some(v) = &args.boundaries {
                (v[0], v[1])
            } else if args.at_optimum {
                match optimum()? {
                    Solved::Two(t) => (t.a_star, t.b_star),
                    Solved::One(_) => unreachable!("two-boundary mode"),
                }
            } else if let Some([a, b]) = cfg.sim.as_ref().and_then(|s| s.boundaries) {
                (a, b)
            } else {
                return Err(CliError::Input(
                    "simulate needs boundaries: --boundaries A B, --at-optimum or sim.boundaries"
                        .into(),
                ));
            };
            if !(a < b) {
                return Err(CliError::Input(format!(
                    "boundaries must satisfy a < b, got ({a}, {b})"
                )));
            }
            Policy::Two { a, b }
        }
    };

    let (est, analytic, gap, rates) = match policy {
        Policy::Two { a, b } => {
            let sim_cfg = cfg.sim_config(0.5 * (a + b))?;
            let est = simulate_reflected(p, a, b, &sim_cfg)?;
            let gap = occupation_vs_stationary(&est, p, a, b)?;
            (
                est,
                average_cost(p, a, b)?,
                gap,
                Some(p.control_rates(a, b)?),
            )
        }
        Policy::One { boundary, side } => {
            let sim_cfg = cfg.sim_config(boundary)?;
            let est = simulate_one_sided(p, boundary, side, &sim_cfg)?;
            let (lo, hi, j) = match side {
                Side::DownControl => (f64::NEG_INFINITY, boundary, solver::j1(p, boundary)?),
                Side::UpControl => (boundary, f64::INFINITY, solver::j2(p, boundary)?),
            };
            let gap = occupation_vs_stationary(&est, p, lo, hi)?;
            (est, j, gap, None)
        }
    };
    let z = if est.lambda_se > 0.0 {
        (est.lambda_hat - analytic) / est.lambda_se
    } else {
        0.0
    };
    let optimal = match optimum() {
        Ok(Solved::Two(t)) => Some(t.lambda_star),
        Ok(Solved::One(o)) => Some(o.lambda),
        Err(_) => None,
    };
    let above = optimal.map(|l| analytic - l > 1e-6 * (1.0 + l.abs()));

    if let Some(path) = &args.hist_out {
        write_file(path, &est.histogram_csv())?;
    }
    if let Some(path) = &args.replicates_out {
        write_file(path, &est.replicates_csv())?;
    }
    let exit = if z.abs() > Z_FAIL {
        Exit::Verification
    } else {
        Exit::Ok
    };

    let stdout = if args.json {
        let (a, b, boundary) = match policy {
            Policy::Two { a, b } => (Some(a), Some(b), None),
            Policy::One { boundary, .. } => (None, None, Some(boundary)),
        };
        let doc = json!({
            "model": r.label,
            "a": a,
            "b": b,
            "boundary": boundary,
            "estimate": sim_summary(&est),
            "analytic": analytic,
            "analytic_rates": rates,
            "z": z,
            "occupation_gap": gap,
            "optimal_lambda": optimal,
            "above_optimal": above,
        });
        format!(
            "{}\n",
            serde_json::to_string_pretty(&doc).expect("serializable")
        )
    } else {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}", r.label);
        match policy {
            Policy::Two { a, b } => {
                let _ = writeln!(out, "policy: reflect at a = {}, b = {}", g12(a), g12(b));
            }
            Policy::One { boundary, side } => {
                let _ = writeln!(out, "policy: {} at {}", side_name(side), g12(boundary));
            }
        }
        let _ = writeln!(out, "replicates = {}", est.replicates.len());
        let _ = writeln!(
            out,
            "lambda_hat = {} +/- {}",
            g12(est.lambda_hat),
            g12(est.lambda_se)
        );
        let _ = writeln!(
            out,
            "alpha_hat = {} +/- {}",
            g12(est.alpha_hat),
            g12(est.alpha_se)
        );
        let _ = writeln!(
            out,
            "beta_hat = {} +/- {}",
            g12(est.beta_hat),
            g12(est.beta_se)
        );
        let _ = writeln!(out, "analytic = {}", g12(analytic));
        if let Some((alpha, beta)) = rates {
            let _ = writeln!(out, "analytic alpha = {}, beta = {}", g12(alpha), g12(beta));
        }
        let _ = writeln!(out, "z = {}", g12(z));
        let _ = writeln!(out, "occupation gap = {}", g12(gap));
        match (optimal, above) {
            (Some(l), Some(true)) => {
                let _ = writeln!(
                    out,
                    "optimal lambda* = {} (policy is above optimal by {})",
                    g12(l),
                    g12(analytic - l)
                );
            }
            (Some(l), _) => {
                let _ = writeln!(out, "optimal lambda* = {} (policy is optimal)", g12(l));
            }
            (None, _) => {
                let _ = writeln!(out, "optimal lambda* unavailable");
            }
        }
        let _ = writeln!(
            out,
            "verification = {}",
            if exit == Exit::Ok { "pass" } else { "fail" }
        );
        out
    };
    let stderr = if exit == Exit::Ok {
        String::new()
    } else {
        format!("verification failure: |z| = {} > {Z_FAIL}\n", g12(z.abs()))
    };
    Ok(Output {
        stdout,
        stderr,
        exit,
    })
}

fn sim_summary(est: &SimEstimate) -> serde_json::Value {
    json!({
        "lambda_hat": est.lambda_hat,
        "lambda_se": est.lambda_se,
        "alpha_hat": est.alpha_hat,
        "alpha_se": est.alpha_se,
        "beta_hat": est.beta_hat,
        "beta_se": est.beta_se,
        "replicates": est.replicates.len(),
    })
}

// ---- eval ----

const QUANTITIES: &[(&str, usize)] = &[
    ("S", 1),
    ("L", 1),
    ("mprime", 1),
    ("m", 2),
    ("pi1", 1),
    ("pi2", 1),
    ("C", 2),
    ("I1", 2),
    ("I2", 2),
    ("g", 1),
    ("vprime", 1),
    ("p", 1),
    ("J1", 1),
    ("J2", 1),
    ("mu", 1),
    ("sigma", 1),
    ("c", 1),
];

fn cmd_eval(args: &EvalArgs) -> Result<Output, CliError> {
    let Some(&(name, arity)) = QUANTITIES.iter().find(|q| q.0 == args.quantity) else {
        let known: Vec<&str> = QUANTITIES.iter().map(|q| q.0).collect();
        return Err(CliError::Input(format!(
            "unknown quantity '{}' (known: {})",
            args.quantity,
            known.join(", ")
        )));
    };
    if args.args.len() != arity {
        return Err(CliError::Input(format!(
            "{name} takes {arity} argument(s), got {}",
            args.args.len()
        )));
    }
    let cfg = RunConfig::load(&args.config)?;
    let r = cfg.resolve(&[])?;
    let p = &r.problem;
    let x = args.args[0];
    let y = args.args.get(1).copied().unwrap_or(f64::NAN);
    let two = || -> Result<TwoBoundarySolution, CliError> {
        let pi = pi_pair(p)?;
        solve_two_boundary(p, &pi).map_err(|e| with_hint(e.into(), r.catalog.as_ref()))
    };
    let value = match name {
        "S" => p.scale_density(x)?,
        "L" => p.log_scale(x)?,
        "mprime" => p.speed_density(x)?,
        "m" => p.speed_measure(x, y)?,
        "pi1" => p.pi1(x),
        "pi2" => p.pi2(x),
        "C" => average_cost(p, x, y)?,
        "I1" => solver::foc_i1(p, x, y)?,
        "I2" => solver::foc_i2(p, x, y)?,
        "g" => solver::g_function(p, &pi_pair(p)?, x)?,
        "vprime" => marginal_value(p, &two()?, x)?,
        "p" => convex_weight(p, &two()?, x)?,
        "J1" => solver::j1(p, x)?,
        "J2" => solver::j2(p, x)?,
        "mu" => p.mu(x),
        "sigma" => p.sigma(x),
        "c" => p.c(x),
        _ => unreachable!("quantity table"),
    };
    Ok(Output::ok(format!("{value:?}\n")))
}

// ---- catalog ----

fn catalog_list() -> String {
    let mut out = String::new();
    for id in CatalogId::ALL {
        let params: Vec<String> = id
            .defaults()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let _ = writeln!(out, "{:<24} {}", id.name(), id.description());
        let _ = writeln!(out, "{:<24} params: {}", "", params.join(" "));
    }
    out
}

//! TOML run configuration.
//!
//! ```toml
//! [problem]
//! drift = "mu*x"          # or: catalog = "symmetric_linear_drift"
//! sigma = "1"
//! cost = "abs(x)"
//! q_u = 1.0
//! q_d = 1.0
//! [problem.params]
//! mu = 0.05
//!
//! [solver]
//! quad_tol = 1e-11
//!
//! [sim]
//! horizon = 2000.0
//!
//! [sweep]
//! parameter = "sigma"
//! values = [0.25, 0.5, 1.0]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ergodic::closedform::{CatalogId, CatalogModel};
use ergodic::model::{DEFAULT_BRACKET, DEFAULT_QUAD_TOL, DEFAULT_ROOT_TOL};
use ergodic::sim::{SimConfig, DEFAULT_BINS};
use ergodic::value::DEFAULT_GRID;
use ergodic::{CostSpec, DiffusionSpec, Problem, ScalarFn};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket1: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket2: Option<[f64; 2]>,
    /// Catalog parameters, or named constants usable in the expressions.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_tol: Option<f64>,
    /// Points in the value table written by `solve --out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_grid: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Defaults to 5% of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    /// Defaults to the midpoint of the boundaries (the boundary when one-sided).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundaries: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    TwoBoundary,
    OneSidedDown,
    OneSidedUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_parameter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SolveMode>,
}

/// A problem resolved from its config section.
#[derive(Debug, Clone)]
pub struct ResolvedProblem {
    pub problem: Problem,
    pub catalog: Option<CatalogModel>,
    pub label: String,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn check(&self) -> Result<(), CliError> {
        let p = &self.problem;
        let exprs = [&p.drift, &p.sigma, &p.cost];
        match &p.catalog {
            Some(_) if exprs.iter().any(|e| e.is_some()) || p.q_u.is_some() || p.q_d.is_some() => {
                Err(CliError::Input(
                    "problem: give either a catalog id or drift/sigma/cost expressions, not both \
                     (catalog models fix their own prices)"
                        .into(),
                ))
            }
            None if exprs.iter().any(|e| e.is_none()) => Err(CliError::Input(
                "problem: needs a catalog id or all of drift, sigma and cost".into(),
            )),
            _ => Ok(()),
        }?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(CliError::Input("sweep: values is empty".into()));
            }
            if s.series_parameter.is_some() != s.series_values.is_some() {
                return Err(CliError::Input(
                    "sweep: series_parameter and series_values go together".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn catalog_id(&self) -> Result<Option<CatalogId>, CliError> {
        self.problem
            .catalog
            .as_deref()
            .map(|s| {
                s.parse::<CatalogId>()
                    .map_err(|e| CliError::Input(e.to_string()))
            })
            .transpose()
    }

    /// Build the problem, with `overrides` taking precedence over `[problem.params]`.
    pub fn resolve(&self, overrides: &[(String, f64)]) -> Result<ResolvedProblem, CliError> {
        let sec = &self.problem;
        let mut params = sec.params.clone();
        for (k, v) in overrides {
            params.insert(k.clone(), *v);
        }
        let (problem, catalog, label) = match self.catalog_id()? {
            Some(id) => {
                let model = CatalogModel::new(id, &params)?;
                let (mu, sigma, c, _, _) = model.expressions();
                let label = format!("{id} (drift {mu}, sigma {sigma}, cost {c})");
                (model.problem()?, Some(model), label)
            }
            None => {
                let get = |e: &Option<String>| e.clone().expect("checked");
                let (mu, sigma, c) = (get(&sec.drift), get(&sec.sigma), get(&sec.cost));
                let parse = |name: &str, src: &str| {
                    ScalarFn::parse_with(src, &params)
                        .map_err(|e| CliError::Input(format!("{name}: {e}")))
                };
                let problem = Problem::new(
                    DiffusionSpec {
                        mu: parse("drift", &mu)?,
                        sigma: parse("sigma", &sigma)?,
                    },
                    CostSpec {
                        c: parse("cost", &c)?,
                        q_u: sec.q_u.unwrap_or(1.0),
                        q_d: sec.q_d.unwrap_or(1.0),
                    },
                )?;
                (
                    problem,
                    None,
                    format!("drift {mu}, sigma {sigma}, cost {c}"),
                )
            }
        };
        let mut problem = problem;
        if let Some(a) = sec.anchor {
            problem = problem.with_anchor(a)?;
        }
        let b1 = sec
            .bracket1
            .map(|b| (b[0], b[1]))
            .unwrap_or(DEFAULT_BRACKET);
        let b2 = sec
            .bracket2
            .map(|b| (b[0], b[1]))
            .unwrap_or(DEFAULT_BRACKET);
        problem = problem.with_brackets(b1, b2)?;
        let s = &self.solver;
        problem = problem.with_tolerances(
            s.quad_tol.unwrap_or(DEFAULT_QUAD_TOL),
            s.root_tol.unwrap_or(DEFAULT_ROOT_TOL),
        )?;
        Ok(ResolvedProblem {
            problem,
            catalog,
            label,
        })
    }

    pub fn value_grid(&self) -> usize {
        self.solver.value_grid.unwrap_or(DEFAULT_GRID)
    }

    /// Simulation settings with defaults; `x0` defaults to `default_x0`.
    pub fn sim_config(&self, default_x0: f64) -> Result<SimConfig, CliError> {
        let s = self
            .sim
            .as_ref()
            .ok_or_else(|| CliError::Input("simulate needs a [sim] section".into()))?;
        let base = SimConfig::default();
        let horizon = s.horizon.unwrap_or(base.horizon);
        let cfg = SimConfig {
            dt: s.dt.unwrap_or(base.dt),
            horizon,
            burn_in: s.burn_in.unwrap_or(0.05 * horizon),
            replicates: s.replicates.unwrap_or(base.replicates),
            base_seed: s.base_seed.unwrap_or(base.base_seed),
            x0: s.x0.unwrap_or(default_x0),
            bins: s.bins.unwrap_or(DEFAULT_BINS),
            hist_range: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

//! Optimal reflection policies for long-run average cost singular control of
//! one-dimensional diffusions.
//!
//! The crate is organised bottom-up:
//!
//! * [`expr`]: the expression language used to describe drift, volatility and cost.
//! * [`quad`]: adaptive quadrature, finite and semi-infinite.
//! * [`model`]: scale and speed densities, the shifted costs `pi1`/`pi2`, and their minimizers.
//! * [`solver`]: average cost `C(a, b)`, first-order conditions and boundary solvers.
//! * [`value`]: the marginal value `v'` and its verification table.
//! * [`closedform`]: analytic reference solutions and the model catalog.
//! * [`sim`]: Monte Carlo simulation of reflected diffusions.

// `!(x > 0.0)` also rejects NaN; quadrature and erf tables keep their published digits
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod closedform;
pub mod expr;
pub mod format;
pub mod model;
pub mod normal;
pub mod quad;
pub mod roots;
pub mod sim;
pub mod solver;
pub mod value;

use thiserror::Error;

pub use expr::{parse, Expr, ExprError};
pub use model::{CostSpec, DiffusionSpec, PiPair, Problem, ScalarFn};
pub use quad::{QuadError, QuadResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("quadrature failed: {0}")]
    Quad(#[from] QuadError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("volatility must be positive, got sigma({x}) = {value}")]
    NonPositiveVolatility { x: f64, value: f64 },
    #[error("invalid bracket: {0}")]
    InvalidBracket(String),
    #[error("argument outside the domain: {0}")]
    OutOfDomain(String),
    #[error("root bracket expansion failed: {0}")]
    BracketExpansion(String),
    #[error("existence not established under weakened limits: {0}")]
    ExistenceNotEstablished(String),
    #[error("one-sided condition violated: {0}")]
    OneSidedCondition(String),
    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),
    #[error("simulated path left the guard band: {0}")]
    PathDiverged(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

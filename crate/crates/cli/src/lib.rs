//! Library side of the `ergodic` command-line tool: configuration, commands and
//! the exit-code contract.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | input error (config, expressions, arguments, numerical failure) |
//! | 2 | existence of an optimal policy not established |
//! | 3 | verification failure (simulation disagrees with theory) |

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::fmt;

pub use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Input = 1,
    Existence = 2,
    Verification = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Input(String),
    /// No optimal policy could be established; `hint` names the likely regime.
    Existence {
        hint: Option<String>,
        detail: String,
    },
}

impl CliError {
    pub fn exit(&self) -> Exit {
        match self {
            CliError::Input(_) => Exit::Input,
            CliError::Existence { .. } => Exit::Existence,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Existence {
                hint: Some(h),
                detail,
            } => write!(f, "existence not established ({h}): {detail}"),
            CliError::Existence { hint: None, detail } => {
                write!(f, "existence not established: {detail}")
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<ergodic::Error> for CliError {
    fn from(e: ergodic::Error) -> Self {
        match e {
            ergodic::Error::ExistenceNotEstablished(detail) => {
                CliError::Existence { hint: None, detail }
            }
            ergodic::Error::OneSidedCondition(m) => CliError::Existence {
                hint: None,
                detail: format!("one-sided condition {m}"),
            },
            other => CliError::Input(other.to_string()),
        }
    }
}

/// What a command prints and how it exits.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub stdout: String,
    pub stderr: String,
    pub exit: Exit,
}

impl Output {
    pub fn ok(stdout: String) -> Self {
        Output {
            stdout,
            stderr: String::new(),
            exit: Exit::Ok,
        }
    }
}

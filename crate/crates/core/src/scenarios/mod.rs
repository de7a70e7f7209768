//! Ready-made systems and the scenario file format.
//!
//! A [`Scenario`] bundles a [`SystemSpec`], an initial state, an integrator
//! configuration and the list of [`Check`]s the scenario is expected to pass.

mod builtin;
mod checks;
mod file;

pub use builtin::{builtin, BUILTIN_NAMES};
pub use checks::{run_check, run_checks, Check, CheckOutcome, Verdict};
pub use file::{load, parse_scenario, render, save};

use crate::integrate::IntegratorConfig;
use crate::mechanics::{MechanicsError, PhaseState, SystemSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub system: SystemSpec,
    /// Carries `ν` (one entry per constraint) and `μ` even for kinds that do
    /// not use them, so the same scenario can be re-run as vakonomic.
    pub initial: PhaseState,
    pub config: IntegratorConfig,
    pub checks: Vec<Check>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}`{key}`: {message}", .line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Semantic {
        line: Option<usize>,
        key: String,
        message: String,
    },
    #[error(transparent)]
    System(#[from] MechanicsError),
    #[error("unknown builtin `{0}` (available: {names})", names = BUILTIN_NAMES.join(", "))]
    UnknownBuiltin(String),
}

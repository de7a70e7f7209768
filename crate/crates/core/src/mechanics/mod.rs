//! Equations of motion for action-dependent Lagrangians `L(q, v, s)` with
//! `ṡ = L`, optionally subject to velocity constraints.
//!
//! Three vector fields are provided:
//!
//! * [`herglotz_field`]: the unconstrained Herglotz dynamics.
//! * [`nonholonomic_field`]: constraints enforced by reaction forces
//!   `λ_α ∂φ^α/∂v`, multipliers solved together with the accelerations.
//! * [`vakonomic_field`]: constraints enforced variationally, in the reduced
//!   form where the multipliers `ν` are state variables with their own rate.
//!
//! All of them work from a [`PartialCache`] of compiled symbolic partials
//! built once per [`SystemSpec`]. The auxiliary velocity `v_s` never appears
//! as an unknown: it equals `L` on the constraint manifold, so `ṡ = L` and
//! its rate `G` is the total derivative of `L` along the field.

mod cache;
mod diagnostics;
mod field;
mod system;

use std::fmt;

pub use cache::{build_cache, validate_cache, CacheValidation, ExprPartials, PartialCache};
pub use diagnostics::{diagnostics, energy, DiagnosticsRecord};
pub use field::{
    evaluate, herglotz_field, nonholonomic_field, vakonomic_field, FieldEval, RANK_TOL,
    MULTIPLIER_FLOOR,
};
pub use system::{Constraint, SystemSpec};

use crate::symexpr::{EvalError, ParseError};

/// How the constraint list of a system is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ConstraintKind {
    /// Constraints are ignored by the dynamics and only monitored.
    #[default]
    None,
    Nonholonomic,
    Vakonomic,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 3] = [
        ConstraintKind::None,
        ConstraintKind::Nonholonomic,
        ConstraintKind::Vakonomic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintKind::None => "none",
            ConstraintKind::Nonholonomic => "nonholonomic",
            ConstraintKind::Vakonomic => "vakonomic",
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ConstraintKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConstraintKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown constraint kind `{s}` (expected none, nonholonomic or vakonomic)"))
    }
}

/// A point of the extended phase space at time `t`.
///
/// `nu` holds the reduced vakonomic multipliers (one per constraint) and is
/// empty for the other kinds. `mu` is the reconstructed multiplier of the
/// dissipative constraint and is only tracked for vakonomic runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub t: f64,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub s: f64,
    pub nu: Vec<f64>,
    pub mu: Option<f64>,
}

impl PhaseState {
    pub fn new(t: f64, q: Vec<f64>, v: Vec<f64>, s: f64) -> Self {
        PhaseState {
            t,
            q,
            v,
            s,
            nu: Vec::new(),
            mu: None,
        }
    }

    pub fn with_multipliers(mut self, nu: Vec<f64>, mu: f64) -> Self {
        self.nu = nu;
        self.mu = Some(mu);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.s.is_finite()
            && self.q.iter().chain(&self.v).chain(&self.nu).all(|x| x.is_finite())
            && self.mu.is_none_or(f64::is_finite)
    }
}

impl fmt::Display for PhaseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t = {}, q = {:?}, v = {:?}, s = {}", self.t, self.q, self.v, self.s)?;
        if !self.nu.is_empty() {
            write!(f, ", nu = {:?}", self.nu)?;
        }
        if let Some(mu) = self.mu {
            write!(f, ", mu = {mu}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MechanicsError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("cannot parse {what}: {source}")]
    Parse { what: String, source: ParseError },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("singular {what} (regularity lost) at {state}")]
    Regularity { what: &'static str, state: Box<PhaseState> },
    #[error("constraint Jacobian has rank {rank}, expected {expected}, at {state}")]
    RankDeficient {
        rank: usize,
        expected: usize,
        state: Box<PhaseState>,
    },
    #[error("degenerate multiplier 1 + mu = {value:e} at {state}")]
    DegenerateMultiplier { value: f64, state: Box<PhaseState> },
    #[error("evaluation failed at {state}: {source}")]
    Eval { source: EvalError, state: Box<PhaseState> },
    #[error("non-finite value in the field at {state}")]
    NonFinite { state: Box<PhaseState> },
}

impl MechanicsError {
    /// The state at which a physics failure occurred, if any.
    pub fn state(&self) -> Option<&PhaseState> {
        match self {
            MechanicsError::Regularity { state, .. }
            | MechanicsError::RankDeficient { state, .. }
            | MechanicsError::DegenerateMultiplier { state, .. }
            | MechanicsError::Eval { state, .. }
            | MechanicsError::NonFinite { state } => Some(state),
            _ => None,
        }
    }

    /// Regularity, rank and multiplier failures, as opposed to malformed input.
    pub fn is_physics(&self) -> bool {
        self.state().is_some()
    }
}

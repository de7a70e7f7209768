use super::cache::Evaluated;
use super::{ConstraintKind, FieldEval, MechanicsError, PartialCache, PhaseState, SystemSpec};
use crate::symexpr::EvalError;

/// Energy bookkeeping and residuals attached to one field evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticsRecord {
    /// `E = vⁱ ∂L/∂vⁱ − L`.
    pub energy: f64,
    /// `⟨dE, X⟩` expanded through the cached partials.
    pub energy_rate_actual: f64,
    /// `(∂L/∂s)E` for unconstrained fields, `(∂L/∂s)E − λ_α vⁱ∂φ^α/∂vⁱ` for
    /// nonholonomic ones. `None` for vakonomic fields with constraints.
    pub energy_rate_predicted: Option<f64>,
    /// `λ_α vⁱ∂φ^α/∂vⁱ`, zero when there are no reaction forces.
    pub constraint_power: f64,
    /// `(ṡ − ∂L/∂vⁱ q̇ⁱ) + E`.
    pub pairing_residual: f64,
    pub constraint_residuals: Vec<f64>,
    /// `∂φ/∂q·q̇ + ∂φ/∂v·B + ∂φ/∂s·ṡ` per constraint.
    pub tangency_residuals: Vec<f64>,
}

impl DiagnosticsRecord {
    pub fn energy_rate_mismatch(&self) -> Option<f64> {
        self.energy_rate_predicted
            .map(|p| (self.energy_rate_actual - p).abs())
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.constraint_residuals
            .iter()
            .fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn max_tangency_residual(&self) -> f64 {
        self.tangency_residuals
            .iter()
            .fold(0.0, |m, r| m.max(r.abs()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn compute(l: &Evaluated, cons: &[Evaluated], fe: &FieldEval) -> DiagnosticsRecord {
    let v = &fe.qdot;
    let n = v.len();
    let energy = dot(v, &l.dv) - l.value;
    // ∂E/∂qⁱ = vʰ∂²L/∂qⁱ∂vʰ − ∂L/∂qⁱ, ∂E/∂vⁱ = vʰ W_ih, ∂E/∂s = vʰ∂²L/∂s∂vʰ − ∂L/∂s
    let de_dq: Vec<f64> = (0..n).map(|i| dot(v, &l.dqdv[i]) - l.dq[i]).collect();
    let de_dv: Vec<f64> = (0..n).map(|i| dot(v, &l.dvdv[i])).collect();
    let de_ds = dot(v, &l.dsdv) - l.ds;
    let actual = dot(&fe.qdot, &de_dq) + dot(&fe.vdot, &de_dv) + fe.sdot * de_ds;

    let constraint_power = match fe.kind {
        ConstraintKind::Nonholonomic => cons
            .iter()
            .zip(&fe.multipliers)
            .map(|(c, lam)| lam * dot(v, &c.dv))
            .sum(),
        _ => 0.0,
    };
    let predicted = match fe.kind {
        ConstraintKind::None => Some(l.ds * energy),
        ConstraintKind::Nonholonomic => Some(l.ds * energy - constraint_power),
        ConstraintKind::Vakonomic if cons.is_empty() => Some(l.ds * energy),
        ConstraintKind::Vakonomic => None,
    };
    DiagnosticsRecord {
        energy,
        energy_rate_actual: actual,
        energy_rate_predicted: predicted,
        constraint_power,
        pairing_residual: (fe.sdot - dot(&l.dv, &fe.qdot)) + energy,
        constraint_residuals: cons.iter().map(|c| c.value).collect(),
        tangency_residuals: cons
            .iter()
            .map(|c| dot(&c.dq, &fe.qdot) + dot(&c.dv, &fe.vdot) + c.ds * fe.sdot)
            .collect(),
    }
}

/// Recomputes the diagnostics of `fe` from the cache.
pub fn diagnostics(
    sys: &SystemSpec,
    cache: &PartialCache,
    st: &PhaseState,
    fe: &FieldEval,
) -> Result<DiagnosticsRecord, MechanicsError> {
    if sys.constraints().len() != cache.constraint_count() || fe.vdot.len() != cache.dof() {
        return Err(MechanicsError::InvalidSystem(
            "field evaluation does not match the system".into(),
        ));
    }
    let x = cache.slot_values(st)?;
    let wrap = |source: EvalError| MechanicsError::Eval {
        source,
        state: Box::new(st.clone()),
    };
    let l = cache.lagrangian.evaluate(&x).map_err(wrap)?;
    let cons = cache
        .constraints
        .iter()
        .map(|c| c.evaluate_first(&x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(wrap)?;
    Ok(compute(&l, &cons, fe))
}

/// Lagrangian energy `vⁱ ∂L/∂vⁱ − L` at `st`.
pub fn energy(cache: &PartialCache, st: &PhaseState) -> Result<f64, MechanicsError> {
    let x = cache.slot_values(st)?;
    let l = cache
        .lagrangian
        .evaluate_first(&x)
        .map_err(|source| MechanicsError::Eval {
            source,
            state: Box::new(st.clone()),
        })?;
    Ok(dot(&st.v, &l.dv) - l.value)
}

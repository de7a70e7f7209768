use std::collections::HashMap;

use super::system::ACTION_VAR;
use super::{MechanicsError, PhaseState, SystemSpec};
use crate::symexpr::{differentiate, Binding, CompiledExpr, EvalError, Expr};

/// A function of `(q, v, s)` together with its first partials and the
/// second partials that involve one velocity.
///
/// Second-partial tables are indexed `[j][i]` for `∂²f/∂qʲ∂vⁱ` and
/// `∂²f/∂vʲ∂vⁱ`.
#[derive(Debug, Clone)]
pub struct ExprPartials {
    pub value: CompiledExpr,
    pub dq: Vec<CompiledExpr>,
    pub dv: Vec<CompiledExpr>,
    pub ds: CompiledExpr,
    pub dqdv: Vec<Vec<CompiledExpr>>,
    pub dvdv: Vec<Vec<CompiledExpr>>,
    pub dsdv: Vec<CompiledExpr>,
}

/// Numeric values of an [`ExprPartials`] at one point.
#[derive(Debug, Clone)]
pub(crate) struct Evaluated {
    pub value: f64,
    pub dq: Vec<f64>,
    pub dv: Vec<f64>,
    pub ds: f64,
    pub dqdv: Vec<Vec<f64>>,
    pub dvdv: Vec<Vec<f64>>,
    pub dsdv: Vec<f64>,
}

impl ExprPartials {
    fn build(
        e: &Expr,
        coords: &[String],
        vels: &[String],
        slots: &HashMap<String, usize>,
    ) -> Result<Self, EvalError> {
        let compile = |x: &Expr| CompiledExpr::new(x, slots);
        let dv_exprs: Vec<Expr> = vels.iter().map(|v| differentiate(e, v)).collect();
        let table = |vars: &[String]| -> Result<Vec<Vec<CompiledExpr>>, EvalError> {
            vars.iter()
                .map(|w| dv_exprs.iter().map(|d| compile(&differentiate(d, w))).collect())
                .collect()
        };
        Ok(ExprPartials {
            value: compile(e)?,
            dq: coords
                .iter()
                .map(|q| compile(&differentiate(e, q)))
                .collect::<Result<_, _>>()?,
            dv: dv_exprs.iter().map(compile).collect::<Result<_, _>>()?,
            ds: compile(&differentiate(e, ACTION_VAR))?,
            dqdv: table(coords)?,
            dvdv: table(vels)?,
            dsdv: dv_exprs
                .iter()
                .map(|d| compile(&differentiate(d, ACTION_VAR)))
                .collect::<Result<_, _>>()?,
        })
    }

    pub(crate) fn evaluate(&self, x: &[f64]) -> Result<Evaluated, EvalError> {
        let row = |r: &[CompiledExpr]| r.iter().map(|c| c.eval(x)).collect::<Result<Vec<_>, _>>();
        let table = |t: &[Vec<CompiledExpr>]| t.iter().map(|r| row(r)).collect::<Result<Vec<_>, _>>();
        Ok(Evaluated {
            value: self.value.eval(x)?,
            dq: row(&self.dq)?,
            dv: row(&self.dv)?,
            ds: self.ds.eval(x)?,
            dqdv: table(&self.dqdv)?,
            dvdv: table(&self.dvdv)?,
            dsdv: row(&self.dsdv)?,
        })
    }

    /// First-order part only, for callers that never touch second partials.
    pub(crate) fn evaluate_first(&self, x: &[f64]) -> Result<Evaluated, EvalError> {
        let row = |r: &[CompiledExpr]| r.iter().map(|c| c.eval(x)).collect::<Result<Vec<_>, _>>();
        Ok(Evaluated {
            value: self.value.eval(x)?,
            dq: row(&self.dq)?,
            dv: row(&self.dv)?,
            ds: self.ds.eval(x)?,
            dqdv: Vec::new(),
            dvdv: Vec::new(),
            dsdv: Vec::new(),
        })
    }
}

/// Compiled partials of the Lagrangian and of every constraint.
///
/// Variables live in slots `[q¹..qⁿ, v¹..vⁿ, s, params..]`. Parameter values
/// are copied in at build time; [`PartialCache::with_params`] swaps them
/// without differentiating again.
#[derive(Debug, Clone)]
pub struct PartialCache {
    n: usize,
    param_names: Vec<String>,
    param_values: Vec<f64>,
    pub lagrangian: ExprPartials,
    pub constraints: Vec<ExprPartials>,
}

/// Differentiates and compiles everything the fields need.
pub fn build_cache(sys: &SystemSpec) -> Result<PartialCache, MechanicsError> {
    let n = sys.dof();
    let mut slots = HashMap::new();
    for (i, q) in sys.coordinates().iter().enumerate() {
        slots.insert(q.clone(), i);
    }
    for (i, v) in sys.velocities().iter().enumerate() {
        slots.insert(v.clone(), n + i);
    }
    slots.insert(ACTION_VAR.to_string(), 2 * n);
    let mut param_names = Vec::new();
    let mut param_values = Vec::new();
    for (k, (name, value)) in sys.params().iter().enumerate() {
        slots.insert(name.to_string(), 2 * n + 1 + k);
        param_names.push(name.to_string());
        param_values.push(value);
    }
    let build = |e: &Expr| {
        ExprPartials::build(e, sys.coordinates(), sys.velocities(), &slots)
            .map_err(|e| MechanicsError::InvalidSystem(e.to_string()))
    };
    Ok(PartialCache {
        n,
        param_names,
        param_values,
        lagrangian: build(sys.lagrangian())?,
        constraints: sys
            .constraints()
            .iter()
            .map(|c| build(&c.expr))
            .collect::<Result<_, _>>()?,
    })
}

impl PartialCache {
    pub fn dof(&self) -> usize {
        self.n
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn with_params(&self, params: &Binding) -> Result<Self, MechanicsError> {
        let values = self
            .param_names
            .iter()
            .map(|p| params.get(p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| MechanicsError::InvalidSystem(e.to_string()))?;
        Ok(PartialCache {
            param_values: values,
            ..self.clone()
        })
    }

    /// Constraint values and velocity Jacobian `∂φ^α/∂vⁱ` (one row per
    /// constraint) at `st`.
    pub fn constraints_at(&self, st: &PhaseState) -> Result<(Vec<f64>, Vec<Vec<f64>>), MechanicsError> {
        let x = self.slot_values(st)?;
        let mut values = Vec::with_capacity(self.constraints.len());
        let mut jac = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let wrap = |source| MechanicsError::Eval {
                source,
                state: Box::new(st.clone()),
            };
            values.push(c.value.eval(&x).map_err(wrap)?);
            jac.push(
                c.dv.iter()
                    .map(|d| d.eval(&x))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(wrap)?,
            );
        }
        Ok((values, jac))
    }

    /// Argument vector for the compiled partials at `st`: coordinates,
    /// velocities, `s`, then the parameters in name order.
    pub fn slot_values(&self, st: &PhaseState) -> Result<Vec<f64>, MechanicsError> {
        if st.q.len() != self.n || st.v.len() != self.n {
            return Err(MechanicsError::InvalidState(format!(
                "expected {} coordinates and velocities, got {} and {}",
                self.n,
                st.q.len(),
                st.v.len()
            )));
        }
        if !st.is_finite() {
            return Err(MechanicsError::NonFinite {
                state: Box::new(st.clone()),
            });
        }
        let mut x = Vec::with_capacity(2 * self.n + 1 + self.param_values.len());
        x.extend_from_slice(&st.q);
        x.extend_from_slice(&st.v);
        x.push(st.s);
        x.extend_from_slice(&self.param_values);
        Ok(x)
    }
}

/// Outcome of comparing every cached partial against a centered finite
/// difference of its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheValidation {
    pub checked: usize,
    /// Largest `|symbolic − fd| / (1 + |symbolic|)`.
    pub max_error: f64,
    /// Label of the partial with the largest error.
    pub worst: String,
}

impl CacheValidation {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_error <= tol
    }
}

/// Checks all partials at `st` with step `h·max(1, |x|)`.
pub fn validate_cache(
    sys: &SystemSpec,
    cache: &PartialCache,
    st: &PhaseState,
    h: f64,
) -> Result<CacheValidation, MechanicsError> {
    let x = cache.slot_values(st)?;
    let n = cache.n;
    let mut report = CacheValidation {
        checked: 0,
        max_error: 0.0,
        worst: String::new(),
    };
    let wrap = |source: EvalError| MechanicsError::Eval {
        source,
        state: Box::new(st.clone()),
    };
    let mut check = |label: String, parent: &CompiledExpr, slot: usize, child: &CompiledExpr| {
        let exact = child.eval(&x)?;
        let step = h * x[slot].abs().max(1.0);
        let mut plus = x.clone();
        plus[slot] += step;
        let mut minus = x.clone();
        minus[slot] -= step;
        let fd = (parent.eval(&plus)? - parent.eval(&minus)?) / (2.0 * step);
        let err = (exact - fd).abs() / (1.0 + exact.abs());
        report.checked += 1;
        if err > report.max_error || report.worst.is_empty() {
            report.max_error = err;
            report.worst = label;
        }
        Ok::<(), EvalError>(())
    };
    let q = sys.coordinates();
    let v = sys.velocities();
    let names = std::iter::once("L".to_string()).chain(sys.constraints().iter().map(|c| c.name.clone()));
    for (name, p) in names.zip(std::iter::once(&cache.lagrangian).chain(&cache.constraints)) {
        for i in 0..n {
            check(format!("d{name}/d{}", q[i]), &p.value, i, &p.dq[i]).map_err(wrap)?;
            check(format!("d{name}/d{}", v[i]), &p.value, n + i, &p.dv[i]).map_err(wrap)?;
            check(format!("d2{name}/ds d{}", v[i]), &p.dv[i], 2 * n, &p.dsdv[i]).map_err(wrap)?;
            for j in 0..n {
                check(format!("d2{name}/d{} d{}", q[j], v[i]), &p.dv[i], j, &p.dqdv[j][i])
                    .map_err(wrap)?;
                check(format!("d2{name}/d{} d{}", v[j], v[i]), &p.dv[i], n + j, &p.dvdv[j][i])
                    .map_err(wrap)?;
            }
        }
        check(format!("d{name}/ds"), &p.value, 2 * n, &p.ds).map_err(wrap)?;
    }
    Ok(report)
}

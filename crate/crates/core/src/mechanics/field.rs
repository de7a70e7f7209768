use super::cache::Evaluated;
use super::diagnostics::{compute as compute_diagnostics, DiagnosticsRecord};
use super::{ConstraintKind, MechanicsError, PartialCache, PhaseState, SystemSpec};
use crate::densela::{rank_estimate, solve, LinalgError, Matrix};
use crate::symexpr::EvalError;

/// Relative pivot threshold for the constraint Jacobian rank test.
pub const RANK_TOL: f64 = 1e-9;

/// `|1 + μ|` at or below this is treated as the excluded value `μ = −1`.
pub const MULTIPLIER_FLOOR: f64 = 1e-12;

/// One evaluation of a dynamical vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEval {
    pub kind: ConstraintKind,
    /// Always a copy of the state velocities.
    pub qdot: Vec<f64>,
    /// Accelerations `B`.
    pub vdot: Vec<f64>,
    /// `ṡ = L`.
    pub sdot: f64,
    /// Rate `G` of the eliminated velocity `v_s`.
    pub vs_dot: f64,
    pub lagrangian: f64,
    /// Multiplier of the dissipative constraint, `∂L/∂s`.
    pub lambda_s: f64,
    /// `λ_α` for nonholonomic fields, the current `ν_β` for vakonomic ones.
    pub multipliers: Vec<f64>,
    pub nu_dot: Vec<f64>,
    pub mu_dot: Option<f64>,
    /// Infinity norm of the residual of the assembled linear system.
    pub system_residual: f64,
    pub diagnostics: DiagnosticsRecord,
}

/// Dispatches on `kind`.
pub fn evaluate(
    sys: &SystemSpec,
    cache: &PartialCache,
    kind: ConstraintKind,
    st: &PhaseState,
) -> Result<FieldEval, MechanicsError> {
    match kind {
        ConstraintKind::None => herglotz_field(sys, cache, st),
        ConstraintKind::Nonholonomic => nonholonomic_field(sys, cache, st),
        ConstraintKind::Vakonomic => vakonomic_field(sys, cache, st),
    }
}

struct Point {
    l: Evaluated,
    cons: Vec<Evaluated>,
}

fn prepare(
    sys: &SystemSpec,
    cache: &PartialCache,
    st: &PhaseState,
    second_order_constraints: bool,
) -> Result<Point, MechanicsError> {
    if sys.dof() != cache.dof() || sys.constraints().len() != cache.constraint_count() {
        return Err(MechanicsError::InvalidSystem(
            "partial cache was built for a different system".into(),
        ));
    }
    let x = cache.slot_values(st)?;
    let eval_err = |source: EvalError| MechanicsError::Eval {
        source,
        state: Box::new(st.clone()),
    };
    let l = cache.lagrangian.evaluate(&x).map_err(eval_err)?;
    let cons = cache
        .constraints
        .iter()
        .map(|c| {
            if second_order_constraints {
                c.evaluate(&x)
            } else {
                c.evaluate_first(&x)
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(eval_err)?;
    Ok(Point { l, cons })
}

// rᵢ = ∂F/∂qⁱ + c·∂F/∂vⁱ − vʰ ∂²F/∂qʰ∂vⁱ − L ∂²F/∂s∂vⁱ
fn herglotz_rhs(
    dq: &[f64],
    dv: &[f64],
    dqdv: &[Vec<f64>],
    dsdv: &[f64],
    coeff_s: f64,
    lagrangian: f64,
    v: &[f64],
) -> Vec<f64> {
    (0..dq.len())
        .map(|i| {
            let transport: f64 = v.iter().zip(dqdv).map(|(vh, row)| vh * row[i]).sum();
            dq[i] + coeff_s * dv[i] - transport - lagrangian * dsdv[i]
        })
        .collect()
}

fn check_rank(cons: &[Evaluated], n: usize, st: &PhaseState) -> Result<(), MechanicsError> {
    let h = cons.len();
    if h == 0 {
        return Ok(());
    }
    let rows: Vec<Vec<f64>> = cons.iter().map(|c| c.dv.clone()).collect();
    let jac = Matrix::from_rows(&rows).map_err(|_| MechanicsError::InvalidState(format!("bad Jacobian shape for {n} coordinates")))?;
    let rank = rank_estimate(&jac, RANK_TOL);
    if rank < h {
        return Err(MechanicsError::RankDeficient {
            rank,
            expected: h,
            state: Box::new(st.clone()),
        });
    }
    Ok(())
}

/// Assembles `[[W, σ·Jᵀ], [J, 0]]` with `J = ∂c/∂v` and the tangency right-hand
/// side `−(∂c/∂q·v + ∂c/∂s·L)`.
fn augmented(
    w: &[Vec<f64>],
    top: Vec<f64>,
    cons: &[Evaluated],
    sigma: f64,
    v: &[f64],
    lagrangian: f64,
) -> (Matrix, Vec<f64>) {
    let n = w.len();
    let h = cons.len();
    let mut a = Matrix::zeros(n + h, n + h);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = w[i][j];
        }
    }
    let mut rhs = top;
    for (alpha, c) in cons.iter().enumerate() {
        for i in 0..n {
            a[(i, n + alpha)] = sigma * c.dv[i];
            a[(n + alpha, i)] = c.dv[i];
        }
        let drift: f64 = c.dq.iter().zip(v).map(|(d, x)| d * x).sum();
        rhs.push(-(drift + c.ds * lagrangian));
    }
    (a, rhs)
}

fn solve_checked(
    a: &Matrix,
    b: &[f64],
    what: &'static str,
    st: &PhaseState,
) -> Result<(Vec<f64>, f64), MechanicsError> {
    let x = solve(a, b).map_err(|e| match e {
        LinalgError::Singular { .. } => MechanicsError::Regularity {
            what,
            state: Box::new(st.clone()),
        },
        LinalgError::NonFinite | LinalgError::Dimension(_) => MechanicsError::NonFinite {
            state: Box::new(st.clone()),
        },
    })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MechanicsError::NonFinite {
            state: Box::new(st.clone()),
        });
    }
    let residual = a
        .mul_vec(&x)
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    Ok((x, residual))
}

struct Solved {
    vdot: Vec<f64>,
    multipliers: Vec<f64>,
    nu_dot: Vec<f64>,
    mu_dot: Option<f64>,
    system_residual: f64,
}

fn finish(kind: ConstraintKind, st: &PhaseState, p: &Point, s: Solved) -> FieldEval {
    let l = &p.l;
    let g = st.v.iter().zip(&l.dq).map(|(a, b)| a * b).sum::<f64>()
        + s.vdot.iter().zip(&l.dv).map(|(a, b)| a * b).sum::<f64>()
        + l.value * l.ds;
    let mut fe = FieldEval {
        kind,
        qdot: st.v.clone(),
        vdot: s.vdot,
        sdot: l.value,
        vs_dot: g,
        lagrangian: l.value,
        lambda_s: l.ds,
        multipliers: s.multipliers,
        nu_dot: s.nu_dot,
        mu_dot: s.mu_dot,
        system_residual: s.system_residual,
        diagnostics: DiagnosticsRecord::default(),
    };
    fe.diagnostics = compute_diagnostics(&p.l, &p.cons, &fe);
    fe
}

/// Unconstrained Herglotz field. Constraints of `sys`, if any, are evaluated
/// for the residual report but exert no force.
///
/// ```
/// use herglotz::mechanics::{build_cache, herglotz_field, ConstraintKind, PhaseState, SystemSpec};
/// use herglotz::symexpr::Binding;
///
/// let sys = SystemSpec::parse(
///     &["q"],
///     "0.5*vq^2 - 0.5*q^2 - gamma*s",
///     Binding::new().with("gamma", 0.2),
///     &[],
///     ConstraintKind::None,
/// )
/// .unwrap();
/// let cache = build_cache(&sys).unwrap();
/// let fe = herglotz_field(&sys, &cache, &PhaseState::new(0.0, vec![1.0], vec![0.0], 0.0)).unwrap();
/// assert_eq!(fe.vdot, vec![-1.0]);
/// assert_eq!(fe.sdot, -0.5);
/// ```
pub fn herglotz_field(
    sys: &SystemSpec,
    cache: &PartialCache,
    st: &PhaseState,
) -> Result<FieldEval, MechanicsError> {
    let p = prepare(sys, cache, st, false)?;
    let l = &p.l;
    let r = herglotz_rhs(&l.dq, &l.dv, &l.dqdv, &l.dsdv, l.ds, l.value, &st.v);
    let (a, rhs) = augmented(&l.dvdv, r, &[], 1.0, &st.v, l.value);
    let (vdot, res) = solve_checked(&a, &rhs, "velocity Hessian", st)?;
    Ok(finish(
        ConstraintKind::None,
        st,
        &p,
        Solved {
            vdot,
            multipliers: Vec::new(),
            nu_dot: Vec::new(),
            mu_dot: None,
            system_residual: res,
        },
    ))
}

/// Nonholonomic field: solves `W·B + (∂φ/∂v)ᵀλ = r` together with the
/// tangency rows `∂φ/∂q·v + ∂φ/∂v·B + ∂φ/∂s·L = 0`.
pub fn nonholonomic_field(
    sys: &SystemSpec,
    cache: &PartialCache,
    st: &PhaseState,
) -> Result<FieldEval, MechanicsError> {
    let p = prepare(sys, cache, st, false)?;
    let n = cache.dof();
    check_rank(&p.cons, n, st)?;
    let l = &p.l;
    let r = herglotz_rhs(&l.dq, &l.dv, &l.dqdv, &l.dsdv, l.ds, l.value, &st.v);
    let (a, rhs) = augmented(&l.dvdv, r, &p.cons, 1.0, &st.v, l.value);
    let what = if p.cons.is_empty() {
        "velocity Hessian"
    } else {
        "constrained acceleration system"
    };
    let (mut x, res) = solve_checked(&a, &rhs, what, st)?;
    let multipliers = x.split_off(n);
    Ok(finish(
        ConstraintKind::Nonholonomic,
        st,
        &p,
        Solved {
            vdot: x,
            multipliers,
            nu_dot: Vec::new(),
            mu_dot: None,
            system_residual: res,
        },
    ))
}

/// Reduced vakonomic field in the unknowns `(B, ν̇)`:
///
/// `(W − ν_β ∂²ψ^β/∂v∂v)·B − (∂ψ/∂v)ᵀν̇ = r(L − ν_βψ^β)` with the `∂/∂s`
/// coefficient `∂L/∂s − ν_β ∂ψ^β/∂s`, plus the tangency rows of `ψ`.
///
/// When the state carries `μ`, its rate `(1 + μ)(∂L/∂s + ν_β ∂ψ^β/∂s)` is
/// reported as well.
pub fn vakonomic_field(
    sys: &SystemSpec,
    cache: &PartialCache,
    st: &PhaseState,
) -> Result<FieldEval, MechanicsError> {
    let p = prepare(sys, cache, st, true)?;
    let n = cache.dof();
    let k = p.cons.len();
    if st.nu.len() != k {
        return Err(MechanicsError::InvalidState(format!(
            "expected {k} vakonomic multipliers, got {}",
            st.nu.len()
        )));
    }
    if let Some(mu) = st.mu {
        if (1.0 + mu).abs() <= MULTIPLIER_FLOOR {
            return Err(MechanicsError::DegenerateMultiplier {
                value: 1.0 + mu,
                state: Box::new(st.clone()),
            });
        }
    }
    check_rank(&p.cons, n, st)?;
    let l = &p.l;
    let nu = &st.nu;
    // partials of L − ν_β ψ^β
    let shifted = |base: f64, part: &dyn Fn(&Evaluated) -> f64| -> f64 {
        let correction: f64 = p.cons.iter().zip(nu).map(|(c, m)| m * part(c)).sum();
        base - correction
    };
    let dq: Vec<f64> = (0..n).map(|i| shifted(l.dq[i], &|c| c.dq[i])).collect();
    let dv: Vec<f64> = (0..n).map(|i| shifted(l.dv[i], &|c| c.dv[i])).collect();
    let dsdv: Vec<f64> = (0..n).map(|i| shifted(l.dsdv[i], &|c| c.dsdv[i])).collect();
    let dqdv: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| shifted(l.dqdv[j][i], &|c| c.dqdv[j][i])).collect())
        .collect();
    let w: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| shifted(l.dvdv[j][i], &|c| c.dvdv[j][i])).collect())
        .collect();
    let coeff_s = shifted(l.ds, &|c| c.ds);
    let r = herglotz_rhs(&dq, &dv, &dqdv, &dsdv, coeff_s, l.value, &st.v);
    let (a, rhs) = augmented(&w, r, &p.cons, -1.0, &st.v, l.value);
    let what = if k == 0 {
        "velocity Hessian"
    } else {
        "vakonomic acceleration system"
    };
    let (mut x, res) = solve_checked(&a, &rhs, what, st)?;
    let nu_dot = x.split_off(n);
    let mu_dot = st.mu.map(|mu| {
        let ds_nu: f64 = p.cons.iter().zip(nu).map(|(c, m)| m * c.ds).sum();
        (1.0 + mu) * (l.ds + ds_nu)
    });
    Ok(finish(
        ConstraintKind::Vakonomic,
        st,
        &p,
        Solved {
            vdot: x,
            multipliers: nu.clone(),
            nu_dot,
            mu_dot,
            system_residual: res,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::build_cache;
    use crate::symexpr::Binding;
    use std::f64::consts::FRAC_PI_2;

    fn system(
        coords: &[&str],
        lag: &str,
        params: &[(&str, f64)],
        cons: &[(&str, &str)],
        kind: ConstraintKind,
    ) -> (SystemSpec, PartialCache) {
        let sys = SystemSpec::parse(
            coords,
            lag,
            params.iter().map(|(a, b)| (*a, *b)).collect::<Binding>(),
            cons,
            kind,
        )
        .unwrap();
        let cache = build_cache(&sys).unwrap();
        (sys, cache)
    }

    fn disk(kind: ConstraintKind) -> (SystemSpec, PartialCache) {
        system(
            &["x", "y", "theta", "phi"],
            "0.5*(vx^2+vy^2+vtheta^2+vphi^2)+delta*s",
            &[("delta", 0.1)],
            &[("phi1", "vx - vtheta*cos(phi)"), ("phi2", "vy - vtheta*sin(phi)")],
            kind,
        )
    }

    #[test]
    fn damped_oscillator_at_rest() {
        let (sys, cache) = system(&["q"], "0.5*vq^2 - 0.5*q^2 - gamma*s", &[("gamma", 0.2)], &[], ConstraintKind::None);
        let st = PhaseState::new(0.0, vec![1.0], vec![0.0], 0.0);
        let fe = herglotz_field(&sys, &cache, &st).unwrap();
        // v̇ = −q − γv
        assert_eq!(fe.vdot, vec![-1.0]);
        assert_eq!(fe.sdot, -0.5);
        assert_eq!(fe.lambda_s, -0.2);
        assert_eq!(fe.diagnostics.energy, 0.5);
    }

    #[test]
    fn free_particle_does_not_accelerate() {
        let (sys, cache) = system(&["q"], "0.5*vq^2", &[], &[], ConstraintKind::None);
        let fe = herglotz_field(&sys, &cache, &PhaseState::new(0.0, vec![0.3], vec![1.0], 0.0)).unwrap();
        assert_eq!(fe.vdot, vec![0.0]);
        assert_eq!(fe.diagnostics.energy_rate_actual, 0.0);
        assert_eq!(fe.diagnostics.energy_rate_predicted, Some(0.0));
    }

    #[test]
    fn rolling_disk_without_constraints_grows_every_velocity() {
        let (sys, cache) = disk(ConstraintKind::None);
        let st = PhaseState::new(0.0, vec![0.0; 4], vec![1.0; 4], 0.0);
        // constraints are monitored only
        let fe = herglotz_field(&sys, &cache, &st).unwrap();
        for b in &fe.vdot {
            assert!((b - 0.1).abs() < 1e-15);
        }
        assert_eq!(fe.diagnostics.constraint_residuals.len(), 2);
    }

    #[test]
    fn rolling_disk_multipliers() {
        let (sys, cache) = disk(ConstraintKind::Nonholonomic);
        let st = PhaseState::new(0.0, vec![0.0, 0.0, 0.0, FRAC_PI_2], vec![FRAC_PI_2.cos(), 1.0, 1.0, 1.0], 0.0);
        let fe = nonholonomic_field(&sys, &cache, &st).unwrap();
        assert!((fe.multipliers[0] - 1.0).abs() < 1e-12);
        assert!(fe.multipliers[1].abs() < 1e-12);
        assert!((fe.vdot[2] - 0.1).abs() < 1e-12);
        assert!((fe.vdot[3] - 0.1).abs() < 1e-12);
        assert!(fe.system_residual < 1e-12);
    }

    #[test]
    fn empty_constraint_list_matches_herglotz_bitwise() {
        let (sys, cache) = system(&["q"], "0.5*vq^2 - 0.5*q^2 - gamma*s", &[("gamma", 0.2)], &[], ConstraintKind::None);
        let st = PhaseState::new(0.0, vec![0.7], vec![-0.4], 0.3);
        let h = herglotz_field(&sys, &cache, &st).unwrap();
        let nh = nonholonomic_field(&sys, &cache, &st).unwrap();
        let vk = vakonomic_field(&sys, &cache, &st.clone().with_multipliers(vec![], 0.0)).unwrap();
        for fe in [&nh, &vk] {
            assert_eq!(fe.vdot, h.vdot);
            assert_eq!(fe.sdot, h.sdot);
            assert_eq!(fe.vs_dot, h.vs_dot);
        }
        assert_eq!(vk.mu_dot, Some(-0.2));
    }

    #[test]
    fn frozen_coordinate_feels_no_force() {
        let (sys, cache) = system(&["a", "b"], "0.5*(va^2 + vb^2)", &[], &[("freeze", "va")], ConstraintKind::Vakonomic);
        let st = PhaseState::new(0.0, vec![0.2, -0.1], vec![0.0, 0.5], 0.0).with_multipliers(vec![0.0], 0.0);
        let fe = vakonomic_field(&sys, &cache, &st).unwrap();
        assert_eq!(fe.vdot, vec![0.0, 0.0]);
        assert_eq!(fe.nu_dot, vec![0.0]);
    }

    #[test]
    fn dependent_constraints_are_rank_deficient() {
        let (sys, cache) = system(
            &["a", "b", "c"],
            "0.5*(va^2 + vb^2 + vc^2)",
            &[],
            &[("c1", "va + vb"), ("c2", "2*va + 2*vb")],
            ConstraintKind::Nonholonomic,
        );
        let st = PhaseState::new(0.0, vec![0.0; 3], vec![0.0; 3], 0.0);
        let err = nonholonomic_field(&sys, &cache, &st).unwrap_err();
        assert!(matches!(err, MechanicsError::RankDeficient { rank: 1, expected: 2, .. }), "{err}");
        assert!(err.is_physics());
    }

    #[test]
    fn singular_hessian_is_a_regularity_failure() {
        let (sys, cache) = system(&["q"], "vq*q - q^2", &[], &[], ConstraintKind::None);
        let st = PhaseState::new(1.5, vec![1.0], vec![2.0], 0.0);
        match herglotz_field(&sys, &cache, &st) {
            Err(MechanicsError::Regularity { state, .. }) => assert_eq!(state.t, 1.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_mu_is_rejected() {
        let (sys, cache) = system(&["q"], "0.5*vq^2", &[], &[], ConstraintKind::Vakonomic);
        let st = PhaseState::new(0.0, vec![0.0], vec![1.0], 0.0).with_multipliers(vec![], -1.0);
        assert!(matches!(
            vakonomic_field(&sys, &cache, &st),
            Err(MechanicsError::DegenerateMultiplier { .. })
        ));
    }
}

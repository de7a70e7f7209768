mod common;

use herglotz::mechanics::{
    build_cache, evaluate, herglotz_field, nonholonomic_field, vakonomic_field, validate_cache, ConstraintKind, FieldEval,
    PhaseState, SystemSpec,
};
use herglotz::symexpr::{eval, Binding, Expr};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{partial, random_state, random_system, state_binding};

const KINDS: [ConstraintKind; 3] = [ConstraintKind::None, ConstraintKind::Nonholonomic, ConstraintKind::Vakonomic];

fn setup(seed: u64, kind: ConstraintKind) -> (ChaCha8Rng, SystemSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=3);
    let k = if kind == ConstraintKind::None { 0 } else { rng.gen_range(0..n) };
    let nonlinear = rng.gen_bool(0.5);
    let sys = random_system(&mut rng, n, k, nonlinear, kind);
    (rng, sys)
}

fn energy_expr(sys: &SystemSpec) -> Expr {
    let l = sys.lagrangian();
    let mut e = Expr::neg(l.clone());
    for v in sys.velocities() {
        e = Expr::add(e, Expr::mul(Expr::var(v), herglotz::symexpr::differentiate(l, v)));
    }
    e
}

/// `∂F/∂q − d/dt ∂F/∂v + c·∂F/∂v` along the field, with the total time
/// derivative expanded through the chain rule. `extra[i]` is added to the
/// time derivative of `∂F/∂vⁱ`.
fn herglotz_operator(sys: &SystemSpec, f: &Expr, c: f64, b: &Binding, fe: &FieldEval, extra: &[f64]) -> Vec<f64> {
    let (q, v) = (sys.coordinates(), sys.velocities());
    (0..sys.dof())
        .map(|i| {
            let fv = herglotz::symexpr::differentiate(f, &v[i]);
            let mut ddt = partial(&fv, "s", b) * fe.sdot + extra[i];
            for j in 0..sys.dof() {
                ddt += partial(&fv, &q[j], b) * fe.qdot[j] + partial(&fv, &v[j], b) * fe.vdot[j];
            }
            partial(f, &q[i], b) - ddt + c * eval(&fv, b).unwrap()
        })
        .collect()
}

fn constraint_gradient(sys: &SystemSpec, a: usize, b: &Binding) -> Vec<f64> {
    sys.velocities().iter().map(|v| partial(&sys.constraints()[a].expr, v, b)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn second_order_and_multiplier_identity(seed in any::<u64>()) {
        for kind in KINDS {
            let (mut rng, sys) = setup(seed, kind);
            let cache = build_cache(&sys).unwrap();
            let st = random_state(&mut rng, &sys);
            let fe = evaluate(&sys, &cache, kind, &st).unwrap();
            let b = state_binding(&sys, &st);
            let l = eval(sys.lagrangian(), &b).unwrap();
            prop_assert_eq!(&fe.qdot, &st.v);
            prop_assert!((fe.sdot - l).abs() <= 1e-14 * l.abs().max(1.0));
            if kind != ConstraintKind::Vakonomic {
                let ls = partial(sys.lagrangian(), "s", &b);
                prop_assert!((fe.lambda_s - ls).abs() <= 1e-14 * ls.abs().max(1.0));
                let h = herglotz_field(&sys, &cache, &PhaseState::new(st.t, st.q.clone(), st.v.clone(), st.s)).unwrap();
                prop_assert_eq!(fe.lambda_s.to_bits(), h.lambda_s.to_bits());
            }
        }
    }

    #[test]
    fn empty_constraint_fields_agree(seed in any::<u64>()) {
        let (mut rng, sys) = setup(seed, ConstraintKind::None);
        let cache = build_cache(&sys).unwrap();
        for _ in 0..5 {
            let st = random_state(&mut rng, &sys);
            let h = herglotz_field(&sys, &cache, &st).unwrap();
            let nh = nonholonomic_field(&sys, &cache, &st).unwrap();
            let vk = vakonomic_field(&sys, &cache, &st).unwrap();
            for other in [&nh, &vk] {
                let dev = h.vdot.iter().zip(&other.vdot).map(|(a, b)| (a - b).abs())
                    .chain([(h.sdot - other.sdot).abs(), (h.vs_dot - other.vs_dot).abs()])
                    .fold(0.0, f64::max);
                prop_assert!(dev <= 1e-12, "deviation {dev}");
            }
        }
    }

    #[test]
    fn equations_of_motion_hold(seed in any::<u64>()) {
        for kind in KINDS {
            let (mut rng, sys) = setup(seed, kind);
            let cache = build_cache(&sys).unwrap();
            let st = random_state(&mut rng, &sys);
            let fe = evaluate(&sys, &cache, kind, &st).unwrap();
            prop_assert!(fe.system_residual <= 1e-9);
            let b = state_binding(&sys, &st);
            let n = sys.dof();
            let ls = partial(sys.lagrangian(), "s", &b);
            let residual: Vec<f64> = match kind {
                ConstraintKind::Vakonomic => {
                    // F = L − ν_β ψ^β, coefficient ∂F/∂s, and ν̇ enters d/dt ∂F/∂v
                    let mut f = sys.lagrangian().clone();
                    let mut extra = vec![0.0; n];
                    for (a, c) in sys.constraints().iter().enumerate() {
                        f = Expr::sub(f, Expr::mul(Expr::constant(st.nu[a]), c.expr.clone()));
                        for (i, g) in constraint_gradient(&sys, a, &b).iter().enumerate() {
                            extra[i] -= fe.nu_dot[a] * g;
                        }
                    }
                    let c = partial(&f, "s", &b);
                    herglotz_operator(&sys, &f, c, &b, &fe, &extra)
                }
                _ => {
                    let mut r = herglotz_operator(&sys, sys.lagrangian(), ls, &b, &fe, &vec![0.0; n]);
                    if kind == ConstraintKind::Nonholonomic {
                        for a in 0..sys.constraints().len() {
                            for (i, g) in constraint_gradient(&sys, a, &b).iter().enumerate() {
                                r[i] -= fe.multipliers[a] * g;
                            }
                        }
                    }
                    r
                }
            };
            let worst = residual.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!(worst <= 1e-9, "{kind}: residual {worst:e} for {}", sys.lagrangian());
        }
    }

    #[test]
    fn tangency_and_pairing(seed in any::<u64>()) {
        for kind in KINDS {
            let (mut rng, sys) = setup(seed, kind);
            let cache = build_cache(&sys).unwrap();
            let st = random_state(&mut rng, &sys);
            let fe = evaluate(&sys, &cache, kind, &st).unwrap();
            let b = state_binding(&sys, &st);
            if kind != ConstraintKind::None {
                for c in sys.constraints() {
                    let mut rate = partial(&c.expr, "s", &b) * fe.sdot;
                    for i in 0..sys.dof() {
                        rate += partial(&c.expr, &sys.coordinates()[i], &b) * fe.qdot[i]
                            + partial(&c.expr, &sys.velocities()[i], &b) * fe.vdot[i];
                    }
                    prop_assert!(rate.abs() <= 1e-10, "{}: tangency {rate:e}", c.name);
                }
            }
            let e = eval(&energy_expr(&sys), &b).unwrap();
            let eta: f64 = fe.sdot - sys.velocities().iter().zip(&fe.qdot).map(|(v, x)| partial(sys.lagrangian(), v, &b) * x).sum::<f64>();
            prop_assert!((eta + e).abs() <= 1e-12, "pairing {:e}", eta + e);
            prop_assert!(fe.diagnostics.pairing_residual.abs() <= 1e-12);
        }
    }

    #[test]
    fn energy_law(seed in any::<u64>()) {
        for kind in [ConstraintKind::None, ConstraintKind::Nonholonomic] {
            let (mut rng, sys) = setup(seed, kind);
            let cache = build_cache(&sys).unwrap();
            let st = random_state(&mut rng, &sys);
            let fe = evaluate(&sys, &cache, kind, &st).unwrap();
            let b = state_binding(&sys, &st);
            let ee = energy_expr(&sys);
            let e = eval(&ee, &b).unwrap();
            let mut actual = partial(&ee, "s", &b) * fe.sdot;
            for i in 0..sys.dof() {
                actual += partial(&ee, &sys.coordinates()[i], &b) * fe.qdot[i] + partial(&ee, &sys.velocities()[i], &b) * fe.vdot[i];
            }
            // the constraint forces remove power λ_α vⁱ ∂φ^α/∂vⁱ
            let mut predicted = partial(sys.lagrangian(), "s", &b) * e;
            if kind == ConstraintKind::Nonholonomic {
                for a in 0..sys.constraints().len() {
                    let g = constraint_gradient(&sys, a, &b);
                    predicted -= fe.multipliers[a] * g.iter().zip(&st.v).map(|(x, y)| x * y).sum::<f64>();
                }
            }
            let scale = 1.0 + e.abs();
            prop_assert!((actual - predicted).abs() <= 1e-9 * scale, "{kind}: {actual} vs {predicted}");
            let engine = fe.diagnostics.energy_rate_mismatch().unwrap();
            prop_assert!(engine <= 1e-9 * scale);
            prop_assert!((fe.diagnostics.energy_rate_actual - actual).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn cache_matches_finite_differences(seed in any::<u64>()) {
        let kind = KINDS[(seed % 3) as usize];
        let (mut rng, sys) = setup(seed, kind);
        let cache = build_cache(&sys).unwrap();
        let st = random_state(&mut rng, &sys);
        let report = validate_cache(&sys, &cache, &st, 1e-6).unwrap();
        prop_assert!(report.passes(1e-5), "worst {} at {:e}", report.worst, report.max_error);
    }
}

#![allow(dead_code)]

//! Shared test oracles: a bounded random expression generator, centered
//! finite differences and closed-form reference solutions.

use herglotz::mechanics::{ConstraintKind, PartialCache, PhaseState, SystemSpec};
use herglotz::symexpr::{differentiate, eval, Binding, Expr, UnaryOp};
use rand::Rng;

pub const VARS: [&str; 3] = ["x", "y", "z"];

fn leaf<R: Rng>(rng: &mut R) -> Expr {
    if rng.gen_bool(0.6) {
        Expr::var(VARS[rng.gen_range(0..VARS.len())])
    } else {
        Expr::Const((rng.gen_range(-2.0f64..2.0) * 100.0).round() / 100.0)
    }
}

/// Random expression whose value stays bounded for arguments in [-1, 1].
/// Every operator of the grammar appears, wrapped so that its argument stays
/// inside the function's domain.
pub fn random_expr<R: Rng>(rng: &mut R, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.2) {
        return leaf(rng);
    }
    let d = depth - 1;
    match rng.gen_range(0..13) {
        0 => Expr::add(random_expr(rng, d), random_expr(rng, d)),
        1 => Expr::sub(random_expr(rng, d), random_expr(rng, d)),
        2 => Expr::mul(random_expr(rng, d), random_expr(rng, d)),
        3 => Expr::div(
            random_expr(rng, d),
            Expr::add(
                Expr::Const(1.5),
                Expr::unary(UnaryOp::Cos, random_expr(rng, d)),
            ),
        ),
        4 => Expr::neg(random_expr(rng, d)),
        5 => Expr::unary(UnaryOp::Sin, random_expr(rng, d)),
        6 => Expr::unary(UnaryOp::Cos, random_expr(rng, d)),
        7 => Expr::unary(
            UnaryOp::Exp,
            Expr::unary(UnaryOp::Sin, random_expr(rng, d)),
        ),
        8 => Expr::unary(
            UnaryOp::Ln,
            Expr::add(
                Expr::Const(1.0),
                Expr::pow(random_expr(rng, d), Expr::Const(2.0)),
            ),
        ),
        9 => Expr::unary(
            UnaryOp::Sqrt,
            Expr::add(
                Expr::Const(2.0),
                Expr::unary(UnaryOp::Sin, random_expr(rng, d)),
            ),
        ),
        10 => Expr::unary(
            UnaryOp::Tan,
            Expr::mul(
                Expr::Const(0.5),
                Expr::unary(UnaryOp::Sin, random_expr(rng, d)),
            ),
        ),
        11 => Expr::pow(
            random_expr(rng, d),
            Expr::Const(rng.gen_range(2..=3) as f64),
        ),
        _ => Expr::pow(
            Expr::add(
                Expr::Const(2.0),
                Expr::unary(UnaryOp::Sin, random_expr(rng, d)),
            ),
            Expr::unary(UnaryOp::Sin, random_expr(rng, d)),
        ),
    }
}

pub fn random_binding<R: Rng>(rng: &mut R) -> Binding {
    VARS.iter()
        .map(|v| (v.to_string(), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Centered finite difference of `e` in `var` at `b`.
pub fn central_difference(e: &Expr, b: &Binding, var: &str, h: f64) -> Option<f64> {
    let x = b.get(var).ok()?;
    let plus = eval(e, &b.clone().with(var, x + h)).ok()?;
    let minus = eval(e, &b.clone().with(var, x - h)).ok()?;
    Some((plus - minus) / (2.0 * h))
}

/// Closed-form solution of q'' = -q - gamma q' with q(0) = q0, q'(0) = v0
/// (underdamped, gamma < 2).
pub fn damped_oscillator_exact(gamma: f64, q0: f64, v0: f64, t: f64) -> (f64, f64) {
    let a = gamma / 2.0;
    let w = (1.0 - a * a).sqrt();
    let c1 = q0;
    let c2 = (v0 + a * q0) / w;
    let e = (-a * t).exp();
    let (s, c) = (w * t).sin_cos();
    let q = e * (c1 * c + c2 * s);
    let v = e * (-a * (c1 * c + c2 * s) + w * (-c1 * s + c2 * c));
    (q, v)
}

fn coef<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo..hi) * 1000.0).round() / 1000.0
}

/// Random regular action-dependent system on `n` coordinates `q1..qn` with
/// `k` constraints. The velocity Hessian is diagonally dominant and each
/// constraint `phi<a>` has a coefficient of at least 1 on `vq<a>`, so both
/// the unconstrained and the augmented systems are solvable.
/// `nonlinear` adds a `vq<a>^2` term to each constraint.
pub fn random_system<R: Rng>(rng: &mut R, n: usize, k: usize, nonlinear: bool, kind: ConstraintKind) -> SystemSpec {
    assert!(k < n);
    let q = |i: usize| format!("q{}", i + 1);
    let v = |i: usize| format!("vq{}", i + 1);
    let mut terms = Vec::new();
    for i in 0..n {
        let j = rng.gen_range(0..n);
        terms.push(format!(
            "0.5*({} + 0.4*sin({}*{} + {}))*{}^2",
            coef(rng, 1.5, 2.5),
            coef(rng, -2.0, 2.0),
            q(j),
            coef(rng, -1.0, 1.0),
            v(i)
        ));
        terms.push(format!("{}*sin({})*{}", coef(rng, -0.5, 0.5), q(rng.gen_range(0..n)), v(i)));
        terms.push(format!("-0.5*k{}*{}^2", i + 1, q(i)));
        for j in i + 1..n {
            if rng.gen_bool(0.5) {
                terms.push(format!("{}*cos({})*{}*{}", coef(rng, -0.2, 0.2), q(i), v(i), v(j)));
            }
        }
    }
    terms.push("-gamma*s".into());
    if rng.gen_bool(0.5) {
        terms.push(format!("{}*s*cos({})", coef(rng, -0.2, 0.2), q(0)));
    }
    if rng.gen_bool(0.5) {
        terms.push(format!("{}*s*{}", coef(rng, -0.1, 0.1), v(n - 1)));
    }
    if rng.gen_bool(0.5) {
        terms.push(format!("{}*s^2", coef(rng, -0.1, 0.1)));
    }
    let lagrangian = terms.join(" + ");

    let constraints: Vec<(String, String)> = (0..k)
        .map(|a| {
            let mut t = vec![format!("(2 + cos({}))*{}", q(rng.gen_range(0..n)), v(a))];
            for j in k..n {
                t.push(format!("{}*sin({})*{}", coef(rng, -1.0, 1.0), q(rng.gen_range(0..n)), v(j)));
            }
            t.push(format!("{}*{}", coef(rng, -0.5, 0.5), q(rng.gen_range(0..n))));
            if rng.gen_bool(0.5) {
                t.push(format!("{}*s", coef(rng, -0.2, 0.2)));
            }
            if nonlinear {
                t.push(format!("0.1*{}^2", v(a)));
            }
            (format!("phi{}", a + 1), t.join(" + "))
        })
        .collect();

    let mut params = Binding::new();
    params.set("gamma", coef(rng, 0.05, 0.5));
    for i in 0..n {
        params.set(format!("k{}", i + 1), coef(rng, 0.5, 2.0));
    }
    let coords: Vec<String> = (0..n).map(q).collect();
    let coords: Vec<&str> = coords.iter().map(String::as_str).collect();
    let cons: Vec<(&str, &str)> = constraints.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    SystemSpec::parse(&coords, &lagrangian, params, &cons, kind).expect("generated system is valid")
}

/// Random state with entries in [-1, 1]; vakonomic states carry small `ν`
/// and `μ`.
pub fn random_state<R: Rng>(rng: &mut R, sys: &SystemSpec) -> PhaseState {
    let n = sys.dof();
    let mut u = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    let q = (0..n).map(|_| u(-1.0, 1.0)).collect();
    let v = (0..n).map(|_| u(-1.0, 1.0)).collect();
    let st = PhaseState::new(0.0, q, v, u(-1.0, 1.0));
    if sys.kind() == ConstraintKind::Vakonomic {
        let nu = (0..sys.constraints().len()).map(|_| u(-0.3, 0.3)).collect();
        st.with_multipliers(nu, u(-0.5, 0.5))
    } else {
        st
    }
}

/// Solves each constraint `phi<a>` for `vq<a>`, assuming it is affine in
/// that velocity, so the returned state is admissible.
pub fn make_admissible(sys: &SystemSpec, st: &PhaseState) -> PhaseState {
    let mut st = st.clone();
    for (a, c) in sys.constraints().iter().enumerate() {
        let at = |va: f64, st: &PhaseState| {
            let mut b = state_binding(sys, st);
            b.set(sys.velocities()[a].clone(), va);
            eval(&c.expr, &b).unwrap()
        };
        let (p0, p1) = (at(0.0, &st), at(1.0, &st));
        st.v[a] = -p0 / (p1 - p0);
    }
    st
}

/// Binding of parameters, coordinates, velocities and `s` at `st`.
pub fn state_binding(sys: &SystemSpec, st: &PhaseState) -> Binding {
    let mut b = sys.params().clone();
    for (name, x) in sys.coordinates().iter().zip(&st.q) {
        b.set(name.clone(), *x);
    }
    for (name, x) in sys.velocities().iter().zip(&st.v) {
        b.set(name.clone(), *x);
    }
    b.set("s", st.s);
    b
}

/// Symbolic partial of `e` evaluated at `b`.
pub fn partial(e: &Expr, var: &str, b: &Binding) -> f64 {
    eval(&differentiate(e, var), b).unwrap()
}

/// Components `∂L/∂qⁱ − d/dt ∂L/∂vⁱ` of the Euler–Lagrange operator along a
/// curve through `st` with accelerations `acc` and `ṡ = L`, evaluated from
/// the compiled cache.
pub fn euler_lagrange_from_cache(cache: &PartialCache, st: &PhaseState, acc: &[f64]) -> Vec<f64> {
    let x = cache.slot_values(st).unwrap();
    let l = &cache.lagrangian;
    let at = |c: &herglotz::symexpr::CompiledExpr| c.eval(&x).unwrap();
    let sdot = at(&l.value);
    (0..cache.dof())
        .map(|i| {
            let mut ddt = at(&l.dsdv[i]) * sdot;
            for (j, (vj, aj)) in st.v.iter().zip(acc).enumerate() {
                ddt += at(&l.dqdv[j][i]) * vj + at(&l.dvdv[j][i]) * aj;
            }
            at(&l.dq[i]) - ddt
        })
        .collect()
}

use super::{simplify, BinaryOp, Expr, UnaryOp};

/// Symbolic partial derivative of `e` with respect to `var`, simplified.
/// Every other variable is held fixed.
///
/// Powers with an exponent free of `var` use the power rule; otherwise the
/// logarithmic rule `a^b (b' ln a + b a'/a)` is used, which is only
/// meaningful where `a > 0`.
///
/// ```
/// use std::collections::HashSet;
/// use herglotz::symexpr::{differentiate, parse_expr};
///
/// let vars: HashSet<String> = ["q", "v", "s", "gamma"].iter().map(|s| s.to_string()).collect();
/// let lag = parse_expr("0.5*v^2 - 0.5*q^2 - gamma*s", &vars).unwrap();
/// assert_eq!(differentiate(&lag, "v").to_string(), "v");
/// assert_eq!(differentiate(&lag, "s").to_string(), "-gamma");
/// ```
pub fn differentiate(e: &Expr, var: &str) -> Expr {
    simplify(&raw(e, var))
}

fn raw(e: &Expr, var: &str) -> Expr {
    if !e.contains_var(var) {
        return Expr::Const(0.0);
    }
    match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(name) => Expr::Const(if &**name == var { 1.0 } else { 0.0 }),
        Expr::Unary(op, a) => {
            let a = (**a).clone();
            let da = raw(&a, var);
            let outer = match op {
                UnaryOp::Neg => return Expr::neg(da),
                UnaryOp::Sin => Expr::unary(UnaryOp::Cos, a),
                UnaryOp::Cos => Expr::neg(Expr::unary(UnaryOp::Sin, a)),
                UnaryOp::Tan => Expr::div(
                    Expr::Const(1.0),
                    Expr::pow(Expr::unary(UnaryOp::Cos, a), Expr::Const(2.0)),
                ),
                UnaryOp::Exp => Expr::unary(UnaryOp::Exp, a),
                UnaryOp::Ln => return Expr::div(da, a),
                UnaryOp::Sqrt => Expr::div(
                    Expr::Const(1.0),
                    Expr::mul(Expr::Const(2.0), Expr::unary(UnaryOp::Sqrt, a)),
                ),
            };
            Expr::mul(outer, da)
        }
        Expr::Binary(op, l, r) => {
            let (a, b) = ((**l).clone(), (**r).clone());
            let (da, db) = (raw(&a, var), raw(&b, var));
            match op {
                BinaryOp::Add => Expr::add(da, db),
                BinaryOp::Sub => Expr::sub(da, db),
                BinaryOp::Mul => Expr::add(Expr::mul(da, b), Expr::mul(a, db)),
                BinaryOp::Div => Expr::div(
                    Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a, db)),
                    Expr::pow(b, Expr::Const(2.0)),
                ),
                BinaryOp::Pow => {
                    if !b.contains_var(var) {
                        // b * a^(b-1) * a'
                        Expr::mul(
                            Expr::mul(
                                b.clone(),
                                Expr::pow(a, Expr::sub(b, Expr::Const(1.0))),
                            ),
                            da,
                        )
                    } else if !a.contains_var(var) {
                        // a^b * ln(a) * b'
                        Expr::mul(
                            Expr::mul(e.clone(), Expr::unary(UnaryOp::Ln, a)),
                            db,
                        )
                    } else {
                        Expr::mul(
                            e.clone(),
                            Expr::add(
                                Expr::mul(db, Expr::unary(UnaryOp::Ln, a.clone())),
                                Expr::div(Expr::mul(b, da), a),
                            ),
                        )
                    }
                }
            }
        }
    }
}

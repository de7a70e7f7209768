use super::eval::{apply_binary, apply_unary};
use super::{BinaryOp, Expr, UnaryOp};

/// Rewrites `e` with constant folding and the usual additive and
/// multiplicative identities until nothing changes.
///
/// The result evaluates to the same value as `e` wherever both are defined.
/// Folds that would fail or produce a non-finite value (such as `1/0`) are
/// left in place so that evaluation reports them.
///
/// ```
/// use herglotz::symexpr::{simplify, Expr};
///
/// let q = Expr::var("q");
/// let e = Expr::add(Expr::mul(Expr::Const(1.0), q.clone()), Expr::Const(0.0));
/// assert_eq!(simplify(&e), q);
/// ```
pub fn simplify(e: &Expr) -> Expr {
    let mut current = e.clone();
    loop {
        let next = pass(&current);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn pass(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Unary(op, a) => rewrite_unary(*op, pass(a)),
        Expr::Binary(op, l, r) => rewrite_binary(*op, pass(l), pass(r)),
    }
}

fn rewrite_unary(op: UnaryOp, a: Expr) -> Expr {
    if let Expr::Const(c) = a {
        let node = Expr::unary(op, a.clone());
        if let Ok(v) = apply_unary(op, c, &node) {
            return Expr::Const(v);
        }
        return node;
    }
    if op == UnaryOp::Neg {
        if let Expr::Unary(UnaryOp::Neg, inner) = &a {
            return (**inner).clone();
        }
    }
    Expr::unary(op, a)
}

fn rewrite_binary(op: BinaryOp, l: Expr, r: Expr) -> Expr {
    if let (Expr::Const(x), Expr::Const(y)) = (&l, &r) {
        let node = Expr::binary(op, l.clone(), r.clone());
        return match apply_binary(op, *x, *y, &node) {
            Ok(v) => Expr::Const(v),
            Err(_) => node,
        };
    }
    match op {
        BinaryOp::Add => {
            if l.is_const(0.0) {
                return r;
            }
            if r.is_const(0.0) {
                return l;
            }
        }
        BinaryOp::Sub => {
            if r.is_const(0.0) {
                return l;
            }
            if l.is_const(0.0) {
                return Expr::neg(r);
            }
        }
        BinaryOp::Mul => {
            if l.is_const(0.0) || r.is_const(0.0) {
                return Expr::Const(0.0);
            }
            if l.is_const(1.0) {
                return r;
            }
            if r.is_const(1.0) {
                return l;
            }
            if l.is_const(-1.0) {
                return Expr::neg(r);
            }
            if r.is_const(-1.0) {
                return Expr::neg(l);
            }
            // constants to the left
            if r.as_const().is_some() {
                return Expr::mul(r, l);
            }
            if let (Some(a), Expr::Binary(BinaryOp::Mul, inner_l, inner_r)) = (l.as_const(), &r) {
                if let Some(b) = inner_l.as_const() {
                    return Expr::mul(Expr::Const(a * b), (**inner_r).clone());
                }
            }
        }
        BinaryOp::Div => {
            if r.is_const(1.0) {
                return l;
            }
            if l.is_const(0.0) && !r.is_const(0.0) {
                return Expr::Const(0.0);
            }
        }
        BinaryOp::Pow => {
            if r.is_const(1.0) {
                return l;
            }
            if r.is_const(0.0) && !l.is_const(0.0) {
                return Expr::Const(1.0);
            }
        }
    }
    Expr::binary(op, l, r)
}

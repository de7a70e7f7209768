use std::collections::BTreeMap;

use super::{BinaryOp, EvalError, Expr, UnaryOp};

/// Values for named variables. Lookups of absent names are errors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Binding {
    values: BTreeMap<String, f64>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Result<f64, EvalError> {
        self.values
            .get(name)
            .copied()
            .ok_or_else(|| EvalError::Unbound(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.values
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Binding {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        Binding {
            values: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

/// Evaluates `e` in double precision.
///
/// ```
/// use herglotz::symexpr::{eval, Binding, Expr};
///
/// let e = Expr::mul(Expr::var("x"), Expr::Const(3.0));
/// assert_eq!(eval(&e, &Binding::new().with("x", 2.0)).unwrap(), 6.0);
/// ```
pub fn eval(e: &Expr, b: &Binding) -> Result<f64, EvalError> {
    match e {
        Expr::Const(c) => Ok(*c),
        Expr::Var(name) => b.get(name),
        Expr::Unary(op, a) => apply_unary(*op, eval(a, b)?, e),
        Expr::Binary(op, l, r) => apply_binary(*op, eval(l, b)?, eval(r, b)?, e),
    }
}

fn domain(reason: &'static str, e: &Expr) -> EvalError {
    EvalError::Domain {
        reason,
        expr: e.to_string(),
    }
}

pub(super) fn apply_unary(op: UnaryOp, x: f64, e: &Expr) -> Result<f64, EvalError> {
    let y = match op {
        UnaryOp::Neg => -x,
        UnaryOp::Sin => x.sin(),
        UnaryOp::Cos => x.cos(),
        UnaryOp::Tan => x.tan(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Ln => {
            if x <= 0.0 {
                return Err(domain("logarithm of a non-positive value", e));
            }
            x.ln()
        }
        UnaryOp::Sqrt => {
            if x < 0.0 {
                return Err(domain("square root of a negative value", e));
            }
            x.sqrt()
        }
    };
    finite(y, e)
}

pub(super) fn apply_binary(op: BinaryOp, x: f64, y: f64, e: &Expr) -> Result<f64, EvalError> {
    let z = match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => {
            if y == 0.0 {
                return Err(domain("division by zero", e));
            }
            x / y
        }
        BinaryOp::Pow => {
            if x == 0.0 && y < 0.0 {
                return Err(domain("zero raised to a negative power", e));
            }
            if x < 0.0 && y.fract() != 0.0 {
                return Err(domain("negative base with non-integer exponent", e));
            }
            x.powf(y)
        }
    };
    finite(z, e)
}

fn finite(v: f64, e: &Expr) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(domain("non-finite result", e))
    }
}

//! Expression trees for Lagrangians and constraint functions.
//!
//! An [`Expr`] is parsed from text with [`parse_expr`], differentiated
//! symbolically with [`differentiate`], tidied with [`simplify`] and evaluated
//! either against a named [`Binding`] or, on hot paths, through a
//! [`CompiledExpr`] whose variables have been resolved to slot indices.

mod compile;
mod diff;
mod eval;
mod parse;
mod simplify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

pub use compile::CompiledExpr;
pub use diff::differentiate;
pub use eval::{eval, Binding};
pub use parse::{is_function_name, parse_expr, FUNCTIONS};
pub use simplify::simplify;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

/// Immutable expression tree. Children are reference counted so that
/// derivative construction can share subtrees freely.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Arc<str>),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(Arc::from(name))
    }

    pub fn unary(op: UnaryOp, arg: Expr) -> Expr {
        Expr::Unary(op, Arc::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Arc::new(lhs), Arc::new(rhs))
    }

    pub fn neg(arg: Expr) -> Expr {
        Expr::unary(UnaryOp::Neg, arg)
    }

    pub fn add(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, lhs, rhs)
    }

    pub fn sub(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, lhs, rhs)
    }

    pub fn mul(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, lhs, rhs)
    }

    pub fn div(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Div, lhs, rhs)
    }

    pub fn pow(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Pow, lhs, rhs)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_const(&self, value: f64) -> bool {
        matches!(self, Expr::Const(c) if *c == value)
    }

    /// Names of all variables referenced by the tree, sorted.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.to_string());
            }
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn contains_var(&self, var: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(name) => &**name == var,
            Expr::Unary(_, a) => a.contains_var(var),
            Expr::Binary(_, a, b) => a.contains_var(var) || b.contains_var(var),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Replaces variables by constants where the map has an entry.
    pub fn substitute(&self, values: &BTreeMap<String, f64>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(name) => match values.get(&**name) {
                Some(v) => Expr::Const(*v),
                None => self.clone(),
            },
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute(values)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.substitute(values), b.substitute(values)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            Expr::Const(_) | Expr::Var(_) => 5,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Unary(_, _) => 5,
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => 2,
            Expr::Binary(BinaryOp::Pow, _, _) => 4,
        }
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, value: f64) -> fmt::Result {
    // `{:?}` is the shortest representation that parses back to the same bits.
    write!(f, "{:?}", value)
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({})", e)
    } else {
        write!(f, "{}", e)
    }
}

impl fmt::Display for Expr {
    /// Renders text that [`parse_expr`] accepts and that parses back to an
    /// expression with identical values.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "-")?;
                    write_number(f, -c)
                } else {
                    write_number(f, *c)
                }
            }
            Expr::Var(name) => write!(f, "{}", name),
            Expr::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                write_wrapped(f, a, a.precedence() < 4)
            }
            Expr::Unary(op, a) => write!(f, "{}({})", op.name(), a),
            Expr::Binary(op, a, b) => {
                let (wrap_l, wrap_r) = match op {
                    BinaryOp::Add => (false, b.precedence() < 2),
                    BinaryOp::Sub => (false, b.precedence() < 2),
                    BinaryOp::Mul => (a.precedence() < 2, b.precedence() < 3),
                    BinaryOp::Div => (a.precedence() < 2, b.precedence() < 3),
                    // right operand is a `factor`: unary minus and powers are fine
                    BinaryOp::Pow => (a.precedence() < 5, b.precedence() < 3),
                };
                write_wrapped(f, a, wrap_l)?;
                write!(f, " {} ", op.symbol())?;
                write_wrapped(f, b, wrap_r)
            }
        }
    }
}

/// Errors raised while turning text into an [`Expr`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared identifier `{name}` at offset {offset}")]
    Undeclared { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::Undeclared { offset, .. } => *offset,
        }
    }
}

/// Errors raised while evaluating an expression numerically.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error: {reason} in `{expr}`")]
    Domain { reason: &'static str, expr: String },
}

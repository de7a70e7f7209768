use std::collections::HashMap;
use std::sync::Arc;

use super::eval::{apply_binary, apply_unary};
use super::{BinaryOp, EvalError, Expr, UnaryOp};

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Slot(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

/// An expression whose variables have been resolved to positions in a value
/// slice, so evaluation needs no name lookups.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Node,
    source: Arc<Expr>,
    constant: Option<f64>,
}

impl CompiledExpr {
    /// Resolves every variable of `e` through `slots`.
    pub fn new(e: &Expr, slots: &HashMap<String, usize>) -> Result<Self, EvalError> {
        Ok(CompiledExpr {
            root: lower(e, slots)?,
            source: Arc::new(e.clone()),
            constant: e.as_const(),
        })
    }

    pub fn source(&self) -> &Expr {
        &self.source
    }

    /// `Some(c)` when the expression is the literal constant `c`.
    pub fn as_const(&self) -> Option<f64> {
        self.constant
    }

    pub fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        if let Some(c) = self.constant {
            return Ok(c);
        }
        self.eval_node(&self.root, values)
    }

    fn eval_node(&self, node: &Node, values: &[f64]) -> Result<f64, EvalError> {
        match node {
            Node::Const(c) => Ok(*c),
            Node::Slot(i) => Ok(values[*i]),
            Node::Unary(op, a) => {
                let x = self.eval_node(a, values)?;
                apply_unary(*op, x, &self.source).map_err(|e| self.locate(e, node))
            }
            Node::Binary(op, l, r) => {
                let x = self.eval_node(l, values)?;
                let y = self.eval_node(r, values)?;
                apply_binary(*op, x, y, &self.source).map_err(|e| self.locate(e, node))
            }
        }
    }

    // Domain errors should name the failing subexpression, not the whole tree.
    fn locate(&self, err: EvalError, node: &Node) -> EvalError {
        match err {
            EvalError::Domain { reason, .. } => EvalError::Domain {
                reason,
                expr: find_source(&self.source, &self.root, node)
                    .unwrap_or(&self.source)
                    .to_string(),
            },
            other => other,
        }
    }
}

fn lower(e: &Expr, slots: &HashMap<String, usize>) -> Result<Node, EvalError> {
    Ok(match e {
        Expr::Const(c) => Node::Const(*c),
        Expr::Var(name) => Node::Slot(
            *slots
                .get(&**name)
                .ok_or_else(|| EvalError::Unbound(name.to_string()))?,
        ),
        Expr::Unary(op, a) => Node::Unary(*op, Box::new(lower(a, slots)?)),
        Expr::Binary(op, l, r) => {
            Node::Binary(*op, Box::new(lower(l, slots)?), Box::new(lower(r, slots)?))
        }
    })
}

// The lowered tree mirrors the source tree node for node.
fn find_source<'a>(e: &'a Expr, n: &Node, target: &Node) -> Option<&'a Expr> {
    if std::ptr::eq(n, target) {
        return Some(e);
    }
    match (e, n) {
        (Expr::Unary(_, a), Node::Unary(_, na)) => find_source(a, na, target),
        (Expr::Binary(_, l, r), Node::Binary(_, nl, nr)) => {
            find_source(l, nl, target).or_else(|| find_source(r, nr, target))
        }
        _ => None,
    }
}

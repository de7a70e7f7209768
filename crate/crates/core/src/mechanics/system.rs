use std::collections::HashSet;

use super::{ConstraintKind, MechanicsError};
use crate::symexpr::{is_function_name, parse_expr, Binding, Expr, ParseError};

/// The action variable. Its velocity `vs` is eliminated by the engine.
pub const ACTION_VAR: &str = "s";
pub const ACTION_VELOCITY: &str = "vs";

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub expr: Expr,
}

/// A dissipative Lagrangian system: coordinates, `L(q, v, s)`, parameter
/// values and velocity constraints with the way they are enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    coordinates: Vec<String>,
    velocities: Vec<String>,
    lagrangian: Expr,
    params: Binding,
    constraints: Vec<Constraint>,
    kind: ConstraintKind,
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn velocity_name(coordinate: &str) -> String {
    format!("v{coordinate}")
}

impl SystemSpec {
    /// Parses the Lagrangian and constraint texts against the declared
    /// coordinates, velocities, `s` and parameters.
    ///
    /// ```
    /// use herglotz::mechanics::{ConstraintKind, SystemSpec};
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
    /// assert_eq!(sys.velocities(), ["vq"]);
    /// ```
    pub fn parse(
        coordinates: &[&str],
        lagrangian: &str,
        params: Binding,
        constraints: &[(&str, &str)],
        kind: ConstraintKind,
    ) -> Result<Self, MechanicsError> {
        let coordinates: Vec<String> = coordinates.iter().map(|s| s.to_string()).collect();
        check_names(&coordinates, &params)?;
        let declared = declared_names(&coordinates, &params);
        let lagrangian = parse_checked(lagrangian, &declared, "the Lagrangian")?;
        let constraints = constraints
            .iter()
            .map(|(name, text)| {
                Ok(Constraint {
                    name: name.to_string(),
                    expr: parse_checked(text, &declared, &format!("constraint `{name}`"))?,
                })
            })
            .collect::<Result<Vec<_>, MechanicsError>>()?;
        SystemSpec::new(coordinates, lagrangian, params, constraints, kind)
    }

    /// Builds a system from already parsed expressions.
    pub fn new(
        coordinates: Vec<String>,
        lagrangian: Expr,
        params: Binding,
        constraints: Vec<Constraint>,
        kind: ConstraintKind,
    ) -> Result<Self, MechanicsError> {
        check_names(&coordinates, &params)?;
        let declared = declared_names(&coordinates, &params);
        check_free_vars(&lagrangian, &declared, "the Lagrangian")?;
        let mut seen = HashSet::new();
        for c in &constraints {
            if !is_identifier(&c.name) {
                return Err(invalid(format!("constraint name `{}` is not an identifier", c.name)));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(invalid(format!("duplicate constraint name `{}`", c.name)));
            }
            check_free_vars(&c.expr, &declared, &format!("constraint `{}`", c.name))?;
        }
        if constraints.len() >= coordinates.len() {
            return Err(invalid(format!(
                "{} constraints on {} coordinates; at most {} allowed",
                constraints.len(),
                coordinates.len(),
                coordinates.len() - 1
            )));
        }
        let velocities = coordinates.iter().map(|c| velocity_name(c)).collect();
        Ok(SystemSpec {
            coordinates,
            velocities,
            lagrangian,
            params,
            constraints,
            kind,
        })
    }

    pub fn dof(&self) -> usize {
        self.coordinates.len()
    }

    pub fn coordinates(&self) -> &[String] {
        &self.coordinates
    }

    pub fn velocities(&self) -> &[String] {
        &self.velocities
    }

    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian
    }

    pub fn params(&self) -> &Binding {
        &self.params
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: ConstraintKind) -> Self {
        self.kind = kind;
        self
    }

    /// Same system with new parameter values. The names must not change.
    pub fn with_params(mut self, params: Binding) -> Result<Self, MechanicsError> {
        let old: Vec<&str> = self.params.iter().map(|(k, _)| k).collect();
        let new: Vec<&str> = params.iter().map(|(k, _)| k).collect();
        if old != new {
            return Err(invalid(format!("parameter names changed from {old:?} to {new:?}")));
        }
        self.params = params;
        Ok(self)
    }

    /// Same coordinates, Lagrangian and parameters without any constraints.
    pub fn without_constraints(mut self) -> Self {
        self.constraints.clear();
        self
    }

    /// Every identifier that may appear in the Lagrangian or a constraint.
    pub fn declared_names(&self) -> HashSet<String> {
        declared_names(&self.coordinates, &self.params)
    }
}

fn invalid(msg: String) -> MechanicsError {
    MechanicsError::InvalidSystem(msg)
}

fn declared_names(coordinates: &[String], params: &Binding) -> HashSet<String> {
    coordinates
        .iter()
        .cloned()
        .chain(coordinates.iter().map(|c| velocity_name(c)))
        .chain(std::iter::once(ACTION_VAR.to_string()))
        .chain(params.iter().map(|(k, _)| k.to_string()))
        .collect()
}

fn check_names(coordinates: &[String], params: &Binding) -> Result<(), MechanicsError> {
    if coordinates.is_empty() {
        return Err(invalid("at least one coordinate is required".into()));
    }
    let mut taken: HashSet<String> = HashSet::new();
    let mut claim = |name: &str, role: &str| -> Result<(), MechanicsError> {
        if !is_identifier(name) {
            return Err(invalid(format!("{role} `{name}` is not an identifier")));
        }
        if is_function_name(name) {
            return Err(invalid(format!("{role} `{name}` shadows a function name")));
        }
        if name == ACTION_VAR || name == ACTION_VELOCITY {
            return Err(invalid(format!("{role} `{name}` uses a reserved name")));
        }
        if !taken.insert(name.to_string()) {
            return Err(invalid(format!("{role} `{name}` collides with another name")));
        }
        Ok(())
    };
    for c in coordinates {
        claim(c, "coordinate")?;
    }
    for c in coordinates {
        claim(&velocity_name(c), "velocity")?;
    }
    for (p, value) in params.iter() {
        claim(p, "parameter")?;
        if !value.is_finite() {
            return Err(invalid(format!("parameter `{p}` is not finite")));
        }
    }
    Ok(())
}

fn parse_checked(text: &str, declared: &HashSet<String>, what: &str) -> Result<Expr, MechanicsError> {
    parse_expr(text, declared).map_err(|source| match &source {
        ParseError::Undeclared { name, .. } if name == ACTION_VELOCITY => invalid(format!(
            "{what} references `{ACTION_VELOCITY}`, which is reserved (it equals the Lagrangian)"
        )),
        _ => MechanicsError::Parse {
            what: what.to_string(),
            source,
        },
    })
}

fn check_free_vars(e: &Expr, declared: &HashSet<String>, what: &str) -> Result<(), MechanicsError> {
    match e.free_vars().into_iter().find(|v| !declared.contains(v)) {
        Some(v) if v == ACTION_VELOCITY => Err(invalid(format!(
            "{what} references `{ACTION_VELOCITY}`, which is reserved (it equals the Lagrangian)"
        ))),
        Some(v) => Err(invalid(format!("{what} references undeclared variable `{v}`"))),
        None => Ok(()),
    }
}

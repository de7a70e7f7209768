//! Line-oriented scenario files.
//!
//! ```text
//! [system]
//! coordinates = x, y, theta, phi
//! lagrangian = 0.5*(vx^2 + vy^2 + vtheta^2 + vphi^2) + delta*s
//!
//! [params]
//! delta = 0.1
//!
//! [constraints]
//! kind = nonholonomic
//! phi1 = vx - vtheta*cos(phi)
//! phi2 = vy - vtheta*sin(phi)
//!
//! [initial]
//! x = 0, y = 0, theta = 0, phi = 0
//! vx = 1, vy = 0, vtheta = 1, vphi = 1
//! s = 0
//!
//! [integration]
//! method = rk4
//! dt = 0.001
//! t_end = 1
//! ```
//!
//! `#` starts a comment. Unknown sections and keys are rejected.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use super::{Check, Scenario, ScenarioError};
use crate::integrate::{IntegratorConfig, Method};
use crate::mechanics::{Constraint, ConstraintKind, MechanicsError, PhaseState, SystemSpec};
use crate::symexpr::{parse_expr, Binding, Expr};

const SECTIONS: [&str; 5] = ["system", "params", "constraints", "initial", "integration"];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn parse_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        message: message.into(),
    }
}

fn semantic(line: Option<usize>, key: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Semantic {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn split_sections(text: &str) -> Result<HashMap<&'static str, (usize, Vec<Entry>)>, ScenarioError> {
    let mut sections: HashMap<&'static str, (usize, Vec<Entry>)> = HashMap::new();
    let mut current: Option<&'static str> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line, "unterminated section header"))?
                .trim();
            let known = SECTIONS
                .iter()
                .find(|s| **s == name)
                .ok_or_else(|| semantic(Some(line), name, "unknown section"))?;
            if sections.contains_key(known) {
                return Err(semantic(Some(line), name, "duplicate section"));
            }
            sections.insert(known, (line, Vec::new()));
            current = Some(known);
            continue;
        }
        let section = current.ok_or_else(|| parse_err(line, "entry before the first section header"))?;
        // [initial] allows several comma-separated entries per line
        let pieces: Vec<&str> = if section == "initial" {
            content.split(',').collect()
        } else {
            vec![content]
        };
        for piece in pieces {
            let (key, value) = piece
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected `key = value`, got `{}`", piece.trim())))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(parse_err(line, "missing key"));
            }
            if value.is_empty() {
                return Err(parse_err(line, format!("missing value for `{key}`")));
            }
            let entries = &mut sections.get_mut(section).expect("current section exists").1;
            if entries.iter().any(|e| e.key == key) {
                return Err(semantic(Some(line), key, format!("duplicate key in [{section}]")));
            }
            entries.push(Entry {
                line,
                key: key.to_string(),
                value: value.to_string(),
            });
        }
    }
    Ok(sections)
}

fn number(e: &Entry) -> Result<f64, ScenarioError> {
    match e.value.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(parse_err(e.line, format!("`{}` is not a finite number", e.value))),
    }
}

fn expression(e: &Entry, declared: &HashSet<String>) -> Result<Expr, ScenarioError> {
    parse_expr(&e.value, declared).map_err(|err| {
        parse_err(e.line, format!("in `{}`: {err}", e.key))
    })
}

fn map_system_error(err: MechanicsError, line: Option<usize>, key: &str) -> ScenarioError {
    match err {
        MechanicsError::InvalidSystem(message) => semantic(line, key, message),
        other => ScenarioError::System(other),
    }
}

/// Parses scenario text. `name` labels the result.
pub fn parse_scenario(text: &str, name: &str) -> Result<Scenario, ScenarioError> {
    let mut sections = split_sections(text)?;
    let (system_line, system) = sections
        .remove("system")
        .ok_or_else(|| semantic(None, "system", "missing section"))?;
    let find = |entries: &[Entry], key: &str| entries.iter().find(|e| e.key == key).cloned();
    for e in &system {
        if e.key != "coordinates" && e.key != "lagrangian" {
            return Err(semantic(Some(e.line), &e.key, "unknown key in [system]"));
        }
    }
    let coords_entry = find(&system, "coordinates")
        .ok_or_else(|| semantic(Some(system_line), "coordinates", "missing key in [system]"))?;
    let coordinates: Vec<String> = coords_entry.value.split(',').map(|c| c.trim().to_string()).collect();
    let lagrangian_entry = find(&system, "lagrangian")
        .ok_or_else(|| semantic(Some(system_line), "lagrangian", "missing key in [system]"))?;

    let (_, param_entries) = sections.remove("params").unwrap_or_default();
    let mut params = Binding::new();
    for e in &param_entries {
        params.set(e.key.clone(), number(e)?);
    }

    // names are validated before any expression is parsed against them
    let probe = SystemSpec::new(coordinates.clone(), Expr::Const(0.0), params.clone(), Vec::new(), ConstraintKind::None)
        .map_err(|e| map_system_error(e, Some(coords_entry.line), "coordinates"))?;
    let declared = probe.declared_names();
    let lagrangian = expression(&lagrangian_entry, &declared)?;

    let (_, constraint_entries) = sections.remove("constraints").unwrap_or_default();
    let mut kind = ConstraintKind::None;
    let mut constraints = Vec::new();
    let mut constraint_lines = Vec::new();
    for e in &constraint_entries {
        if e.key == "kind" {
            kind = e
                .value
                .parse()
                .map_err(|msg: String| semantic(Some(e.line), "kind", msg))?;
        } else {
            constraints.push(Constraint {
                name: e.key.clone(),
                expr: expression(e, &declared)?,
            });
            constraint_lines.push(e.line);
        }
    }
    let system = SystemSpec::new(coordinates, lagrangian, params, constraints, kind).map_err(|e| {
        let line = constraint_lines.first().copied().or(Some(lagrangian_entry.line));
        map_system_error(e, line, "constraints")
    })?;

    let (initial_line, initial_entries) = sections
        .remove("initial")
        .ok_or_else(|| semantic(None, "initial", "missing section"))?;
    let initial = initial_state(&system, initial_line, &initial_entries)?;

    let (integration_line, integration_entries) = sections
        .remove("integration")
        .ok_or_else(|| semantic(None, "integration", "missing section"))?;
    let config = integration(integration_line, &integration_entries)?;
    config
        .validate(initial.t)
        .map_err(|e| semantic(Some(integration_line), "integration", e.to_string()))?;

    Ok(Scenario {
        name: name.to_string(),
        checks: Check::defaults(system.kind()),
        system,
        initial,
        config,
    })
}

fn initial_state(sys: &SystemSpec, section_line: usize, entries: &[Entry]) -> Result<PhaseState, ScenarioError> {
    let mut values: HashMap<&str, (usize, f64)> = HashMap::new();
    let mut allowed: Vec<String> = sys.coordinates().to_vec();
    allowed.extend(sys.velocities().iter().cloned());
    allowed.push("s".into());
    allowed.extend(sys.constraints().iter().map(|c| format!("nu_{}", c.name)));
    allowed.push("mu".into());
    for e in entries {
        if !allowed.contains(&e.key) {
            return Err(semantic(Some(e.line), &e.key, "unknown key in [initial]"));
        }
        values.insert(e.key.as_str(), (e.line, number(e)?));
    }
    let required = |name: &str| {
        values
            .get(name)
            .map(|(_, v)| *v)
            .ok_or_else(|| semantic(Some(section_line), name, "missing initial value"))
    };
    let q = sys.coordinates().iter().map(|c| required(c)).collect::<Result<Vec<_>, _>>()?;
    let v = sys.velocities().iter().map(|c| required(c)).collect::<Result<Vec<_>, _>>()?;
    let s = required("s")?;
    let nu = sys
        .constraints()
        .iter()
        .map(|c| values.get(format!("nu_{}", c.name).as_str()).map_or(0.0, |(_, v)| *v))
        .collect();
    let mu = values.get("mu").map_or(0.0, |(_, v)| *v);
    Ok(PhaseState::new(0.0, q, v, s).with_multipliers(nu, mu))
}

fn integration(section_line: usize, entries: &[Entry]) -> Result<IntegratorConfig, ScenarioError> {
    let mut cfg = IntegratorConfig::default();
    let mut t_end = None;
    for e in entries {
        match e.key.as_str() {
            "method" => {
                cfg.method = e
                    .value
                    .parse::<Method>()
                    .map_err(|msg| semantic(Some(e.line), "method", msg))?
            }
            "dt" => cfg.dt = number(e)?,
            "t_end" => t_end = Some(number(e)?),
            "abs_tol" => cfg.abs_tol = number(e)?,
            "rel_tol" => cfg.rel_tol = number(e)?,
            "dt_min" => cfg.dt_min = number(e)?,
            "dt_max" => cfg.dt_max = number(e)?,
            "record_every" => {
                cfg.record_every = e
                    .value
                    .parse::<usize>()
                    .map_err(|_| parse_err(e.line, format!("`{}` is not a positive integer", e.value)))?
            }
            other => return Err(semantic(Some(e.line), other, "unknown key in [integration]")),
        }
    }
    cfg.t_end = t_end.ok_or_else(|| semantic(Some(section_line), "t_end", "missing key in [integration]"))?;
    Ok(cfg)
}

/// Reads a scenario file; the scenario is named after the file stem.
pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    parse_scenario(&text, &name)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Canonical text of a scenario: fixed section and key order, parameters
/// sorted by name, numbers with 17 significant digits.
pub fn render(sc: &Scenario) -> String {
    let sys = &sc.system;
    let mut out = String::new();
    let _ = writeln!(out, "[system]");
    let _ = writeln!(out, "coordinates = {}", sys.coordinates().join(", "));
    let _ = writeln!(out, "lagrangian = {}", sys.lagrangian());
    if !sys.params().is_empty() {
        let _ = writeln!(out, "\n[params]");
        let sorted: BTreeMap<&str, f64> = sys.params().iter().collect();
        for (k, v) in sorted {
            let _ = writeln!(out, "{k} = {}", num(v));
        }
    }
    let _ = writeln!(out, "\n[constraints]");
    let _ = writeln!(out, "kind = {}", sys.kind());
    for c in sys.constraints() {
        let _ = writeln!(out, "{} = {}", c.name, c.expr);
    }
    let st = &sc.initial;
    let _ = writeln!(out, "\n[initial]");
    for (name, x) in sys.coordinates().iter().zip(&st.q) {
        let _ = writeln!(out, "{name} = {}", num(*x));
    }
    for (name, x) in sys.velocities().iter().zip(&st.v) {
        let _ = writeln!(out, "{name} = {}", num(*x));
    }
    let _ = writeln!(out, "s = {}", num(st.s));
    let mu = st.mu.unwrap_or(0.0);
    if sys.kind() == ConstraintKind::Vakonomic || mu != 0.0 || st.nu.iter().any(|x| *x != 0.0) {
        for (c, x) in sys.constraints().iter().zip(&st.nu) {
            let _ = writeln!(out, "nu_{} = {}", c.name, num(*x));
        }
        let _ = writeln!(out, "mu = {}", num(mu));
    }
    let cfg = &sc.config;
    let _ = writeln!(out, "\n[integration]");
    let _ = writeln!(out, "method = {}", cfg.method.as_str());
    let _ = writeln!(out, "dt = {}", num(cfg.dt));
    let _ = writeln!(out, "t_end = {}", num(cfg.t_end));
    let _ = writeln!(out, "abs_tol = {}", num(cfg.abs_tol));
    let _ = writeln!(out, "rel_tol = {}", num(cfg.rel_tol));
    let _ = writeln!(out, "dt_min = {}", num(cfg.dt_min));
    let _ = writeln!(out, "dt_max = {}", num(cfg.dt_max));
    let _ = writeln!(out, "record_every = {}", cfg.record_every);
    out
}

pub fn save(sc: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    std::fs::write(path, render(sc)).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

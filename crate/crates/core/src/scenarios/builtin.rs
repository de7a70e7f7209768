use super::{Check, Scenario, ScenarioError};
use crate::integrate::IntegratorConfig;
use crate::mechanics::{ConstraintKind, PhaseState, SystemSpec};
use crate::symexpr::{parse_expr, Binding};

pub const BUILTIN_NAMES: [&str; 4] = [
    "damped_oscillator",
    "rolling_disk",
    "chaplygin_sleigh",
    "rolling_disk_vakonomic",
];

const DISK_LAGRANGIAN: &str = "0.5*(vx^2 + vy^2 + vtheta^2 + vphi^2) + delta*s";
const DISK_CONSTRAINTS: [(&str, &str); 2] = [
    ("phi1", "vx - vtheta*cos(phi)"),
    ("phi2", "vy - vtheta*sin(phi)"),
];
const DISK_DELTA: f64 = 0.1;

const SLEIGH_LAGRANGIAN: &str = "0.5*((alpha*cos(theta) - beta*sin(theta))*vtheta + vy)^2 \
     + 0.5*((beta*cos(theta) + alpha*sin(theta))*vtheta - vx)^2 + vtheta^2 + gamma*s";

const OSCILLATOR_GAMMA: f64 = 0.2;

/// One of [`BUILTIN_NAMES`].
///
/// ```
/// let sc = herglotz::scenarios::builtin("rolling_disk").unwrap();
/// assert_eq!(sc.system.constraints()[0].expr.to_string(), "vx - vtheta * cos(phi)");
/// ```
pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    match name {
        "damped_oscillator" => Ok(damped_oscillator()),
        "rolling_disk" => Ok(rolling_disk(ConstraintKind::Nonholonomic)),
        "chaplygin_sleigh" => Ok(chaplygin_sleigh()),
        "rolling_disk_vakonomic" => Ok(rolling_disk(ConstraintKind::Vakonomic)),
        _ => Err(ScenarioError::UnknownBuiltin(name.to_string())),
    }
}

fn params(pairs: &[(&str, f64)]) -> Binding {
    pairs.iter().map(|(k, v)| (*k, *v)).collect()
}

fn oracle(text: &str, sys: &SystemSpec) -> crate::symexpr::Expr {
    parse_expr(text, &sys.declared_names()).expect("builtin oracle expressions parse")
}

fn damped_oscillator() -> Scenario {
    let system = SystemSpec::parse(
        &["q"],
        "0.5*vq^2 - 0.5*q^2 - gamma*s",
        params(&[("gamma", OSCILLATOR_GAMMA)]),
        &[],
        ConstraintKind::None,
    )
    .expect("builtin system is valid");
    let config = IntegratorConfig::default();
    // q̈ = −q − γq̇ from q = 1, q̇ = 0
    let (a, t) = (OSCILLATOR_GAMMA / 2.0, config.t_end);
    let w = (1.0 - a * a).sqrt();
    let q_end = (-a * t).exp() * ((w * t).cos() + a / w * (w * t).sin());
    let mut checks = Check::defaults(ConstraintKind::None);
    checks.push(Check::FinalValue {
        variable: "q".into(),
        expected: q_end,
        rel_tol: 1e-10,
    });
    Scenario {
        name: "damped_oscillator".into(),
        system,
        initial: PhaseState::new(0.0, vec![1.0], vec![0.0], 0.0).with_multipliers(Vec::new(), 0.0),
        config,
        checks,
    }
}

fn rolling_disk(kind: ConstraintKind) -> Scenario {
    let system = SystemSpec::parse(
        &["x", "y", "theta", "phi"],
        DISK_LAGRANGIAN,
        params(&[("delta", DISK_DELTA)]),
        &DISK_CONSTRAINTS,
        kind,
    )
    .expect("builtin system is valid");
    let config = IntegratorConfig::default();
    let mut checks = Check::defaults(kind);
    let name = match kind {
        ConstraintKind::Vakonomic => "rolling_disk_vakonomic",
        _ => {
            // θ̈ = δθ̇ and λ₁ = θ̇φ̇ sin φ, λ₂ = −θ̇φ̇ cos φ on the constraint set
            checks.push(Check::FinalValue {
                variable: "vtheta".into(),
                expected: (DISK_DELTA * config.t_end).exp(),
                rel_tol: 1e-8,
            });
            checks.push(Check::MultiplierOracle {
                constraint: "phi1".into(),
                oracle: oracle("vtheta*vphi*sin(phi)", &system),
                tol: 1e-9,
            });
            checks.push(Check::MultiplierOracle {
                constraint: "phi2".into(),
                oracle: oracle("-vtheta*vphi*cos(phi)", &system),
                tol: 1e-9,
            });
            "rolling_disk"
        }
    };
    Scenario {
        name: name.into(),
        system,
        initial: PhaseState::new(0.0, vec![0.0; 4], vec![1.0, 0.0, 1.0, 1.0], 0.0)
            .with_multipliers(vec![0.0; 2], 0.0),
        config,
        checks,
    }
}

fn chaplygin_sleigh() -> Scenario {
    let system = SystemSpec::parse(
        &["x", "y", "theta"],
        SLEIGH_LAGRANGIAN,
        params(&[("alpha", 0.1), ("beta", 0.1), ("gamma", 0.3)]),
        &[("phi1", "vx*sin(theta) - vy*cos(theta)")],
        ConstraintKind::Nonholonomic,
    )
    .expect("builtin system is valid");
    Scenario {
        name: "chaplygin_sleigh".into(),
        system,
        // moving along the blade while turning
        initial: PhaseState::new(0.0, vec![0.0; 3], vec![1.0, 0.0, 1.0], 0.0)
            .with_multipliers(vec![0.0], 0.0),
        config: IntegratorConfig::default(),
        checks: Check::defaults(ConstraintKind::Nonholonomic),
    }
}

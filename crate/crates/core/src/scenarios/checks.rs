use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scenario;
use crate::integrate::{initial_state_for, integrate, IntegrateError, IntegratorConfig, Method, Trajectory};
use crate::mechanics::{
    build_cache, herglotz_field, nonholonomic_field, validate_cache, vakonomic_field, ConstraintKind, FieldEval,
    PartialCache, PhaseState, SystemSpec,
};
use crate::symexpr::{eval, Binding, Expr};

/// A named invariant with its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    /// Every cached partial against a centered difference at the initial state.
    CacheValidation { tol: f64 },
    ContactPairing { tol: f64 },
    /// `|actual − predicted| ≤ tol·(1 + |E|)` at every state.
    EnergyLaw { tol: f64 },
    ConstraintDrift { tol: f64 },
    Tangency { tol: f64 },
    /// Herglotz, nonholonomic and vakonomic fields of the unconstrained
    /// system agree at random states near the initial state.
    EquivalenceField { states: usize, tol: f64, seed: u64 },
    /// The three unconstrained trajectories agree sample by sample.
    EquivalenceTrajectory { tol: f64 },
    /// `1 + μ(t) = (1 + μ₀) exp(∂L/∂s · t)`.
    MuClosedForm { tol: f64 },
    /// Richardson ratio of rk4 runs at `dt`, `dt/2` and `dt/4` lies in
    /// `[min_ratio, max_ratio]`.
    OrderConvergence { dt: f64, min_ratio: f64, max_ratio: f64 },
    /// Relative error of one state variable at the final time.
    FinalValue { variable: String, expected: f64, rel_tol: f64 },
    /// `|λ_α − oracle|` along the trajectory.
    MultiplierOracle { constraint: String, oracle: Expr, tol: f64 },
}

impl Check {
    /// The invariant suite every scenario of `kind` is held to.
    pub fn defaults(kind: ConstraintKind) -> Vec<Check> {
        let mut checks = vec![
            Check::CacheValidation { tol: 1e-5 },
            Check::ContactPairing { tol: 1e-12 },
            Check::EnergyLaw { tol: 1e-9 },
            Check::ConstraintDrift { tol: 1e-7 },
            Check::Tangency { tol: 1e-10 },
            Check::EquivalenceField {
                states: 100,
                tol: 1e-12,
                seed: 0x5eed,
            },
            Check::EquivalenceTrajectory { tol: 1e-10 },
            Check::OrderConvergence {
                dt: 0.04,
                min_ratio: 12.0,
                max_ratio: 20.0,
            },
        ];
        if kind == ConstraintKind::Vakonomic {
            checks.push(Check::MuClosedForm { tol: 1e-8 });
        }
        checks
    }

    pub fn name(&self) -> String {
        match self {
            Check::CacheValidation { .. } => "cache_validation".into(),
            Check::ContactPairing { .. } => "contact_pairing".into(),
            Check::EnergyLaw { .. } => "energy_law".into(),
            Check::ConstraintDrift { .. } => "constraint_drift".into(),
            Check::Tangency { .. } => "tangency".into(),
            Check::EquivalenceField { .. } => "equivalence_field".into(),
            Check::EquivalenceTrajectory { .. } => "equivalence_trajectory".into(),
            Check::MuClosedForm { .. } => "mu_closed_form".into(),
            Check::OrderConvergence { .. } => "order_convergence".into(),
            Check::FinalValue { variable, .. } => format!("final_value({variable})"),
            Check::MultiplierOracle { constraint, .. } => format!("multiplier({constraint})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "SKIP",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub verdict: Verdict,
    pub measured: f64,
    /// Human-readable acceptance bound, such as `<= 1e-12`.
    pub bound: String,
    pub detail: String,
}

impl CheckOutcome {
    fn at_most(name: String, measured: f64, tol: f64) -> Self {
        CheckOutcome {
            name,
            verdict: if measured <= tol { Verdict::Pass } else { Verdict::Fail },
            measured,
            bound: format!("<= {tol:e}"),
            detail: String::new(),
        }
    }

    fn skipped(name: String, why: &str) -> Self {
        CheckOutcome {
            name,
            verdict: Verdict::Skipped,
            measured: f64::NAN,
            bound: String::new(),
            detail: why.to_string(),
        }
    }

    fn failed(name: String, why: String) -> Self {
        CheckOutcome {
            name,
            verdict: Verdict::Fail,
            measured: f64::NAN,
            bound: String::new(),
            detail: why,
        }
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = detail;
        self
    }
}

/// Shared inputs of a check run: the reference trajectory is integrated
/// once, recording every step.
struct Context<'a> {
    sc: &'a Scenario,
    cache: PartialCache,
    initial: PhaseState,
    trajectory: Trajectory,
}

/// Integrates the scenario under its own kind and evaluates every expected
/// check. Physics failures of the reference run are returned as errors;
/// failures inside individual checks become failing outcomes.
pub fn run_checks(sc: &Scenario) -> Result<Vec<CheckOutcome>, IntegrateError> {
    let cache = build_cache(&sc.system)?;
    let kind = sc.system.kind();
    let initial = initial_state_for(kind, sc.system.constraints().len(), &sc.initial)?;
    let cfg = IntegratorConfig {
        record_every: 1,
        ..sc.config.clone()
    };
    let trajectory = integrate(&sc.system, &cache, kind, &initial, &cfg)?;
    let ctx = Context {
        sc,
        cache,
        initial,
        trajectory,
    };
    Ok(sc.checks.iter().map(|c| evaluate(&ctx, c)).collect())
}

/// Evaluates a single check against the scenario.
pub fn run_check(sc: &Scenario, check: &Check) -> Result<CheckOutcome, IntegrateError> {
    let single = Scenario {
        checks: vec![check.clone()],
        ..sc.clone()
    };
    Ok(run_checks(&single)?.remove(0))
}

fn evaluate(ctx: &Context<'_>, check: &Check) -> CheckOutcome {
    let name = check.name();
    let sys = &ctx.sc.system;
    let summary = &ctx.trajectory.summary;
    let constrained = sys.kind() != ConstraintKind::None && !sys.constraints().is_empty();
    match check {
        Check::CacheValidation { tol } => match validate_cache(sys, &ctx.cache, &ctx.initial, 1e-6) {
            Ok(r) => CheckOutcome::at_most(name, r.max_error, *tol)
                .with_detail(format!("{} partials, worst {}", r.checked, r.worst)),
            Err(e) => CheckOutcome::failed(name, e.to_string()),
        },
        Check::ContactPairing { tol } => CheckOutcome::at_most(name, summary.max_pairing_residual, *tol),
        Check::EnergyLaw { tol } => {
            if ctx.trajectory.samples[0].field.diagnostics.energy_rate_predicted.is_none() {
                return CheckOutcome::skipped(name, "no closed energy law for vakonomic constraints");
            }
            CheckOutcome::at_most(name, summary.max_energy_law_residual, *tol)
        }
        Check::ConstraintDrift { tol } => {
            if !constrained {
                return CheckOutcome::skipped(name, "no enforced constraints");
            }
            CheckOutcome::at_most(name, summary.max_constraint_drift, *tol)
        }
        Check::Tangency { tol } => {
            if !constrained {
                return CheckOutcome::skipped(name, "no enforced constraints");
            }
            CheckOutcome::at_most(name, summary.max_tangency_residual, *tol)
        }
        Check::EquivalenceField { states, tol, seed } => match field_equivalence(ctx, *states, *seed) {
            Ok(dev) => CheckOutcome::at_most(name, dev, *tol).with_detail(format!("{states} random states")),
            Err(e) => CheckOutcome::failed(name, e),
        },
        Check::EquivalenceTrajectory { tol } => match trajectory_equivalence(ctx) {
            Ok(dev) => CheckOutcome::at_most(name, dev, *tol),
            Err(e) => CheckOutcome::failed(name, e.to_string()),
        },
        Check::MuClosedForm { tol } => mu_closed_form(ctx, name, *tol),
        Check::OrderConvergence {
            dt,
            min_ratio,
            max_ratio,
        } => match richardson_ratio(ctx, *dt) {
            Ok(ratio) => CheckOutcome {
                name,
                verdict: if (*min_ratio..=*max_ratio).contains(&ratio) {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                },
                measured: ratio,
                bound: format!("in [{min_ratio}, {max_ratio}]"),
                detail: format!("rk4 at dt = {dt}, {}, {}", dt / 2.0, dt / 4.0),
            },
            Err(e) => CheckOutcome::failed(name, e.to_string()),
        },
        Check::FinalValue {
            variable,
            expected,
            rel_tol,
        } => {
            let last = &ctx.trajectory.last().state;
            match state_binding(sys, last).get(variable) {
                Ok(value) => {
                    let err = (value - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
                    CheckOutcome::at_most(name, err, *rel_tol)
                        .with_detail(format!("{variable}({}) = {value:.16e}, expected {expected:.16e}", last.t))
                }
                Err(e) => CheckOutcome::failed(name, e.to_string()),
            }
        }
        Check::MultiplierOracle { constraint, oracle, tol } => {
            if sys.kind() != ConstraintKind::Nonholonomic {
                return CheckOutcome::skipped(name, "reaction multipliers only exist for nonholonomic runs");
            }
            let Some(index) = sys.constraints().iter().position(|c| &c.name == constraint) else {
                return CheckOutcome::failed(name, format!("no constraint named `{constraint}`"));
            };
            let mut worst = 0.0f64;
            for s in &ctx.trajectory.samples {
                match eval(oracle, &state_binding(sys, &s.state)) {
                    Ok(want) => worst = worst.max((s.field.multipliers[index] - want).abs()),
                    Err(e) => return CheckOutcome::failed(name, e.to_string()),
                }
            }
            CheckOutcome::at_most(name, worst, *tol).with_detail(format!("oracle {oracle}"))
        }
    }
}

/// Names of the state variables and parameters bound to their values.
pub(crate) fn state_binding(sys: &SystemSpec, st: &PhaseState) -> Binding {
    let mut b = sys.params().clone();
    for (name, x) in sys.coordinates().iter().zip(&st.q) {
        b.set(name.clone(), *x);
    }
    for (name, x) in sys.velocities().iter().zip(&st.v) {
        b.set(name.clone(), *x);
    }
    b.set("s", st.s);
    if let Some(mu) = st.mu {
        b.set("mu", mu);
    }
    b
}

fn deviation(a: &FieldEval, b: &FieldEval) -> f64 {
    a.vdot
        .iter()
        .zip(&b.vdot)
        .map(|(x, y)| (x - y).abs())
        .chain([(a.sdot - b.sdot).abs(), (a.vs_dot - b.vs_dot).abs()])
        .fold(0.0, f64::max)
}

fn field_equivalence(ctx: &Context<'_>, states: usize, seed: u64) -> Result<f64, String> {
    let sys = ctx.sc.system.clone().without_constraints();
    let cache = build_cache(&sys).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = &ctx.initial;
    let mut worst = 0.0f64;
    let mut done = 0;
    let mut attempts = 0;
    while done < states {
        attempts += 1;
        if attempts > 10 * states {
            return Err(format!("only {done} of {states} random states could be evaluated"));
        }
        let mut jitter = |x: &f64| x + rng.gen_range(-1.0..1.0);
        let st = PhaseState::new(
            base.t,
            base.q.iter().map(&mut jitter).collect(),
            base.v.iter().map(&mut jitter).collect(),
            jitter(&base.s),
        );
        let Ok(h) = herglotz_field(&sys, &cache, &st) else {
            continue;
        };
        let nh = nonholonomic_field(&sys, &cache, &st).map_err(|e| e.to_string())?;
        let vk = vakonomic_field(&sys, &cache, &st.clone().with_multipliers(Vec::new(), 0.0))
            .map_err(|e| e.to_string())?;
        worst = worst.max(deviation(&h, &nh)).max(deviation(&h, &vk));
        done += 1;
    }
    Ok(worst)
}

fn trajectory_equivalence(ctx: &Context<'_>) -> Result<f64, IntegrateError> {
    let sys = ctx.sc.system.clone().without_constraints();
    let cache = build_cache(&sys)?;
    let cfg = IntegratorConfig {
        record_every: 1,
        ..ctx.sc.config.clone()
    };
    let base = PhaseState {
        nu: Vec::new(),
        ..ctx.initial.clone()
    };
    let runs = ConstraintKind::ALL
        .into_iter()
        .map(|kind| integrate(&sys, &cache, kind, &base, &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut worst = 0.0f64;
    for other in &runs[1..] {
        for (a, b) in runs[0].samples.iter().zip(&other.samples) {
            let (a, b) = (&a.state, &b.state);
            let d = a
                .q
                .iter()
                .zip(&b.q)
                .chain(a.v.iter().zip(&b.v))
                .map(|(x, y)| (x - y).abs())
                .fold((a.s - b.s).abs(), f64::max);
            worst = worst.max(d);
        }
        if other.samples.len() != runs[0].samples.len() {
            worst = f64::INFINITY;
        }
    }
    Ok(worst)
}

fn mu_closed_form(ctx: &Context<'_>, name: String, tol: f64) -> CheckOutcome {
    let sys = &ctx.sc.system;
    if sys.kind() != ConstraintKind::Vakonomic {
        return CheckOutcome::skipped(name, "only vakonomic runs carry mu");
    }
    let params: std::collections::HashSet<&str> = sys.params().iter().map(|(k, _)| k).collect();
    let ls = ctx.cache.lagrangian.ds.source();
    if !ls.free_vars().iter().all(|v| params.contains(v.as_str())) {
        return CheckOutcome::skipped(name, "dL/ds depends on the state");
    }
    if ctx.cache.constraints.iter().any(|c| c.ds.as_const() != Some(0.0)) {
        return CheckOutcome::skipped(name, "a constraint depends on s");
    }
    let rate = match eval(ls, sys.params()) {
        Ok(r) => r,
        Err(e) => return CheckOutcome::failed(name, e.to_string()),
    };
    let t0 = ctx.initial.t;
    let a = 1.0 + ctx.initial.mu.unwrap_or(0.0);
    let worst = ctx
        .trajectory
        .samples
        .iter()
        .map(|s| {
            let mu = s.state.mu.unwrap_or(f64::NAN);
            ((1.0 + mu) - a * (rate * (s.state.t - t0)).exp()).abs()
        })
        .fold(0.0, f64::max);
    CheckOutcome::at_most(name, worst, tol).with_detail(format!("1 + mu = {a} exp({rate} t)"))
}

fn richardson_ratio(ctx: &Context<'_>, dt: f64) -> Result<f64, IntegrateError> {
    let sys = &ctx.sc.system;
    let ends = [dt, dt / 2.0, dt / 4.0]
        .iter()
        .map(|&h| {
            let cfg = IntegratorConfig {
                method: Method::Rk4,
                dt: h,
                record_every: usize::MAX,
                ..ctx.sc.config.clone()
            };
            let tr = integrate(sys, &ctx.cache, sys.kind(), &ctx.initial, &cfg)?;
            let st = &tr.last().state;
            Ok(st.q.iter().chain(&st.v).copied().chain([st.s]).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>, IntegrateError>>()?;
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(diff(&ends[0], &ends[1]) / diff(&ends[1], &ends[2]))
}

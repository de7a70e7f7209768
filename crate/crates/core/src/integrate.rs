//! Time stepping for the mechanics fields.
//!
//! The state vector is `[q, v, s, ν, μ]` (the last two only for vakonomic
//! runs) and its derivative is `[v, B, L, ν̇, μ̇]`. Constraint drift is
//! measured at every accepted step and reported in the trajectory summary;
//! nothing is corrected unless [`IntegratorConfig::project`] is set.

use crate::densela::{solve, Matrix};
use crate::mechanics::{evaluate, ConstraintKind, FieldEval, MechanicsError, PartialCache, PhaseState, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Rk4,
    /// Dormand–Prince embedded 4(5) pair with error control.
    Rk45,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::Rk45 => "rk45",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "rk45" => Ok(Method::Rk45),
            _ => Err(format!("unknown method `{s}` (expected rk4 or rk45)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for rk4, initial step for rk45.
    pub dt: f64,
    pub t_end: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Record a sample every this many accepted steps. The final state is
    /// always recorded.
    pub record_every: usize,
    /// Project velocities back onto the constraint set after every step.
    pub project: bool,
    /// Largest constraint residual accepted at the initial state.
    pub admissibility_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            dt: 1e-3,
            t_end: 1.0,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            dt_min: 1e-12,
            dt_max: 0.1,
            record_every: 10,
            project: false,
            admissibility_tol: 1e-9,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self, t_start: f64) -> Result<(), IntegrateError> {
        let bad = |m: String| Err(IntegrateError::Config(m));
        let positive = [
            ("dt", self.dt),
            ("abs_tol", self.abs_tol),
            ("rel_tol", self.rel_tol),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("admissibility_tol", self.admissibility_tol),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if !self.t_end.is_finite() || self.t_end < t_start {
            return bad(format!("t_end = {} precedes the start time {t_start}", self.t_end));
        }
        if self.dt_min > self.dt_max {
            return bad(format!("dt_min = {} exceeds dt_max = {}", self.dt_min, self.dt_max));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegrateError {
    #[error("invalid integrator configuration: {0}")]
    Config(String),
    #[error("initial state is not admissible: constraint `{name}` has residual {residual:e} > {tol:e}")]
    Inadmissible { name: String, residual: f64, tol: f64 },
    #[error("step size fell below dt_min at t = {t} (dt = {dt:e}, error norm {error_norm:e})")]
    StepFailure { t: f64, dt: f64, error_norm: f64 },
    #[error(transparent)]
    Physics(#[from] MechanicsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: PhaseState,
    pub field: FieldEval,
}

/// Worst values seen over every accepted state of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectorySummary {
    pub max_constraint_drift: f64,
    pub max_tangency_residual: f64,
    /// Largest `|actual − predicted| / (1 + |E|)` where a prediction exists.
    pub max_energy_law_residual: f64,
    pub max_pairing_residual: f64,
    pub max_system_residual: f64,
    pub steps: usize,
    pub rejected_steps: usize,
}

impl TrajectorySummary {
    fn observe(&mut self, fe: &FieldEval) {
        let d = &fe.diagnostics;
        self.max_constraint_drift = self.max_constraint_drift.max(d.max_constraint_residual());
        self.max_tangency_residual = self.max_tangency_residual.max(d.max_tangency_residual());
        if let Some(m) = d.energy_rate_mismatch() {
            self.max_energy_law_residual = self.max_energy_law_residual.max(m / (1.0 + d.energy.abs()));
        }
        self.max_pairing_residual = self.max_pairing_residual.max(d.pairing_residual.abs());
        self.max_system_residual = self.max_system_residual.max(fe.system_residual);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: ConstraintKind,
    pub samples: Vec<Sample>,
    pub summary: TrajectorySummary,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories hold at least one sample")
    }
}

fn pack(st: &PhaseState) -> Vec<f64> {
    let mut y = Vec::with_capacity(2 * st.q.len() + 2 + st.nu.len());
    y.extend_from_slice(&st.q);
    y.extend_from_slice(&st.v);
    y.push(st.s);
    y.extend_from_slice(&st.nu);
    if let Some(mu) = st.mu {
        y.push(mu);
    }
    y
}

fn unpack(template: &PhaseState, t: f64, y: &[f64]) -> PhaseState {
    let n = template.q.len();
    let k = template.nu.len();
    PhaseState {
        t,
        q: y[..n].to_vec(),
        v: y[n..2 * n].to_vec(),
        s: y[2 * n],
        nu: y[2 * n + 1..2 * n + 1 + k].to_vec(),
        mu: template.mu.map(|_| y[2 * n + 1 + k]),
    }
}

fn derivative(st: &PhaseState, fe: &FieldEval) -> Vec<f64> {
    let mut d = Vec::with_capacity(2 * st.q.len() + 2 + st.nu.len());
    d.extend_from_slice(&fe.qdot);
    d.extend_from_slice(&fe.vdot);
    d.push(fe.sdot);
    if !st.nu.is_empty() {
        d.extend_from_slice(&fe.nu_dot);
    }
    if st.mu.is_some() {
        d.push(fe.mu_dot.unwrap_or(0.0));
    }
    d
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    y.iter()
        .enumerate()
        .map(|(i, yi)| yi + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
        .collect()
}

/// One classical Runge–Kutta step of size `dt` from `st`.
///
/// ```
/// use herglotz::integrate::step_rk4;
/// use herglotz::mechanics::{build_cache, herglotz_field, ConstraintKind, PhaseState, SystemSpec};
/// use herglotz::symexpr::Binding;
///
/// let sys = SystemSpec::parse(&["q"], "0.5*vq^2", Binding::new(), &[], ConstraintKind::None).unwrap();
/// let cache = build_cache(&sys).unwrap();
/// let field = |st: &PhaseState| herglotz_field(&sys, &cache, st);
/// let next = step_rk4(&field, &PhaseState::new(0.0, vec![0.0], vec![1.0], 0.0), 0.5).unwrap();
/// assert_eq!((next.q[0], next.v[0], next.s), (0.5, 1.0, 0.25));
/// ```
pub fn step_rk4<F>(field: &F, st: &PhaseState, dt: f64) -> Result<PhaseState, MechanicsError>
where
    F: Fn(&PhaseState) -> Result<FieldEval, MechanicsError>,
{
    let fe = field(st)?;
    rk4_from(field, st, &fe, dt)
}

fn rk4_from<F>(field: &F, st: &PhaseState, fe0: &FieldEval, dt: f64) -> Result<PhaseState, MechanicsError>
where
    F: Fn(&PhaseState) -> Result<FieldEval, MechanicsError>,
{
    let y = pack(st);
    let k1 = derivative(st, fe0);
    let s2 = unpack(st, st.t + 0.5 * dt, &axpy(&y, 0.5 * dt, &[(1.0, &k1)]));
    let k2 = derivative(st, &field(&s2)?);
    let s3 = unpack(st, st.t + 0.5 * dt, &axpy(&y, 0.5 * dt, &[(1.0, &k2)]));
    let k3 = derivative(st, &field(&s3)?);
    let s4 = unpack(st, st.t + dt, &axpy(&y, dt, &[(1.0, &k3)]));
    let k4 = derivative(st, &field(&s4)?);
    let y1 = axpy(
        &y,
        dt / 6.0,
        &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)],
    );
    Ok(unpack(st, st.t + dt, &y1))
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Rk45Step {
    state: PhaseState,
    field: FieldEval,
    error_norm: f64,
}

fn rk45_attempt<F>(field: &F, st: &PhaseState, fe0: &FieldEval, dt: f64, cfg: &IntegratorConfig) -> Result<Rk45Step, MechanicsError>
where
    F: Fn(&PhaseState) -> Result<FieldEval, MechanicsError>,
{
    let y = pack(st);
    let mut ks: Vec<Vec<f64>> = vec![derivative(st, fe0)];
    for stage in 1..6 {
        let terms: Vec<(f64, &[f64])> = (0..stage).map(|j| (A[stage][j], ks[j].as_slice())).collect();
        let s = unpack(st, st.t + C[stage] * dt, &axpy(&y, dt, &terms));
        ks.push(derivative(st, &field(&s)?));
    }
    let terms: Vec<(f64, &[f64])> = (0..6).map(|j| (B5[j], ks[j].as_slice())).collect();
    let y5 = axpy(&y, dt, &terms);
    let state = unpack(st, st.t + dt, &y5);
    let fe7 = field(&state)?;
    ks.push(derivative(st, &fe7));
    let mut norm = 0.0f64;
    for i in 0..y.len() {
        let err = dt * (0..7).map(|j| (B5[j] - B4[j]) * ks[j][i]).sum::<f64>();
        let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y5[i].abs());
        norm = norm.max(err.abs() / scale);
    }
    Ok(Rk45Step {
        state,
        field: fe7,
        error_norm: norm,
    })
}

/// `v ← v − Jᵀ(JJᵀ)⁻¹φ`, repeated while it still reduces the residual.
fn project_velocities(cache: &PartialCache, st: &mut PhaseState) -> Result<(), MechanicsError> {
    for _ in 0..3 {
        let (phi, jac) = cache.constraints_at(st)?;
        let h = phi.len();
        if h == 0 || phi.iter().all(|r| r.abs() <= 1e-15) {
            return Ok(());
        }
        let mut gram = Matrix::zeros(h, h);
        for a in 0..h {
            for b in 0..h {
                gram[(a, b)] = jac[a].iter().zip(&jac[b]).map(|(x, y)| x * y).sum();
            }
        }
        let w = solve(&gram, &phi).map_err(|_| MechanicsError::Regularity {
            what: "constraint Gram matrix",
            state: Box::new(st.clone()),
        })?;
        for (i, vi) in st.v.iter_mut().enumerate() {
            *vi -= (0..h).map(|a| jac[a][i] * w[a]).sum::<f64>();
        }
    }
    Ok(())
}

/// Normalizes the multiplier part of `st0` for `kind`: vakonomic runs carry
/// `ν` (one per constraint) and `μ` (default 0), other kinds carry neither.
pub fn initial_state_for(kind: ConstraintKind, constraints: usize, st0: &PhaseState) -> Result<PhaseState, IntegrateError> {
    let mut st = st0.clone();
    if kind == ConstraintKind::Vakonomic {
        if st.nu.is_empty() {
            st.nu = vec![0.0; constraints];
        }
        if st.nu.len() != constraints {
            return Err(IntegrateError::Config(format!(
                "initial state has {} multipliers for {constraints} constraints",
                st.nu.len()
            )));
        }
        st.mu.get_or_insert(0.0);
    } else {
        st.nu.clear();
        st.mu = None;
    }
    Ok(st)
}

/// Integrates `st0` under the field selected by `kind` up to `cfg.t_end`.
pub fn integrate(
    sys: &SystemSpec,
    cache: &PartialCache,
    kind: ConstraintKind,
    st0: &PhaseState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    cfg.validate(st0.t)?;
    let st0 = initial_state_for(kind, sys.constraints().len(), st0)?;
    if kind != ConstraintKind::None {
        let (phi, _) = cache.constraints_at(&st0)?;
        for (c, r) in sys.constraints().iter().zip(phi) {
            if r.is_nan() || r.abs() > cfg.admissibility_tol {
                return Err(IntegrateError::Inadmissible {
                    name: c.name.clone(),
                    residual: r,
                    tol: cfg.admissibility_tol,
                });
            }
        }
    }
    let field = |st: &PhaseState| evaluate(sys, cache, kind, st);

    let mut summary = TrajectorySummary::default();
    let mut st = st0;
    let mut fe = field(&st)?;
    summary.observe(&fe);
    let mut samples = vec![Sample {
        state: st.clone(),
        field: fe.clone(),
    }];
    let t0 = st.t;
    let span = cfg.t_end - t0;
    let mut since_record = 0;

    let mut accept = |st: &PhaseState, fe: &FieldEval, summary: &mut TrajectorySummary, last: bool, samples: &mut Vec<Sample>| {
        summary.steps += 1;
        summary.observe(fe);
        since_record += 1;
        if since_record == cfg.record_every || last {
            since_record = 0;
            samples.push(Sample {
                state: st.clone(),
                field: fe.clone(),
            });
        }
    };

    match cfg.method {
        Method::Rk4 => {
            let ratio = span / cfg.dt;
            let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
                ratio.round() as usize
            } else {
                ratio.ceil() as usize
            };
            for k in 1..=steps {
                let t_next = if k == steps { cfg.t_end } else { t0 + k as f64 * cfg.dt };
                let mut next = rk4_from(&field, &st, &fe, t_next - st.t)?;
                next.t = t_next;
                if cfg.project {
                    project_velocities(cache, &mut next)?;
                }
                st = next;
                fe = field(&st)?;
                accept(&st, &fe, &mut summary, k == steps, &mut samples);
            }
        }
        Method::Rk45 => {
            let mut dt = cfg.dt.min(cfg.dt_max);
            while st.t < cfg.t_end {
                let remaining = cfg.t_end - st.t;
                let last = dt >= remaining;
                let h = if last { remaining } else { dt };
                let attempt = rk45_attempt(&field, &st, &fe, h, cfg)?;
                let err = attempt.error_norm;
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if err <= 1.0 {
                    let mut next = attempt.state;
                    if last {
                        next.t = cfg.t_end;
                    }
                    let next_fe = if cfg.project {
                        project_velocities(cache, &mut next)?;
                        field(&next)?
                    } else if last {
                        field(&next)?
                    } else {
                        attempt.field
                    };
                    st = next;
                    fe = next_fe;
                    accept(&st, &fe, &mut summary, st.t >= cfg.t_end, &mut samples);
                    dt = (h * factor).clamp(cfg.dt_min, cfg.dt_max);
                } else {
                    summary.rejected_steps += 1;
                    let smaller = h * factor;
                    if smaller < cfg.dt_min {
                        return Err(IntegrateError::StepFailure {
                            t: st.t,
                            dt: smaller,
                            error_norm: err,
                        });
                    }
                    dt = smaller;
                }
            }
        }
    }
    Ok(Trajectory {
        kind,
        samples,
        summary,
    })
}

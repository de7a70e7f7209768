//! Command-line front end.
//!
//! Commands: `run`, `check`, `compare` and `list`. Exit codes: 0 success,
//! 1 usage or I/O error, 2 physics failure, 3 failed check.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use crate::integrate::{integrate, IntegrateError, IntegratorConfig, Method, Trajectory};
use crate::mechanics::{build_cache, ConstraintKind, MechanicsError, PhaseState, SystemSpec};
use crate::scenarios::{self, run_checks, Check, CheckOutcome, Scenario, ScenarioError, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PHYSICS: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "herglotz", version, about = "Simulate action-dependent Lagrangian systems with constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a scenario, write a CSV and print a report.
    Run(RunArgs),
    /// Run the scenario's invariant suite.
    Check(CheckArgs),
    /// Integrate under the nonholonomic and vakonomic fields and tabulate the divergence.
    Compare(CompareArgs),
    /// Print the builtin scenario names.
    List,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Scenario file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Builtin scenario name (see `list`).
    #[arg(long)]
    pub builtin: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub method: Option<Method>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long)]
    pub kind: Option<ConstraintKind>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub source: Source,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: Source,
    /// Output prefix; writes `<prefix>_nonholonomic.csv`, `<prefix>_vakonomic.csv`
    /// and `<prefix>_divergence.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("check `{name}` failed: measured {measured:e} {bound} {detail}")]
    CheckFailed {
        name: String,
        measured: f64,
        bound: String,
        detail: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Scenario(ScenarioError::System(e)) => physics_code(e),
            CliError::Scenario(_) => EXIT_USAGE,
            CliError::Integrate(IntegrateError::Config(_)) => EXIT_USAGE,
            CliError::Integrate(IntegrateError::Physics(e)) => physics_code(e),
            CliError::Integrate(_) => EXIT_PHYSICS,
            CliError::CheckFailed { .. } => EXIT_CHECK,
        }
    }
}

fn physics_code(e: &MechanicsError) -> i32 {
    if e.is_physics() {
        EXIT_PHYSICS
    } else {
        EXIT_USAGE
    }
}

/// Summary printed by `run`.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub kind: ConstraintKind,
    pub method: Method,
    pub steps: usize,
    pub rejected_steps: usize,
    pub wall_time: Duration,
    pub final_state: PhaseState,
    pub max_constraint_drift: f64,
    pub max_energy_law_residual: f64,
    pub checks: Vec<CheckOutcome>,
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario                 {}", self.name)?;
        writeln!(f, "kind                     {}", self.kind)?;
        writeln!(f, "method                   {}", self.method.as_str())?;
        writeln!(f, "steps                    {} ({} rejected)", self.steps, self.rejected_steps)?;
        writeln!(f, "wall time                {:.3} ms", self.wall_time.as_secs_f64() * 1e3)?;
        writeln!(f, "final state              {}", self.final_state)?;
        writeln!(f, "max constraint drift     {:e}", self.max_constraint_drift)?;
        writeln!(f, "max energy-law residual  {:e}", self.max_energy_law_residual)?;
        writeln!(f, "checks")?;
        for c in &self.checks {
            writeln!(f, "  {}", OutcomeLine(c))?;
        }
        Ok(())
    }
}

struct OutcomeLine<'a>(&'a CheckOutcome);

impl fmt::Display for OutcomeLine<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.0;
        write!(f, "{} {:<24}", c.verdict.as_str(), c.name)?;
        if c.measured.is_finite() {
            write!(f, " {:<12.3e} {}", c.measured, c.bound)?;
        }
        if !c.detail.is_empty() {
            write!(f, "  ({})", c.detail)?;
        }
        Ok(())
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Run(args) => cmd_run(&args, out),
        Command::Check(args) => cmd_check(&args, out),
        Command::Compare(args) => cmd_compare(&args, out),
        Command::List => {
            for name in scenarios::BUILTIN_NAMES {
                emit(out, format_args!("{name}\n"))?;
            }
            Ok(())
        }
    }
}

fn emit(out: &mut dyn Write, args: fmt::Arguments<'_>) -> Result<(), CliError> {
    out.write_fmt(args).map_err(|source| CliError::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn load_source(source: &Source) -> Result<Scenario, CliError> {
    match (&source.scenario, &source.builtin) {
        (Some(path), None) => Ok(scenarios::load(path)?),
        (None, Some(name)) => Ok(scenarios::builtin(name)?),
        _ => Err(CliError::Usage("give exactly one of --scenario or --builtin".into())),
    }
}

/// Applies command-line overrides. Expected checks that were computed for
/// the original horizon or kind are dropped.
pub fn apply_overrides(mut sc: Scenario, ov: &Overrides, kind: Option<ConstraintKind>) -> Result<Scenario, CliError> {
    if let Some(t_end) = ov.t_end {
        if t_end != sc.config.t_end {
            sc.checks.retain(|c| !matches!(c, Check::FinalValue { .. }));
        }
        sc.config.t_end = t_end;
    }
    if let Some(dt) = ov.dt {
        sc.config.dt = dt;
    }
    if let Some(method) = ov.method {
        sc.config.method = method;
    }
    if let Some(kind) = kind {
        if kind != sc.system.kind() {
            sc.system = sc.system.with_kind(kind);
            sc.checks = Check::defaults(kind);
        }
    }
    sc.config
        .validate(sc.initial.t)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(sc)
}

fn simulate(sys: &SystemSpec, kind: ConstraintKind, st0: &PhaseState, cfg: &IntegratorConfig) -> Result<Trajectory, CliError> {
    let cache = build_cache(sys).map_err(IntegrateError::from)?;
    Ok(integrate(sys, &cache, kind, st0, cfg)?)
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let sc = apply_overrides(load_source(&args.source)?, &args.overrides, args.kind)?;
    let kind = sc.system.kind();
    let started = Instant::now();
    let trajectory = simulate(&sc.system, kind, &sc.initial, &sc.config)?;
    let wall_time = started.elapsed();
    let checks = run_checks(&sc)?;
    // the CSV is rendered in full before the file is created
    if let Some(path) = &args.out {
        write_file(path, &trajectory_csv(&sc.system, &trajectory))?;
    }
    let report = RunReport {
        name: sc.name.clone(),
        kind,
        method: sc.config.method,
        steps: trajectory.summary.steps,
        rejected_steps: trajectory.summary.rejected_steps,
        wall_time,
        final_state: trajectory.last().state.clone(),
        max_constraint_drift: trajectory.summary.max_constraint_drift,
        max_energy_law_residual: trajectory.summary.max_energy_law_residual,
        checks,
    };
    emit(out, format_args!("{report}"))
}

pub fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let sc = load_source(&args.source)?;
    let outcomes = run_checks(&sc)?;
    emit(out, format_args!("{} ({})\n", sc.name, sc.system.kind()))?;
    for c in &outcomes {
        emit(out, format_args!("  {}\n", OutcomeLine(c)))?;
    }
    match outcomes.into_iter().find(|c| c.verdict == Verdict::Fail) {
        Some(c) => Err(CliError::CheckFailed {
            name: c.name,
            measured: c.measured,
            bound: c.bound,
            detail: c.detail,
        }),
        None => Ok(()),
    }
}

pub fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let sc = apply_overrides(load_source(&args.source)?, &args.overrides, None)?;
    if sc.system.constraints().is_empty() {
        return Err(CliError::Usage(format!(
            "scenario `{}` has no constraints; the comparison is vacuous",
            sc.name
        )));
    }
    let nh_sys = sc.system.clone().with_kind(ConstraintKind::Nonholonomic);
    let vk_sys = sc.system.clone().with_kind(ConstraintKind::Vakonomic);
    let nh = simulate(&nh_sys, ConstraintKind::Nonholonomic, &sc.initial, &sc.config)?;
    let vk = simulate(&vk_sys, ConstraintKind::Vakonomic, &sc.initial, &sc.config)?;
    let times: Vec<f64> = nh.samples.iter().map(|s| s.state.t).collect();
    let matched = vk.samples.len() == times.len() && vk.samples.iter().zip(&times).all(|(s, t)| s.state.t == *t);
    let vk_states = if matched {
        vk.samples.iter().map(|s| s.state.clone()).collect()
    } else {
        resample(&vk_sys, &sc.initial, &sc.config, &times)?
    };
    let divergence = divergence_csv(&nh, &vk_states);
    let files = [
        (suffixed(&args.out, "nonholonomic"), trajectory_csv(&nh_sys, &nh)),
        (suffixed(&args.out, "vakonomic"), trajectory_csv(&vk_sys, &vk)),
        (suffixed(&args.out, "divergence"), divergence),
    ];
    for (path, text) in &files {
        write_file(path, text)?;
    }
    let last = |st: &PhaseState, o: &PhaseState| max_abs_diff(&st.q, &o.q);
    emit(
        out,
        format_args!(
            "{}: nonholonomic {} steps, vakonomic {} steps, final |dq| = {:e}\n",
            sc.name,
            nh.summary.steps,
            vk.summary.steps,
            last(&nh.last().state, vk_states.last().expect("nonempty"))
        ),
    )?;
    for (path, _) in &files {
        emit(out, format_args!("wrote {}\n", path.display()))?;
    }
    Ok(())
}

/// States of the vakonomic run at `times`, integrating segment by segment.
/// Used when adaptive steps give the two runs different output times.
fn resample(sys: &SystemSpec, st0: &PhaseState, cfg: &IntegratorConfig, times: &[f64]) -> Result<Vec<PhaseState>, CliError> {
    let cache = build_cache(sys).map_err(IntegrateError::from)?;
    let mut st = st0.clone();
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        if t > st.t {
            let seg = IntegratorConfig {
                t_end: t,
                dt: cfg.dt.min(t - st.t),
                record_every: usize::MAX,
                admissibility_tol: f64::MAX,
                ..cfg.clone()
            };
            st = integrate(sys, &cache, ConstraintKind::Vakonomic, &st, &seg)?.last().state.clone();
        }
        states.push(st.clone());
    }
    Ok(states)
}

fn suffixed(prefix: &Path, tag: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("_{tag}.csv"));
    PathBuf::from(name)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| {
        let _ = std::fs::remove_file(path);
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    })
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// CSV of a trajectory; one row per recorded sample.
pub fn trajectory_csv(sys: &SystemSpec, traj: &Trajectory) -> String {
    let kind = traj.kind;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(sys.coordinates().iter().cloned());
    header.extend(sys.velocities().iter().cloned());
    header.push("s".into());
    if kind == ConstraintKind::Vakonomic {
        header.push("mu".into());
    }
    let prefix = match kind {
        ConstraintKind::Nonholonomic => Some("lambda"),
        ConstraintKind::Vakonomic => Some("nu"),
        ConstraintKind::None => None,
    };
    if let Some(p) = prefix {
        header.extend(sys.constraints().iter().map(|c| format!("{p}_{}", c.name)));
    }
    header.extend(["E", "energy_rate_actual", "energy_rate_predicted"].map(String::from));
    header.extend(sys.constraints().iter().map(|c| format!("residual_{}", c.name)));

    let mut out = header.join(",");
    out.push('\n');
    for sample in &traj.samples {
        let (st, d) = (&sample.state, &sample.field.diagnostics);
        let mut row: Vec<String> = vec![num(st.t)];
        row.extend(st.q.iter().chain(&st.v).map(|x| num(*x)));
        row.push(num(st.s));
        match kind {
            ConstraintKind::Vakonomic => {
                row.push(num(st.mu.unwrap_or(0.0)));
                row.extend(st.nu.iter().map(|x| num(*x)));
            }
            ConstraintKind::Nonholonomic => row.extend(sample.field.multipliers.iter().map(|x| num(*x))),
            ConstraintKind::None => {}
        }
        row.push(num(d.energy));
        row.push(num(d.energy_rate_actual));
        row.push(d.energy_rate_predicted.map(num).unwrap_or_default());
        row.extend(d.constraint_residuals.iter().map(|x| num(*x)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn divergence_csv(nh: &Trajectory, vk_states: &[PhaseState]) -> String {
    let mut out = String::from("t,dq_inf,dv_inf,ds\n");
    for (a, b) in nh.samples.iter().map(|s| &s.state).zip(vk_states) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            num(a.t),
            num(max_abs_diff(&a.q, &b.q)),
            num(max_abs_diff(&a.v, &b.v)),
            num(b.s - a.s)
        ));
    }
    out
}

use std::path::Path;
use std::process::{Command, Output};

fn herglotz(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_herglotz"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn run_rolling_disk_writes_the_oracle_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = herglotz(&["run", "--builtin", "rolling_disk", "--out", "disk.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("disk.csv")).unwrap();
    let t = column(&csv, "t");
    let vtheta = column(&csv, "vtheta");
    assert_eq!(*t.last().unwrap(), 1.0);
    let expected = 0.1f64.exp();
    assert!((vtheta.last().unwrap() - expected).abs() <= 1e-8 * expected);
    // 17 significant digits everywhere
    let first_row = csv.lines().nth(1).unwrap();
    assert!(first_row.split(',').filter(|c| !c.is_empty()).all(|c| c.split('e').next().unwrap().trim_start_matches('-').len() == 18));
}

#[test]
fn run_damped_oscillator_reports_energy_law() {
    let dir = tempfile::tempdir().unwrap();
    let o = herglotz(&["run", "--builtin", "damped_oscillator"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("max energy-law residual")).unwrap();
    let value: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
    assert!(value <= 1e-9);
    // each expected check appears once
    for name in ["cache_validation", "contact_pairing", "energy_law", "equivalence_field", "order_convergence", "final_value(q)"] {
        assert_eq!(out.lines().filter(|l| l.split_whitespace().nth(1) == Some(name)).count(), 1, "{name}");
    }
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = herglotz(&["run", "--scenario", "missing.txt"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.txt"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run"][..],
        &["run", "--builtin", "rolling_disk", "--kind", "holonomic"],
        &["run", "--builtin", "rolling_disk", "--scenario", "x"],
        &["check", "--builtin", "pendulum"],
        &["frobnicate"],
    ] {
        assert_eq!(herglotz(args, dir.path()).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn list_prints_builtins() {
    let o = herglotz(&["list"], Path::new("."));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o).lines().collect::<Vec<_>>(),
        ["damped_oscillator", "rolling_disk", "chaplygin_sleigh", "rolling_disk_vakonomic"]
    );
}

#[test]
fn check_passes_on_every_builtin() {
    for name in herglotz::scenarios::BUILTIN_NAMES {
        let o = herglotz(&["check", "--builtin", name], Path::new("."));
        assert_eq!(o.status.code(), Some(0), "{name}: {}{}", stdout(&o), stderr(&o));
        assert!(!stdout(&o).contains("FAIL"));
    }
}

#[test]
fn check_failure_exits_three_and_names_the_check() {
    let dir = tempfile::tempdir().unwrap();
    // a coarse step lets the sleigh drift off its constraint
    std::fs::write(
        dir.path().join("coarse.scn"),
        "[system]\ncoordinates = x, y, theta\n\
         lagrangian = 0.5*((alpha*cos(theta) - beta*sin(theta))*vtheta + vy)^2 + 0.5*((beta*cos(theta) + alpha*sin(theta))*vtheta - vx)^2 + vtheta^2 + gamma*s\n\
         [params]\nalpha = 0.1\nbeta = 0.1\ngamma = 0.3\n\
         [constraints]\nkind = nonholonomic\nphi1 = vx*sin(theta) - vy*cos(theta)\n\
         [initial]\nx = 0, y = 0, theta = 0, vx = 1, vy = 0, vtheta = 1, s = 0\n\
         [integration]\ndt = 0.25\nt_end = 10\n",
    )
    .unwrap();
    let o = herglotz(&["check", "--scenario", "coarse.scn"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("constraint_drift"), "{}", stderr(&o));
}

#[test]
fn physics_failure_exits_two_without_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("singular.scn", "lagrangian = vq^3 + q\n[initial]\nq = 0, vq = 0, s = 0\n", "t = 0"),
        ("domain.scn", "lagrangian = 0.5*vq^2 - ln(q)\n[initial]\nq = 1, vq = -1, s = 0\n", "t = 0.6"),
    ];
    for (file, body, when) in cases {
        let text = format!("[system]\ncoordinates = q\n{body}[integration]\nt_end = 2\n");
        std::fs::write(dir.path().join(file), text).unwrap();
        let o = herglotz(&["run", "--scenario", file, "--out", "out.csv"], dir.path());
        assert_eq!(o.status.code(), Some(2), "{file}: {}", stderr(&o));
        assert!(stderr(&o).contains(when), "{}", stderr(&o));
        assert!(stderr(&o).contains("q = ["), "{}", stderr(&o));
        assert!(!dir.path().join("out.csv").exists());
    }
}

#[test]
fn csv_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.csv", "b.csv"] {
        let o = herglotz(&["run", "--builtin", "chaplygin_sleigh", "--out", out, "--method", "rk45"], dir.path());
        assert_eq!(o.status.code(), Some(0));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = herglotz(
        &["run", "--builtin", "rolling_disk", "--kind", "vakonomic", "--t-end", "0.5", "--dt", "0.01", "--out", "v.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("v.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.contains(",mu,nu_phi1,nu_phi2,"));
    assert!(header.ends_with("energy_rate_predicted,residual_phi1,residual_phi2"));
    assert_eq!(*column(&csv, "t").last().unwrap(), 0.5);
    // vakonomic rates have no prediction: the column is empty
    assert!(csv.lines().skip(1).all(|l| l.contains(",,")));
}

#[test]
fn compare_writes_three_tables() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["rolling_disk", "chaplygin_sleigh"] {
        let o = herglotz(&["compare", "--builtin", name, "--out", name], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        for tag in ["nonholonomic", "vakonomic"] {
            assert!(dir.path().join(format!("{name}_{tag}.csv")).exists());
        }
        let div = std::fs::read_to_string(dir.path().join(format!("{name}_divergence.csv"))).unwrap();
        assert_eq!(div.lines().next().unwrap(), "t,dq_inf,dv_inf,ds");
        let first: Vec<f64> = div.lines().nth(1).unwrap().split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(first, [0.0; 4]);
        let rows: Vec<Vec<f64>> = div.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
        assert!(rows.iter().flatten().all(|x| x.is_finite()));
        assert_eq!(rows.last().unwrap()[0], 1.0);
    }
}

#[test]
fn compare_with_adaptive_steps_aligns_times() {
    let dir = tempfile::tempdir().unwrap();
    let o = herglotz(&["compare", "--builtin", "chaplygin_sleigh", "--out", "c", "--method", "rk45"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let nh = std::fs::read_to_string(dir.path().join("c_nonholonomic.csv")).unwrap();
    let div = std::fs::read_to_string(dir.path().join("c_divergence.csv")).unwrap();
    assert_eq!(column(&nh, "t"), column(&div, "t"));
}

#[test]
fn compare_without_constraints_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = herglotz(&["compare", "--builtin", "damped_oscillator", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BEAM: &str = "\
beam.rho1=1
beam.rho2=1
beam.k=1
beam.b=1
beam.ell=1
beam.gamma1=1
beam.gamma2=1
xi.num=1
xi.den=2
mesh.ne=16
";

fn tbeam(dir: &Path, sub: &str, config: &str, out: &str) -> Output {
    let path = dir.join(format!("{out}.cfg"));
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_tbeam"))
        .args([sub, "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.join(out))
        .output()
        .unwrap()
}

fn summary(dir: &Path, out: &str) -> String {
    fs::read_to_string(dir.join(out).join("summary.txt")).unwrap()
}

fn value<'a>(summary: &'a str, key: &str) -> &'a str {
    summary
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no `{key}` in summary"))
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn missing_density_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tbeam(dir.path(), "simulate", &BEAM.replace("beam.rho1=1\n", ""), "a");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beam.rho1"));
}

#[test]
fn unreadable_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tbeam"))
        .args(["spectrum", "--config"])
        .arg(dir.path().join("absent.cfg"))
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn rest_stays_at_rest() {
    let dir = tempfile::tempdir().unwrap();
    let out = tbeam(dir.path(), "simulate", &format!("{BEAM}run.t_final=0.5\nscheme.dt=0.05\n"), "z");
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("z/trajectory.csv")).unwrap();
    assert!(csv.starts_with("# schema=tbeam-trajectory/1\nt,e_total,"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 11);
    for row in rows {
        assert!(row[1..15].iter().all(|x| x.parse::<f64>().unwrap() == 0.0), "{row:?}");
    }
}

#[test]
fn restart_from_snapshot_continues_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let base = format!(
        "{BEAM}scheme.dt=0.01\ninitial.kind=mode\ninitial.psi_amp=0.5\nrun.snapshot_final=true\n"
    );
    assert!(tbeam(dir.path(), "simulate", &format!("{base}run.t_final=1\n"), "full").status.success());
    assert!(tbeam(dir.path(), "simulate", &format!("{base}run.t_final=0.5\n"), "half").status.success());
    let snap = dir.path().join("half/final.snap");
    let restart = format!(
        "{BEAM}scheme.dt=0.01\nrun.t_final=0.5\ninitial.kind=snapshot\ninitial.path={}\n",
        snap.display()
    );
    assert!(tbeam(dir.path(), "simulate", &restart, "rest").status.success());
    let full = data_rows(&fs::read_to_string(dir.path().join("full/trajectory.csv")).unwrap());
    let rest = data_rows(&fs::read_to_string(dir.path().join("rest/trajectory.csv")).unwrap());
    let half = data_rows(&fs::read_to_string(dir.path().join("half/trajectory.csv")).unwrap());
    let end_half = half.last().unwrap();
    assert_eq!(rest[0][..9], end_half[..9]);
    assert_eq!(rest[0][10..13], end_half[10..13]);
    // Energy columns and the endpoint state of the restarted run match the
    // uninterrupted one; only the cumulative dissipation restarts at zero.
    let end_full = full.last().unwrap();
    let end_rest = rest.last().unwrap();
    assert_eq!(end_full[1..9], end_rest[1..9]);
    assert_eq!(end_full[10..13], end_rest[10..13]);
}

#[test]
fn sweep_of_one_is_a_table_of_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{BEAM}scheme.dt=0.02\nrun.t_final=0.5\ninitial.kind=mode\ninitial.velocity=true\ncontact.law=penalty\ncontact.eps_pen=1e-2\ncontact.g_lo=-0.1\ncontact.g_hi=0.1\nsweep.eps_pen=1e-2\n"
    );
    assert!(tbeam(dir.path(), "sweep-eps", &cfg, "s").status.success());
    let rows = data_rows(&fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap());
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], "ok");
    assert!(dir.path().join("s/row_000/trajectory.csv").exists());
    assert_eq!(value(&summary(dir.path(), "s/row_000"), "status"), "ok");
}

#[test]
fn diverging_row_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{BEAM}scheme.dt=0.05\nscheme.newton_max=2\nrun.t_final=1\ninitial.kind=mode\ninitial.velocity=true\ninitial.phi_amp=5\ncontact.law=penalty\ncontact.eps_pen=1\ncontact.g_lo=-0.01\ncontact.g_hi=0.01\nsweep.eps_pen=10,1e-6\n"
    );
    let out = tbeam(dir.path(), "sweep-eps", &cfg, "d");
    assert_eq!(out.status.code(), Some(3));
    let rows = data_rows(&fs::read_to_string(dir.path().join("d/sweep.csv")).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "ok");
    assert_eq!(rows[1][1], "solver_failure");
    assert_eq!(value(&summary(dir.path(), "d"), "failed_rows"), "1");
    assert_eq!(value(&summary(dir.path(), "d/row_001"), "status"), "solver_failure");
}

#[test]
fn sweep_eps_requires_penalty_law() {
    let dir = tempfile::tempdir().unwrap();
    let out = tbeam(dir.path(), "sweep-eps", &format!("{BEAM}sweep.eps_pen=1e-2\n"), "p");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn undamped_spectrum_is_on_the_axis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BEAM.replace("beam.gamma1=1", "beam.gamma1=0").replace("beam.gamma2=1", "beam.gamma2=0");
    assert!(tbeam(dir.path(), "spectrum", &cfg, "sp").status.success());
    let s = summary(dir.path(), "sp");
    assert!(value(&s, "abscissa").parse::<f64>().unwrap().abs() < 1e-9);
    assert_eq!(value(&s, "dim"), "64");
    let rows = data_rows(&fs::read_to_string(dir.path().join("sp/spectrum.csv")).unwrap());
    assert_eq!(rows.len(), 64);
}

#[test]
fn xi_sweep_reports_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{}sweep.xi=1/2,2/3,2/4\nsweep.ne=8,16\n", BEAM.replace("beam.b=1", "beam.b=4"));
    assert!(tbeam(dir.path(), "sweep-xi", &cfg, "x").status.success());
    let s = summary(dir.path(), "x");
    assert_eq!(value(&s, "xi.1_2.verdict"), "stabilizing");
    assert_eq!(value(&s, "xi.2_3.verdict"), "excluded");
    assert_eq!(value(&s, "xi.2_4.verdict"), "stabilizing");
    let rows = data_rows(&fs::read_to_string(dir.path().join("x/sweep.csv")).unwrap());
    assert_eq!(rows.len(), 6);
}

#[test]
fn observability_of_rest_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{BEAM}scheme.dt=0.05\nrun.t_final=0.5\n");
    assert!(tbeam(dir.path(), "observability", &cfg, "ob").status.success());
    let s = summary(dir.path(), "ob");
    assert_eq!(value(&s, "defect_ell").parse::<f64>().unwrap(), 0.0);
    assert_eq!(value(&s, "defect_0").parse::<f64>().unwrap(), 0.0);
    assert!(dir.path().join("ob/observability.csv").exists());
}

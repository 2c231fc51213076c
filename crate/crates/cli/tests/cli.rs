use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn l1adapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_l1adapt"))
        .args(args)
        .env("L1ADAPT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(format!("{name}.toml"))
}

fn variant(dir: &Path, name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let text = std::fs::read_to_string(shipped("fig3")).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, edit(text)).unwrap();
    path
}

/// Shortens the horizon so simulations finish quickly.
fn short(text: String) -> String {
    text.replace("horizon = 10.0", "horizon = 0.5")
}

#[test]
fn certify_builtin_passes() {
    let o = l1adapt(&["certify", "builtin:fig3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("l1_condition_pass = true"), "{out}");
    assert!(out.contains("xtilde_bound = "));
}

#[test]
fn certify_shipped_file_passes() {
    let o = l1adapt(&["certify", shipped("fig5").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn low_gain_fails_certification() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "k5.toml", |t| t.replace("k = 60.0", "k = 5.0"));
    let o = l1adapt(&["certify", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("l1_condition_pass = false"));
}

#[test]
fn malformed_expression_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "bad.toml", |t| t.replace("r = \"cos(pi*t)\"", "r = \"cos(pi*t))\""));
    let o = l1adapt(&["certify", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("reference.r"), "{err}");
    assert!(err.contains("byte 9"), "{err}");
}

#[test]
fn unknown_builtin_is_a_schema_error() {
    let o = l1adapt(&["certify", "builtin:nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fig3"));
}

#[test]
fn simulate_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "short.toml", short);
    let csv = dir.path().join("trace.csv");
    let o = l1adapt(&[
        "simulate",
        path.to_str().unwrap(),
        "--with-reference",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("PASS xtilde"));
    let text = std::fs::read_to_string(&csv).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "t,x1,x2,xhat1,xhat2,u,thetahat1,thetahat2,sigmahat,omegahat,xref1,xref2,uref,r"
    );
    assert!(text.lines().count() > 100);
}

#[test]
fn unsafe_run_skips_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "k5.toml", |t| short(t.replace("k = 60.0", "k = 5.0")));
    let refused = l1adapt(&["simulate", path.to_str().unwrap()]);
    assert_eq!(refused.status.code(), Some(1));
    let o = l1adapt(&["simulate", path.to_str().unwrap(), "--unsafe"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("bounds: N/A (certificate failed)"));
}

#[test]
fn stiff_step_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "stiff.toml", |t| short(t.replace("dt = 0.000025", "dt = 0.001")));
    let o = l1adapt(&["simulate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn fig2_curve_output() {
    let o = l1adapt(&["fig2", "builtin:fig3", "--wk-range", "10:100:4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("wk,l1_gain_times_L"), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with(char::is_numeric)).count(), 4);
}

#[test]
fn fig2_with_zero_l_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "zero.toml", |t| {
        t.replace("theta = [[-10.0, 10.0], [-10.0, 10.0]]", "theta = [[0.0, 0.0], [0.0, 0.0]]")
            .replace("theta = [\"2 + cos(pi * t)\", \"2 + 0.3 * sin(pi * t) + 0.2 * cos(2 * t)\"]", "theta = [\"0\", \"0\"]")
    });
    let csv = dir.path().join("curve.csv");
    let o = l1adapt(&["fig2", path.to_str().unwrap(), "--wk-range", "5:50:3", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    for line in text.lines().skip(1) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 0.0, "{line}");
    }
}

#[test]
fn bad_range_is_rejected() {
    let o = l1adapt(&["fig2", "builtin:fig3", "--wk-range", "10:5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_single_gain() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "short.toml", short);
    let o = l1adapt(&["sweep-gamma", path.to_str().unwrap(), "--gammas", "1000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("sup_e_strictly_decreasing = true"));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn varband(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varband"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf8")
}

fn generate(dir: &Path, kind: &str, n: &str) -> String {
    let path = dir.join(format!("{kind}.csv"));
    let p = path.to_str().unwrap().to_string();
    let o = varband(&["generate", "--kind", kind, "--n", n, "--out", &p]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    p
}

#[test]
fn generate_writes_header_and_rows() {
    let o = varband(&["generate", "--kind", "circle-nonuniform", "--n", "50"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 51);
    assert!(lines[0].starts_with("x1,x2"));
    assert!(lines[0].contains("theta"));
}

#[test]
fn generation_is_reproducible() {
    let run = || stdout(&varband(&["generate", "--kind", "sphere", "--n", "40", "--seed", "3"]));
    assert_eq!(run(), run());
    let other = stdout(&varband(&["generate", "--kind", "sphere", "--n", "40", "--seed", "4"]));
    assert_ne!(run(), other);
}

#[test]
fn eigs_leading_pair_on_circle() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "circle-grid", "400");
    let o = varband(&["eigs", "--input", &input, "--eps", "0.002", "--m", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "theta,phi0,phi1,phi2");
    let values: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(values[0].abs() < 1e-8);
    for v in &values[1..] {
        assert!((v + 1.0).abs() < 0.05, "eigenvalue {v}");
    }
    assert_eq!(text.lines().count(), 402);
}

#[test]
fn tune_reports_selection() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "circle-nonuniform", "300");
    let o = varband(&["tune", "--input", &input, "--grid", "-12:2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("i,eps,S,slope"));
    assert_eq!(text.lines().count(), 16);
    assert!(String::from_utf8_lossy(&o.stderr).contains("a_max"));
}

#[test]
fn density_and_build_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "gaussian-nice", "120");
    let o = varband(&["density", "--input", &input]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 121);

    let out = dir.path().join("l.csv");
    let o = varband(&["build", "--input", &input, "--eps", "0.01", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out).unwrap();
    assert!(text.lines().count() > 120);
}

#[test]
fn experiment_writes_results_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("run");
    let cfg = dir.path().join("exp.conf");
    fs::write(
        &cfg,
        "# small nice-grid run\nexperiment = ou1d_nice\nn = 300\neps = 0.001,0.01\n",
    )
    .unwrap();
    let o = varband(&[
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        &format!("output_dir={}", outdir.display()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("eps,mse,eig_err,wall_time_s"));
    assert_eq!(stdout(&o).lines().count(), 3);
    for name in ["results.csv", "meta.txt"] {
        assert!(outdir.join(name).exists(), "{name}");
    }
    let meta = fs::read_to_string(outdir.join("meta.txt")).unwrap();
    assert!(meta.contains("experiment = ou1d_nice"));
}

#[test]
fn operator_check_runs() {
    let o = varband(&["operator-check", "--set", "n=400", "--set", "eps=0.01,0.1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn exit_codes() {
    // usage errors and bad configuration exit 1
    assert_eq!(varband(&["eigs"]).status.code(), Some(1));
    assert_eq!(varband(&["experiment", "--set", "bogus=1"]).status.code(), Some(1));
    assert_eq!(varband(&["operator-check", "--set", "experiment=sphere"]).status.code(), Some(1));
    // runtime failures exit 2
    assert_eq!(varband(&["eigs", "--input", "/nonexistent/cloud.csv"]).status.code(), Some(2));
    assert_eq!(varband(&["--help"]).status.code(), Some(0));
}

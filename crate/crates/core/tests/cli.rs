use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use vexlap::cli_io::{import_field, load_problem, read_report, run, FIELD_HEADER};
use vexlap::solve_jensen;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn vexlap(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("vexlap").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn solve_writes_field_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.csv");
    let cfg = config("minimal.toml");
    let (code, stdout, _) = vexlap(&["solve", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code, 0);
    assert!(stdout.contains("u.report.toml"));

    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some(FIELD_HEADER));
    assert_eq!(text.lines().count(), 1 + 17 * 17);
    let pr = load_problem(&cfg).unwrap();
    let u = import_field(&out, &pr.grid).unwrap();
    // affine data is reproduced at every k
    for k in 0..pr.grid.len() {
        assert!((u[k] - pr.grid.point(k).0).abs() < 1e-9);
    }
    let rep = read_report(dir.path().join("u.report.toml")).unwrap();
    assert_eq!(rep.epsilon, 0.0);

    let (code, stdout, _) = vexlap(&["report", "--in", p(&out)]);
    assert_eq!(code, 0);
    assert!(stdout.contains("per_k"), "{stdout}");
}

#[test]
fn overrides_and_residual_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (u, r) = (dir.path().join("u.csv"), dir.path().join("r.csv"));
    let cfg = config("minimal.toml");
    let args = ["solve", "--config", p(&cfg), "--out", p(&u), "--epsilon", "-0.5", "--k-max", "8"];
    assert_eq!(vexlap(&args).0, 0);
    let rep = read_report(dir.path().join("u.report.toml")).unwrap();
    assert_eq!(rep.epsilon, -0.5);
    assert_eq!(rep.final_k(), Some(8.0));

    let (code, stdout, _) = vexlap(&["residual", "--config", p(&cfg), "--in", p(&u), "--out", p(&r)]);
    assert_eq!(code, 0);
    assert!(stdout.contains("infinity_residual_sup"));
    assert!(r.exists());
    // the config has epsilon 0, so no signed form is written
    assert!(!dir.path().join("r.max.csv").exists());
}

#[test]
fn distance_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d.csv");
    let cfg = config("minimal.toml");
    assert_eq!(vexlap(&["distance", "--config", p(&cfg), "--source", "0,0", "--out", p(&d)]).0, 0);
    let pr = load_problem(&cfg).unwrap();
    let field = import_field(&d, &pr.grid).unwrap();
    assert_eq!(field[0], 0.0);
    assert!((field[pr.grid.len() - 1] - 2f64.sqrt()).abs() < 1e-12);

    let (code, stdout, _) = vexlap(&["verify", "--config", p(&cfg), "--suite", "eikonal"]);
    assert_eq!(code, 0, "{stdout}");
    let (code, stdout, _) = vexlap(&["verify", "--config", p(&config("cone.toml")), "--suite", "uniqueness"]);
    assert_eq!(code, 0, "{stdout}");
}

#[test]
fn exit_codes() {
    assert_eq!(vexlap(&["frobnicate"]).0, 2);
    assert_eq!(vexlap(&["solve", "--config", "x.toml"]).0, 2);
    assert_eq!(vexlap(&["verify", "--config", "x.toml", "--suite", "nope"]).0, 2);
    assert_eq!(vexlap(&["--help"]).0, 0);

    let (code, _, err) = vexlap(&["solve", "--config", "/nonexistent/c.toml", "--out", "/tmp/u.csv"]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error:"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[domain]\nxmin = 0\nxmax = 1\nymin = 0\nymax = 1\nnx = 9\nny = 9\n[exponent]\np = 2\n").unwrap();
    let (code, _, err) = vexlap(&["solve", "--config", p(&bad), "--out", p(&dir.path().join("u.csv"))]);
    assert_eq!(code, 1);
    assert!(err.contains("boundary.f"), "{err}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_vexlap");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.csv");
    let ok = Command::new(bin)
        .args(["solve", "--config", p(&config("minimal.toml")), "--out", p(&out)])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("wrote "));
    assert!(out.exists());
    let usage = Command::new(bin).arg("bogus").output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
    assert!(!usage.stderr.is_empty());
}

#[test]
fn shipped_configs_solve_and_verify() {
    let suites = [
        ("minimal.toml", "comparison"),
        ("cone.toml", "uniqueness"),
        ("aronsson.toml", "comparison"),
        ("radial.toml", "harnack"),
        ("jensen_min.toml", "comparison"),
        ("jensen_max.toml", "comparison"),
        ("harnack.toml", "harnack"),
        ("harnack.toml", "lemma41"),
    ];
    let dir = tempfile::tempdir().unwrap();
    for (name, suite) in suites {
        let cfg = config(name);
        let start = Instant::now();
        let out = dir.path().join(name.replace(".toml", ".csv"));
        let (code, _, err) = vexlap(&["solve", "--config", p(&cfg), "--out", p(&out)]);
        assert_eq!(code, 0, "{name}: {err}");
        let (code, stdout, err) = vexlap(&["verify", "--config", p(&cfg), "--suite", suite]);
        assert_eq!(code, 0, "{name} {suite}: {stdout}{err}");
        assert!(start.elapsed() < Duration::from_secs(120), "{name} took {:?}", start.elapsed());
    }
}

#[test]
fn max_form_mirrors_min_form() {
    // u solves the eps problem with data f iff -u solves the -eps problem with -f.
    let pr = load_problem(config("jensen_max.toml")).unwrap();
    let mirror = pr.with_epsilon(-pr.spec.epsilon).with_boundary_values(|_, v| -v);
    let (u, rep) = solve_jensen(&pr, None).unwrap();
    let (v, _) = solve_jensen(&mirror, None).unwrap();
    assert_eq!(format!("{:?}", rep.equation), "Max");
    let gap = (0..pr.grid.len()).map(|k| (u[k] + v[k]).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-8, "gap {gap}");
}

//! End-to-end runs of the `levykit` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use levykit::io::Lvf1;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levykit"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn cfg(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("levykit-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    d
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn csv_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn analyze_recovers_stable_index() {
    let out = scratch("analyze");
    let o = run(&["analyze", "--measure", &cfg("stable1d.cfg"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("orv.csv")).unwrap();
    for k in ["p1", "q1", "p2", "q2"] {
        assert!((csv_value(&csv, k) - 0.7).abs() < 1e-6);
    }
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config_sha256 = ") && manifest.contains("levykit = "));
}

#[test]
fn flat_solve_matches_scalar_ode() {
    let out = scratch("flat");
    let o = run(&["solve", &cfg("flat_lambda2.cfg"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(csv_value(&diag, "residual") < 1e-8);
    let last = Lvf1::decode(&fs::read(out.join("trajectory/u_0064.lvf1")).unwrap()).unwrap();
    let exact = (1.0 - (-2.0f64).exp()) / 2.0;
    assert_eq!((last.dim, last.n, last.half_width), (1, 64, 8.0));
    assert!(last.values.iter().all(|v| (v - exact).abs() < 1e-8));
    let first = Lvf1::decode(&fs::read(out.join("trajectory/u_0000.lvf1")).unwrap()).unwrap();
    assert!(first.values.iter().all(|&v| v == 0.0));
}

#[test]
fn reruns_are_byte_identical() {
    let cases: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--measure".into(), cfg("cauchy1d.cfg"), "--seed".into(), "9".into(), "--samples".into(), "2000".into()],
        vec!["density".into(), "--measure".into(), cfg("anisotropic2d.cfg"), "--grid-n".into(), "128".into(), "--grid-L".into(), "32".into()],
        vec!["symbol".into(), "--measure".into(), cfg("unimodal1d.cfg")],
        vec!["solve".into(), cfg("frozen_oscillating.cfg"), "--grid-n".into(), "64".into()],
    ];
    for (i, args) in cases.iter().enumerate() {
        let dirs = [scratch(&format!("rerun-{i}-a")), scratch(&format!("rerun-{i}-b"))];
        for d in &dirs {
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.extend(["--out", d.to_str().unwrap()]);
            let o = run(&full);
            assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        }
        let (a, b) = (snapshot(&dirs[0]), snapshot(&dirs[1]));
        assert!(a.len() >= 2);
        assert_eq!(a, b, "{args:?}");
    }
}

#[test]
fn seed_changes_samples() {
    let dirs = [scratch("seed-a"), scratch("seed-b")];
    for (d, seed) in dirs.iter().zip(["1", "2"]) {
        let o = run(&["simulate", "--measure", &cfg("cauchy1d.cfg"), "--seed", seed, "--samples", "500", "--out", d.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let a = fs::read(dirs[0].join("increments.lvf1")).unwrap();
    let b = fs::read(dirs[1].join("increments.lvf1")).unwrap();
    assert_ne!(a, b);
    let dump = Lvf1::decode(&a).unwrap();
    assert_eq!((dump.dim, dump.n, dump.values.len()), (1, 500, 500));
    let m = fs::read_to_string(dirs[0].join("manifest.txt")).unwrap();
    assert!(m.contains("seed = 1\n"));
}

#[test]
fn density_csv_for_one_dimension() {
    let out = scratch("density");
    let o = run(&["density", "--measure", &cfg("cauchy1d.cfg"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("density.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1025);
    let dump = Lvf1::decode(&fs::read(out.join("density.lvf1")).unwrap()).unwrap();
    assert_eq!((dump.n, dump.half_width), (1024, 64.0));
}

#[test]
fn exit_codes() {
    assert_eq!(code(&run(&["bogus"])), 64);
    assert_eq!(code(&run(&["density", "--measure", &cfg("cauchy1d.cfg"), "--unknown"])), 64);
    assert_eq!(code(&run(&[])), 64);
    assert_eq!(code(&run(&["--help"])), 0);

    let dir = scratch("bad");
    fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.cfg");
    fs::write(&bad, "family radial_stable\n").unwrap();
    let o = run(&["analyze", "--measure", bad.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 65);
    assert!(stderr(&o).contains(":1:"));
    fs::write(&bad, "family = radial_stable\nalpha = 1\nwidth = 3\n").unwrap();
    assert_eq!(code(&run(&["analyze", "--measure", bad.to_str().unwrap()])), 65);

    // α outside (0, 2) is a domain error
    fs::write(&bad, "family = radial_stable\nalpha = 2.5\n").unwrap();
    assert_eq!(code(&run(&["analyze", "--measure", bad.to_str().unwrap(), "--out", dir.to_str().unwrap()])), 1);
    // a box too narrow for the density
    let o = run(&["density", "--measure", &cfg("cauchy1d.cfg"), "--grid-L", "2", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert_eq!(code(&run(&["verify", "--suite", "nonsense"])), 64);
    assert_eq!(code(&run(&["verify", "--suite", "2", "--tol-scale", "0"])), 64);
}

#[test]
fn verify_exit_status_tracks_failures() {
    let out = scratch("verify");
    let o = run(&["verify", "--suite", "2,4,13", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(fs::read_to_string(out.join("verify.csv")).unwrap().lines().count() == 4);
    let o = run(&["verify", "--suite", "13", "--tol-scale", "1e-6"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));
}

#[test]
fn verify_full_suite_reports_every_check() {
    let o = run(&["verify", "--suite", "all", "--measure", &cfg("cauchy1d.cfg")]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let lines = stdout.lines().filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")).count();
    assert_eq!(lines, 16, "{stdout}");
    // exit status is 0 exactly when every line passed
    let failed = stdout.contains("[FAIL]");
    assert_eq!(code(&o), if failed { 2 } else { 0 }, "{stdout}");
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fsbp::solver::ProblemSpec;

fn fsbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsbp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn build_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for (space, extra) in [
        ("trig:d=1", vec!["--nodes", "4"]),
        ("exp:d=2", vec!["--nodes", "5"]),
        ("rbf-cubic:centers=0,0.5,1", vec!["--nodes", "4"]),
        ("poly:d=3", vec![]),
        ("trig:d=3", vec!["--domain", "-1", "2"]),
    ] {
        let file = dir.path().join(format!("{}.json", space.replace([':', '=', ','], "_")));
        let mut args = vec!["build", "--space", space, "--out", path_str(&file)];
        args.extend(extra);
        let out = fsbp(&args);
        assert_eq!(code(&out), 0, "{space}: {}", stderr(&out));
        let out = fsbp(&["verify", path_str(&file)]);
        assert_eq!(code(&out), 0, "{space}: {}", stderr(&out));
    }
}

#[test]
fn trig_build_matches_rounded_derivative_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t.json");
    let out = fsbp(&["build", "--space", "trig:d=1", "--domain", "0", "1", "--nodes", "4", "--out", path_str(&file)]);
    assert_eq!(code(&out), 0);
    let expected = [
        [-3.0, 3.63, -3.63, 3.0],
        [-1.81, 0.0, 3.63, -1.81],
        [1.81, -3.63, 0.0, 1.81],
        [-3.0, 3.63, -3.63, 3.0],
    ];
    let v = json(&file);
    for (i, row) in expected.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            let d = v["D"][i][j].as_f64().unwrap();
            assert!((d - e).abs() <= 0.01, "D[{i}][{j}] = {d}");
        }
    }
}

#[test]
fn exp_build_prints_rounded_weights() {
    let out = fsbp(&["build", "--space", "exp:d=2", "--nodes", "5"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rounded: Vec<f64> = v["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| (w.as_f64().unwrap() * 100.0).round() / 100.0)
        .collect();
    assert_eq!(rounded, vec![0.08, 0.36, 0.12, 0.36, 0.08]);
}

#[test]
fn malformed_space_is_a_usage_error() {
    for space in ["trig", "poly:d=-1", "exp:d=two", "rbf-cubic:centers=", "spline:d=2"] {
        let out = fsbp(&["build", "--space", space]);
        assert_eq!(code(&out), 1, "{space}");
    }
    assert_eq!(code(&fsbp(&["frobnicate"])), 1);
}

fn tamper(file: &Path, edit: impl FnOnce(&mut serde_json::Value)) {
    let mut v = json(file);
    edit(&mut v);
    fs::write(file, serde_json::to_string(&v).unwrap()).unwrap();
}

#[test]
fn tampered_files_fail_verification() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t.json");
    let build = |f: &Path| {
        assert_eq!(code(&fsbp(&["build", "--space", "trig:d=1", "--nodes", "4", "--out", path_str(f)])), 0);
    };

    build(&file);
    tamper(&file, |v| v["D"][1][2] = serde_json::json!(0.0));
    let out = fsbp(&["verify", path_str(&file)]);
    assert_eq!(code(&out), 2);

    build(&file);
    tamper(&file, |v| v["weights"][1] = serde_json::json!(-1.0 / 3.0));
    let out = fsbp(&["verify", path_str(&file)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("norm: P is not positive definite"), "{}", stderr(&out));

    fs::write(&file, "{ not json").unwrap();
    assert_eq!(code(&fsbp(&["verify", path_str(&file)])), 2);
}

#[test]
fn negative_burgers_inflow_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = fsbp(&[
        "run", "--problem", "burgers", "--space", "exp:d=2", "--blocks", "5", "--inflow", "-0.5",
        "--out", path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nonnegative"), "{}", stderr(&out));
}

#[test]
fn zero_final_time_returns_initial_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = fsbp(&[
        "run", "--problem", "burgers", "--space", "exp:d=2", "--blocks", "5", "--tfinal", "0",
        "--out", path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let spec = ProblemSpec::burgers_wave();
    let rows = csv_rows(&dir.path().join("solution.csv"));
    assert_eq!(rows.len(), 25);
    for row in rows {
        let x: f64 = row[0].parse().unwrap();
        let u: f64 = row[1].parse().unwrap();
        assert_eq!(u, spec.initial(x));
    }
    let summary = csv_rows(&dir.path().join("summary.csv"));
    assert_eq!(summary[0][3], "0");
}

#[test]
fn repeated_runs_write_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = fsbp(&[
            "run", "--problem", "advection", "--space", "trig:d=4", "--nodes", "10", "--blocks", "2",
            "--tfinal", "0.3", "--out", path_str(dir.path()),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for name in ["diagnostics.csv", "solution.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let sa = csv_rows(&a.path().join("summary.csv"));
    let sb = csv_rows(&b.path().join("summary.csv"));
    assert_eq!(sa[0][..4], sb[0][..4]);
}

#[test]
fn burgers_exp_run_beats_poly() {
    let err_max = |space: &str| -> f64 {
        let dir = tempfile::tempdir().unwrap();
        let out = fsbp(&["run", "--problem", "burgers", "--space", space, "--blocks", "5", "--out", path_str(dir.path())]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        csv_rows(&dir.path().join("summary.csv"))[0][2].parse().unwrap()
    };
    let (exp, poly) = (err_max("exp:d=2"), err_max("poly:d=2"));
    assert!(exp.is_finite() && exp < poly, "{exp} vs {poly}");
}

#[test]
fn convergence_table_for_source_problem() {
    let dir = tempfile::tempdir().unwrap();
    let out = fsbp(&[
        "convergence", "--problem", "advection-source", "--space", "exp:d=2", "--space", "poly:d=2",
        "--blocks", "3,6,12,24", "--out", path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let path = dir.path().join("convergence.csv");
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "space,I,err_P,err_2,err_max,order");
    let rows = csv_rows(&path);
    assert_eq!(rows.len(), 8);
    let errors = |space: &str| -> Vec<f64> {
        rows.iter().filter(|r| r[0] == space).map(|r| r[4].parse().unwrap()).collect()
    };
    let (exp, poly) = (errors("exp:d=2"), errors("poly:d=2"));
    for e in [&exp, &poly] {
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    }
    assert!(exp.iter().zip(&poly).all(|(e, p)| e < p));
}

#[test]
fn overflow_is_reported_as_instability() {
    let dir = tempfile::tempdir().unwrap();
    let out = fsbp(&[
        "run", "--problem", "advection-source", "--space", "poly:d=2", "--blocks", "2", "--source", "1000",
        "--tfinal", "40", "--out", path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "problem = \"advection\"\nspace = \"trig:d=2\"\nblocks = 2\ntfinal = 0.1\nout = \"{}\"\n",
            path_str(dir.path())
        ),
    )
    .unwrap();
    let out = fsbp(&["run", "--config", path_str(&config)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("summary.csv").exists());
}

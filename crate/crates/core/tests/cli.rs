use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
[problem]
n = 1
d = 1
domain = "interval(0,1)"
start = [0.5]
f = { kind = "affine", constant = 0.0, terms = { y = -0.5 } }
g = [{ kind = "zero" }]
h = { kind = "const", value = 0.2 }
l = { kind = "trig", func = "cos", var = "x", freq = 3.141592653589793 }
b = [{ kind = "zero" }]
sigma = [{ kind = "const", value = 1.0 }]

[grid]
t_end = 1.0
dt = 0.05

[monte_carlo]
scenarios = 400
seed = 3
basis = { kind = "polynomial", degree = 3 }

[suite]
name = "solve-bdsde"
"#;

fn gbdsde(dir: &Path, config: &str, args: &[&str]) -> (i32, String) {
    let cfg = dir.join("config.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gbdsde"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr))
}

#[test]
fn solve_writes_a_solution_and_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("y.csv");
    let out_dir = dir.path().join("run");
    let (code, text) = gbdsde(
        dir.path(),
        CONFIG,
        &["solve-bdsde", "--scenarios", "500", "--dt", "0.1", "--out", out.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()],
    );
    assert_eq!(code, 0, "{text}");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("t,mean_Y,se_Y"));
    assert_eq!(csv.lines().count(), 12);
    assert!(std::fs::read_to_string(out_dir.join("report.csv")).unwrap().ends_with("OVERALL,,,PASS\n"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let p = dir.path().join(name);
        let (code, text) = gbdsde(dir.path(), CONFIG, &["solve-bdsde", "--seed", seed, "--out", p.to_str().unwrap()]);
        assert_eq!(code, 0, "{text}");
        std::fs::read(p).unwrap()
    };
    assert_eq!(run("a.csv", "17"), run("b.csv", "17"));
    assert_ne!(run("a.csv", "17"), run("c.csv", "18"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = CONFIG.replace(r#"h = { kind = "const", value = 0.2 }"#, r#"h = { kind = "spline" }"#);
    let (code, text) = gbdsde(dir.path(), &bad, &["solve-bdsde"]);
    assert_eq!(code, 2);
    assert!(text.contains("problem.h") || text.contains("unknown catalog entry"), "{text}");
    let (code, _) = gbdsde(dir.path(), CONFIG, &["solve-bdsde", "--dt", "-1"]);
    assert_eq!(code, 2);
    let missing = Command::new(env!("CARGO_BIN_EXE_gbdsde")).args(["field", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn blow_up_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let bad = CONFIG.replace(
        r#"f = { kind = "affine", constant = 0.0, terms = { y = -0.5 } }"#,
        r#"f = { kind = "exp", var = "y", rate = 40.0, amp = 1.0 }"#,
    );
    let (code, text) = gbdsde(dir.path(), &bad, &["solve-bdsde", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code, 3, "{text}");
}

#[test]
fn reflected_suite_passes_on_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("r");
    let (code, text) = gbdsde(dir.path(), CONFIG, &["simulate-reflected", "--workers", "2", "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    assert!(out_dir.join("reflected_paths.csv").exists());
}

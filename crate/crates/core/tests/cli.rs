use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cryophase"));
    c.env_remove("CRYOPHASE_OUTPUT_DIR");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

fn exec(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (
        status.code().unwrap(),
        String::from_utf8_lossy(&stdout).into_owned(),
        String::from_utf8_lossy(&stderr).into_owned(),
    )
}

fn simulate(config: &Path, out: &Path) -> (i32, String, String) {
    exec(bin().args(["simulate", "--quiet", "--output-dir"]).arg(out).arg(config))
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn small_config(model: &str, time: &str) -> String {
    format!(
        r#"{{
  "grid": {{ "dim": 1, "lengths": [1.0], "nodes": [11] }},
  "model": {model},
  "time": {time},
  "initial": {{ "theta0": "theta_c - 0.2 * cos(pi * x)", "beta0": "1" }},
  "output": {{ "cadence": 0.05 }}
}}"#
    )
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn steady_state_simulation_conserves() {
    let dir = TempDir::new().unwrap();
    let (code, _, err) = simulate(&scenario("steady"), dir.path());
    assert_eq!(code, 0, "{err}");
    let diag = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let residuals = column(&diag, "conservation_residual");
    assert_eq!(residuals.len(), 100);
    assert!(residuals.iter().all(|r| *r <= 1e-10));
    assert!(!diag.contains('\r'));
    for k in 0..=10 {
        assert!(dir.path().join(format!("snapshot_{k:04}.csv")).exists());
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run_manifest.json")).unwrap()).unwrap();
    assert!(manifest["statistics"]["wall_time_s"].is_number());
    assert_eq!(manifest["config"]["model"]["p"], 1.5);
}

#[test]
fn power_outside_range_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &small_config(r#"{ "p": 2.5 }"#, r#"{ "dt": 0.01, "t_end": 0.1 }"#));
    let (code, _, err) = simulate(&cfg, dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("1 < p < 2"), "{err}");
    assert!(err.contains("config.json:3"), "{err}");
}

#[test]
fn oversized_time_step_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &small_config("{}", r#"{ "dt": 1.0, "t_end": 0.1 }"#));
    let (code, _, err) = simulate(&cfg, dir.path());
    assert_eq!(code, 2, "{err}");
}

#[test]
fn unknown_keys_and_missing_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &small_config(r#"{ "rho": 1 }"#, r#"{ "dt": 0.01, "t_end": 0.1 }"#));
    let (code, _, err) = simulate(&cfg, dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("rho"), "{err}");

    let (code, _, _) = simulate(&dir.path().join("absent.json"), dir.path());
    assert_eq!(code, 1);
}

#[test]
fn solver_failure_exits_with_three_and_dumps_state() {
    let dir = TempDir::new().unwrap();
    let text = small_config("{}", r#"{ "dt": 0.01, "t_end": 0.1 }"#).replace(
        r#""output""#,
        r#""solvers": { "picard_max": 1, "picard_tol": 1e-15 },
  "output""#,
    );
    let cfg = write_config(&dir, &text);
    let out = dir.path().join("out");
    let (code, _, err) = simulate(&cfg, &out);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("step 1"), "{err}");
    assert!(out.join("failure_state.csv").exists());
}

#[test]
fn repeated_runs_and_manifest_reruns_match_bitwise() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(simulate(&scenario("supercooling"), &a).0, 0);
    assert_eq!(simulate(&scenario("supercooling"), &b).0, 0);
    let diag = |p: &Path| fs::read(p.join("diagnostics.csv")).unwrap();
    assert_eq!(diag(&a), diag(&b));

    assert_eq!(simulate(&a.join("run_manifest.json"), &c).0, 0);
    assert_eq!(diag(&a), diag(&c));
    assert_eq!(
        fs::read(a.join("snapshot_0010.csv")).unwrap(),
        fs::read(c.join("snapshot_0010.csv")).unwrap()
    );
}

#[test]
fn seed_check_passes() {
    let dir = TempDir::new().unwrap();
    let (code, _, err) = exec(
        bin()
            .args(["simulate", "--seed-check", "--output-dir"])
            .arg(dir.path())
            .arg(scenario("quench")),
    );
    assert_eq!(code, 0, "{err}");
}

#[test]
fn output_dir_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("from_env");
    let (code, _, err) = exec(
        bin()
            .env("CRYOPHASE_OUTPUT_DIR", &out)
            .args(["simulate", "--quiet"])
            .arg(scenario("steady")),
    );
    assert_eq!(code, 0, "{err}");
    assert!(out.join("diagnostics.csv").exists());
}

#[test]
fn initial_data_from_a_snapshot() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    assert_eq!(simulate(&scenario("quench"), &first).0, 0);
    let text = fs::read_to_string(scenario("quench"))
        .unwrap()
        .replace(
            r#""theta0": "theta_c - 0.5 + 0.05 * cos(pi * x)", "beta0": "1""#,
            r#""theta0": "first/snapshot_0010.csv", "beta0": "first/snapshot_0010.csv""#,
        );
    assert!(text.contains("snapshot_0010"));
    let cfg = write_config(&dir, &text);
    let second = dir.path().join("second");
    let (code, _, err) = simulate(&cfg, &second);
    assert_eq!(code, 0, "{err}");
    let end_of_first = fs::read_to_string(first.join("snapshot_0010.csv")).unwrap();
    let start_of_second = fs::read_to_string(second.join("snapshot_0000.csv")).unwrap();
    assert_eq!(column(&end_of_first, "theta"), column(&start_of_second, "theta"));
    assert_eq!(column(&end_of_first, "beta"), column(&start_of_second, "beta"));
}

#[test]
fn mms_commands() {
    let (code, out, _) = exec(bin().args(["mms", "--levels", "4"]));
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("space refinement") && out.contains("order: theta"));

    let (code, _, _) = exec(bin().args(["mms", "--levels", "1"]));
    assert_eq!(code, 2);

    let (code, out, _) = exec(bin().args(["mms", "--solution", "zero", "--levels", "3"]));
    assert_eq!(code, 0);
    assert!(out.contains("order: theta exact  beta exact"), "{out}");

    let (code, _, _) = exec(bin().args(["mms", "--solution", "cubic"]));
    assert_eq!(code, 2);
}

#[test]
fn epsilon_sweeps() {
    let dir = TempDir::new().unwrap();
    let (code, _, err) = exec(
        bin()
            .args(["sweep-eps", "--eps", "1e-1,1e-2", "--output-dir"])
            .arg(dir.path())
            .arg(scenario("steady")),
    );
    assert_eq!(code, 0, "{err}");
    let report = fs::read_to_string(dir.path().join("sweep_report.csv")).unwrap();
    assert!(column(&report, "theta_gap").iter().all(|g| *g == 0.0));
    assert!(column(&report, "beta_gap").iter().all(|g| *g == 0.0));

    let (code, _, err) = exec(
        bin()
            .args(["sweep-eps", "--eps", "1e-1,1e-2,1e-3", "--output-dir"])
            .arg(dir.path())
            .arg(scenario("quench")),
    );
    assert_eq!(code, 0, "{err}");
    let report = fs::read_to_string(dir.path().join("sweep_report.csv")).unwrap();
    let gaps = column(&report, "theta_gap");
    assert_eq!(gaps.len(), 3);
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]));

    let (code, _, _) = exec(bin().args(["sweep-eps", "--eps", "abc"]).arg(scenario("quench")));
    assert_eq!(code, 2);
    let (code, _, _) = exec(bin().args(["sweep-eps", "--eps", "1e-2,1e-1"]).arg(scenario("quench")));
    assert_eq!(code, 2);
}

#[test]
fn convergence_command() {
    let dir = TempDir::new().unwrap();
    let text = small_config("{}", r#"{ "dt": 0.02, "t_end": 0.2 }"#);
    let cfg = write_config(&dir, &text);
    let (code, out, err) = exec(
        bin()
            .args(["convergence", "--levels", "4", "--output-dir"])
            .arg(dir.path())
            .arg(&cfg),
    );
    assert_eq!(code, 0, "{out}{err}");
    let report = fs::read_to_string(dir.path().join("convergence_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 5);
    assert!(report.lines().last().unwrap().contains("reference"));

    let (code, _, _) = exec(bin().args(["convergence", "--levels", "2"]).arg(&cfg));
    assert_eq!(code, 2);
}

//! End-to-end tests driving the installed binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ebm2")
}

fn run_in(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.current_dir(dir).args(args);
    cmd.env_remove("EBM2_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary ran")
}

fn base_config(eps_a: f64, lambda: f64, ic: &str, run: &str, extra: &str) -> String {
    format!(
        r#"{{
  "schema": 1,
  "model": {{"gamma_a": 1.0, "gamma_s": 1.0, "kappa_a": 1.0, "kappa_s": 1.0,
             "sigma_b": 1.0, "eps_a": {eps_a}, "lambda": {lambda}}},
  "forcing": {{
    "shape": {{"kind": "with_p2", "q0": 2.0, "s2": -0.3}},
    "solar": {{"kind": "constant", "r0": 1.0}},
    "beta_a": {{"kind": "constant", "value": 0.0}},
    "beta_s": {{"kind": "constant", "value": 0.5}}
  }},
  "grid": {{"n_modes": 8}},
  "ic": {ic},
  "run": {run}{extra}
}}"#
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn simulate_writes_consistent_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "config.json",
        &base_config(
            1.0,
            0.5,
            r#"{"kind": "constant", "t_a": 1.0, "t_s": 1.2}"#,
            r#"{"t_max": 2.0, "record_every": 0.5}"#,
            "",
        ),
    );
    let out = run_in(dir.path(), &["simulate", "--config", &config, "--out", "run"], &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let run_dir = dir.path().join("run");
    // 5 snapshots (t = 0, 0.5, ..., 2): rows = snapshots x modes x fields,
    // snapshots x quadrature nodes, and snapshots, plus a header each.
    assert_eq!(line_count(&run_dir.join("coeffs.csv")), 1 + 5 * 8 * 2);
    assert_eq!(line_count(&run_dir.join("nodal.csv")), 1 + 5 * 22);
    assert_eq!(line_count(&run_dir.join("energy.csv")), 1 + 5);
    let summary = std::fs::read_to_string(run_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"status\": \"completed\""));
    assert!(run_dir.join("effective_config.json").exists());
}

#[test]
fn expected_blowup_swaps_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let blow = base_config(
        3.0,
        0.0,
        r#"{"kind": "constant", "t_a": 1.0, "t_s": 1.0}"#,
        r#"{"t_max": 30.0, "record_every": 0.5, "expect_blowup": true}"#,
        "",
    );
    let config = write_config(dir.path(), "blow.json", &blow);
    let out = run_in(dir.path(), &["simulate", "--config", &config, "--out", "a"], &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("a/summary.json")).unwrap();
    assert!(summary.contains("\"status\": \"blew_up\""));
    assert!(summary.contains("t_star_lo"));
    assert!(summary.contains("t_star_hi"));

    // Same scenario without the flag: the blow-up is unexpected.
    let unexpected = blow.replace(r#", "expect_blowup": true"#, "");
    let config = write_config(dir.path(), "blow2.json", &unexpected);
    let out = run_in(dir.path(), &["simulate", "--config", &config, "--out", "b"], &[]);
    assert_eq!(out.status.code(), Some(2));

    // And a completing run marked expect_blowup is also code 2.
    let wrong = base_config(
        1.0,
        0.5,
        r#"{"kind": "constant", "t_a": 1.0, "t_s": 1.0}"#,
        r#"{"t_max": 1.0, "record_every": 0.5, "expect_blowup": true}"#,
        "",
    );
    let config = write_config(dir.path(), "wrong.json", &wrong);
    let out = run_in(dir.path(), &["simulate", "--config", &config, "--out", "c"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = base_config(
        1.0,
        0.5,
        r#"{"kind": "constant", "t_a": 1.0, "t_s": 1.0}"#,
        r#"{"t_max": "fast"}"#,
        "",
    );
    let config = write_config(dir.path(), "bad.json", &bad);
    let out = run_in(dir.path(), &["simulate", "--config", &config, "--out", "x"], &[]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("run.t_max"), "stderr: {stderr}");

    let unknown = base_config(
        1.0,
        0.5,
        r#"{"kind": "constant", "t_a": 1.0, "t_s": 1.0}"#,
        r#"{"t_max": 1.0}"#,
        r#", "typo_section": 3"#,
    );
    let config = write_config(dir.path(), "unknown.json", &unknown);
    let out = run_in(dir.path(), &["simulate", "--config", &config, "--out", "y"], &[]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("typo_section"), "stderr: {stderr}");
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "config.json",
        &base_config(
            1.0,
            0.5,
            r#"{"kind": "random", "seed": 7, "offset": 1.0, "amplitude": 0.5, "max_mode": 5, "floor": 0.0}"#,
            r#"{"t_max": 1.0, "record_every": 0.25}"#,
            "",
        ),
    );
    for out_dir in ["a", "b"] {
        let out = run_in(dir.path(), &["simulate", "--config", &config, "--out", out_dir], &[]);
        assert_eq!(out.status.code(), Some(0));
    }
    for file in ["coeffs.csv", "nodal.csv", "energy.csv", "summary.json"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let with_seed = |seed: u64| {
        base_config(
            1.0,
            0.5,
            &format!(
                r#"{{"kind": "random", "seed": {seed}, "offset": 1.0, "amplitude": 0.5, "max_mode": 5, "floor": 0.0}}"#
            ),
            r#"{"t_max": 0.5, "record_every": 0.25}"#,
            "",
        )
    };
    let config1 = write_config(dir.path(), "c1.json", &with_seed(1));
    let config2 = write_config(dir.path(), "c2.json", &with_seed(2));

    let cases: &[(&str, &[&str])] = &[
        ("base", &["simulate", "--config", &config1, "--out", "base"]),
        ("flag", &["simulate", "--config", &config1, "--out", "flag", "--seed", "2"]),
        ("direct", &["simulate", "--config", &config2, "--out", "direct"]),
    ];
    for (_, args) in cases {
        assert_eq!(run_in(dir.path(), args, &[]).status.code(), Some(0));
    }
    let read = |name: &str| std::fs::read(dir.path().join(name).join("coeffs.csv")).unwrap();
    assert_eq!(read("flag"), read("direct"), "--seed must act like editing the config seed");
    assert_ne!(read("flag"), read("base"), "--seed must actually change the trajectory");
}

#[test]
fn out_dir_precedence_is_flag_env_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "config.json",
        &base_config(
            1.0,
            0.5,
            r#"{"kind": "constant", "t_a": 1.0, "t_s": 1.0}"#,
            r#"{"t_max": 0.5, "record_every": 0.25}"#,
            r#", "outputs": {"dir": "from_config"}"#,
        ),
    );
    let out = run_in(dir.path(), &["simulate", "--config", &config], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("from_config/energy.csv").exists());

    let out = run_in(dir.path(), &["simulate", "--config", &config], &[("EBM2_OUT", "from_env")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("from_env/energy.csv").exists());

    let out = run_in(
        dir.path(),
        &["simulate", "--config", &config, "--out", "from_flag"],
        &[("EBM2_OUT", "ignored_env")],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("from_flag/energy.csv").exists());
    assert!(!dir.path().join("ignored_env").exists());
}

#[test]
fn equilibria_seed_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "config.json",
        &base_config(
            1.0,
            0.5,
            r#"{"kind": "constant", "t_a": 1.0, "t_s": 1.0}"#,
            r#"{"t_max": 1.0}"#,
            "",
        ),
    );
    let out = run_in(dir.path(), &["equilibria", "--config", &config, "--out", "eq"], &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("eq/summary.json")).unwrap();
    assert!(summary.contains("\"monotone_warning\": false"));
    assert!(dir.path().join("eq/equilibrium.csv").exists());

    // Feed the stored state back in as a custom seed: Newton alone, and it
    // is already converged.
    let state = dir.path().join("eq/equilibrium_state.json");
    let out = run_in(
        dir.path(),
        &["equilibria", "--config", &config, "--out", "eq2", "--seed", state.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("eq2/summary.json")).unwrap();
    assert!(summary.contains("\"method\": \"newton\""));
    assert!(summary.contains("\"iterations\": 0"));

    let out = run_in(
        dir.path(),
        &["equilibria", "--config", &config, "--out", "eq3", "--seed", "no_such_file"],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn scan_reports_the_outcome_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "scan.json",
        &base_config(
            1.0,
            0.0,
            r#"{"kind": "constant", "t_a": 1.0, "t_s": 1.0}"#,
            r#"{"t_max": 20.0, "record_every": 0.5}"#,
            r#", "scan": {"parameter": "eps_a", "values": [1.9, 2.5]}"#,
        ),
    );
    let out = run_in(dir.path(), &["scan", "--config", &config, "--out", "s", "--jobs", "2"], &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("s/scan.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1.9,completed,"));
    assert!(lines[2].starts_with("2.5,blew_up,"));
    let summary = std::fs::read_to_string(dir.path().join("s/summary.json")).unwrap();
    assert!(summary.contains("\"largest_completed\": 1.9"));
    assert!(summary.contains("\"smallest_blew_up\": 2.5"));
}

#[test]
fn verify_core_passes_and_tightening_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["verify", "--suite", "core", "--out", "v", "--jobs", "2"], &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("v/verify_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 11, "10 checks plus a header");
    assert!(report.lines().skip(1).all(|l| l.contains(",true,")));

    let out = run_in(
        dir.path(),
        &["verify", "--suite", "core", "--out", "v2", "--tighten", "1e8"],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    let report = std::fs::read_to_string(dir.path().join("v2/verify_report.csv")).unwrap();
    assert!(report.lines().skip(1).any(|l| l.contains(",false,")));

    let out = run_in(dir.path(), &["verify", "--suite", "bogus"], &[]);
    assert_eq!(out.status.code(), Some(1));
}

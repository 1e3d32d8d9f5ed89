use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sfde-lab");

const SCALAR_OK: &str = r#"{"scalar": {"m": [0.5, 1.0], "eps": [0.1], "delta": [0.1], "r_step": 0.05, "pair_points": 21}}"#;

const SIMULATE: &str = r#"{
    "seed": 7,
    "paths": 3,
    "grid": {"n": 15},
    "initial": {"sine": {"mode": 1}},
    "noise": {"modes": [{"profile": {"constant": 0.5}}]},
    "solver": {"m": 0.5, "regularization": {"delta": 0.1}, "dt": 0.001, "t_end": 0.02},
    "simulate": {"csv_paths": 2}
}"#;

fn lab(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SFDE_LAB_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn passing_run_exits_zero_and_writes_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SCALAR_OK);
    let out = tmp.path().join("run");
    let o = lab(
        &[
            "scalar-verify",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("provenance.json").is_file());
    assert!(out.join("certificate.json").is_file());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["passed"], true);
}

#[test]
fn failing_assertion_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"paths": 2, "grid": {"n": 15}, "initial": {"sine": {"mode": 1}},
            "noise": {"modes": [{"profile": {"constant": 0.5}}]},
            "solver": {"m": 0.5, "regularization": {"delta": 0.1}, "dt": 0.001, "t_end": 0.02},
            "ladder": {"parameter": "delta", "values": [0.2, 0.1, 0.05], "slope_min": 50.0, "slope_max": 60.0}}"#,
    );
    let out = tmp.path().join("run");
    let o = lab(
        &["converge", "--config", &cfg, "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], false);
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{"grid": {"n": 15, "spacing": 0.1}}"#,
    );
    let o = lab(
        &[
            "simulate",
            "--config",
            &cfg,
            "--out",
            tmp.path().join("x").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("spacing"), "{err}");
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "config");
}

#[test]
fn missing_config_and_missing_section_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["simulate"], &[]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "c.json", r#"{"grid": {"n": 15}}"#);
    let o = lab(
        &[
            "contraction",
            "--config",
            &cfg,
            "--out",
            tmp.path().join("x").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn describe_prints_plan_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SIMULATE);
    let o = lab(&["describe", "--config", &cfg, "--kind", "simulate"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("simulate"), "{text}");
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1);
    assert_eq!(
        lab(&["describe", "--config", &cfg], &[]).status.code(),
        Some(2)
    );
}

#[test]
fn env_var_overrides_out_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SCALAR_OK);
    let flag = tmp.path().join("flag");
    let env = tmp.path().join("env");
    let o = lab(
        &[
            "scalar-verify",
            "--config",
            &cfg,
            "--out",
            flag.to_str().unwrap(),
        ],
        &[("SFDE_LAB_OUT", &env)],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(env.join("provenance.json").is_file());
    assert!(!flag.exists());
}

#[test]
fn seed_flag_changes_recorded_seeds_and_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SIMULATE);
    let run = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = lab(
            &[
                "simulate",
                "--config",
                &cfg,
                "--out",
                out.to_str().unwrap(),
                "--seed",
                seed,
            ],
            &[],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let prov: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("provenance.json")).unwrap())
                .unwrap();
        (
            prov["seeds"].clone(),
            fs::read(out.join("trajectory_0.csv")).unwrap(),
        )
    };
    let (s1, t1) = run("100", "a");
    let (s2, t2) = run("200", "b");
    assert_eq!(s1, serde_json::json!([100, 101, 102]));
    assert_eq!(s2, serde_json::json!([200, 201, 202]));
    assert_ne!(t1, t2);
}

#[test]
fn replay_is_identical_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SIMULATE);
    let run = tmp.path().join("run");
    let o = lab(
        &[
            "simulate",
            "--config",
            &cfg,
            "--out",
            run.to_str().unwrap(),
            "--threads",
            "1",
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let prov = run.join("provenance.json");

    let o = lab(&["replay", prov.to_str().unwrap(), "--threads", "4"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["identical"], true);
    for name in [
        "trajectory_0.csv",
        "trajectory_1.csv",
        "norms.csv",
        "energy.json",
        "summary.json",
    ] {
        assert_eq!(
            fs::read(run.join(name)).unwrap(),
            fs::read(run.join("replay").join(name)).unwrap(),
            "{name}"
        );
    }

    let original = fs::read_to_string(&prov).unwrap();
    let tampered = original.replacen("\"seed\": 7", "\"seed\": 8", 1);
    assert_ne!(tampered, original);
    fs::write(&prov, &tampered).unwrap();
    let o = lab(&["replay", prov.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mismatch"), "{}", stderr(&o));

    fs::write(&prov, &original).unwrap();
    fs::remove_file(run.join("norms.csv")).unwrap();
    let o = lab(&["replay", prov.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("norms.csv"), "{}", stderr(&o));
}

#[test]
fn edited_artifact_is_a_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SCALAR_OK);
    let run = tmp.path().join("run");
    assert_eq!(
        lab(
            &[
                "scalar-verify",
                "--config",
                &cfg,
                "--out",
                run.to_str().unwrap()
            ],
            &[]
        )
        .status
        .code(),
        Some(0)
    );
    fs::write(run.join("certificate.json"), b"{}").unwrap();
    let o = lab(
        &["replay", run.join("provenance.json").to_str().unwrap()],
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("certificate.json"), "{}", stderr(&o));
}

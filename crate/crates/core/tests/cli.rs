use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bdrelax"))
}

#[test]
fn sq_of_identity_is_root_two() {
    let out = bin().args(["sq", "--integrand", "abs-sym", "--A", "1,0;0,1", "--format", "json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["extrapolated"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-8);
    for key in ["command", "config-hash", "seed", "version"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"matrix": "A0", "mesh": [4, 8], "multistarts": 2}"#).unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let status = bin()
            .args(["mueller", "--seed", "5", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        (
            std::fs::read(out.join("mueller.csv")).unwrap(),
            std::fs::read(out.join("mueller.json")).unwrap(),
        )
    };
    let (c1, j1) = run("a");
    let (c2, j2) = run("b");
    assert_eq!(c1, c2);
    assert_eq!(j1, j2);
    let csv = String::from_utf8(c1).unwrap();
    assert!(csv.starts_with("mesh,value\n"));
    assert!(!csv.contains('\r'));
    let v: serde_json::Value = serde_json::from_slice(&j1).unwrap();
    assert_eq!(v["h"].as_f64(), Some(2.0));
    assert_eq!(v["witness"]["verified"].as_bool(), Some(true));
}

#[test]
fn command_line_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"A": [[1, 0], [0, 1]], "mesh": [4]}"#).unwrap();
    let out = bin()
        .args(["sq", "--format", "csv", "--A", "2,0;0,0", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    let csv = String::from_utf8(out.stdout).unwrap();
    let value: f64 = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((value - 2.0).abs() < 1e-8, "{csv}");
}

#[test]
fn validation_errors_exit_with_two() {
    assert_eq!(bin().args(["sq", "--no-such-flag"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["sq", "--integrand", "nope"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["sq", "--A", "1,2"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["frobnicate"]).output().unwrap().status.code(), Some(2));
    let bad_log = bin().env("BDRELAX_LOG", "chatty").args(["recession"]).output().unwrap();
    assert_eq!(bad_log.status.code(), Some(2));
}

#[test]
fn csv_columns_follow_the_command() {
    let korn = bin().args(["korn", "--format", "csv"]).output().unwrap();
    assert!(String::from_utf8(korn.stdout).unwrap().starts_with("eps,l1_residual,ev_mass,ratio\n"));
    let blowup = bin().args(["blowup", "--format", "csv", "--eps-schedule", "1/3,1/9", "--grid", "8"]).output().unwrap();
    assert_eq!(blowup.status.code(), Some(0));
    assert!(String::from_utf8(blowup.stdout).unwrap().starts_with("eps,emass,residual,beta\n"));
}

#[test]
fn represent_reports_all_parts() {
    let spec = r#"{"dim": 2, "jumps": [{"normal": [1, 0], "offset": 0.1, "delta": [0, 1]}]}"#;
    let out = bin().args(["represent", "--format", "json", "--bd-spec", spec]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let r = &v["representation"];
    assert!((r["jump"].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    assert_eq!(r["bulk"].as_f64(), Some(0.0));
}

//! Binary-level tests: exit codes, output formats, and reproducibility.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tension-lab"))
}

#[test]
fn enumerate_prints_embedded_config_and_count() {
    let out = bin()
        .args(["enumerate", "--m", "2", "--n", "3", "--s", "0,0", "--field", "zero"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let json_part = &text[..text.rfind('\n').map(|i| text[..i].rfind('\n').unwrap()).unwrap()];
    let doc: serde_json::Value = serde_json::from_str(json_part).unwrap();
    assert_eq!(doc["result"]["count"], serde_json::json!(2));
    assert_eq!(doc["config"]["n"], serde_json::json!(3));
}

#[test]
fn tension_writes_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let out = bin()
        .args([
            "tension", "--m", "1", "--s", "0", "--n", "201", "--field",
            r#"{"kind":"iid_uniform","c":0,"seed":1}"#, "--out",
        ])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "s_1,n,kind,value,stderr");
    let row = lines.next().unwrap();
    assert!(row.starts_with("0,201,fixed,-0.675"), "row: {row}");
}

#[test]
fn validation_failures_exit_2() {
    let out = bin()
        .args(["tension", "--m", "1", "--s", "1.5", "--n", "9", "--field", "zero"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_computations_exit_3() {
    let out = bin()
        .args(["enumerate", "--m", "2", "--n", "40", "--s", "0,0", "--field", "zero"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn identical_config_and_seed_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for path in [&a, &b] {
        let out = bin()
            .args([
                "sample", "--m", "2", "--n", "4", "--s", "0,0", "--field",
                r#"{"kind":"iid_uniform","c":0.5,"seed":7}"#, "--samples", "10", "--seed", "3",
                "--out",
            ])
            .arg(path)
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"m": 2, "n": 3, "s": [0.0, 0.0], "field": {"kind": "iid_uniform", "c": 0.0, "seed": 0}}"#,
    )
    .unwrap();
    // The config alone: count 2 on S_3.
    let out = bin().args(["enumerate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("count=2"), "{text}");
    // Flag overrides n: S_2 has a single extension.
    let out = bin().args(["enumerate", "--n", "2", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("count=1"), "{text}");
}

#[test]
fn binary_sample_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.bin");
    let out = bin()
        .args([
            "sample", "--m", "1", "--n", "5", "--s", "0", "--field", "zero", "--samples", "2",
            "--seed", "1", "--format", "bin", "--out",
        ])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let bytes = std::fs::read(&path).unwrap();
    // u32 m, m i32 lo, m i32 hi, then 2 samples x 5 sites x i32.
    assert_eq!(bytes.len(), 4 + 4 + 4 + 2 * 5 * 4);
    assert_eq!(u32::from_le_bytes(bytes[0..4].try_into().unwrap()), 1);
    assert_eq!(i32::from_le_bytes(bytes[4..8].try_into().unwrap()), 0);
    assert_eq!(i32::from_le_bytes(bytes[8..12].try_into().unwrap()), 5);
    // Heights obey the +-1 step constraint.
    for s in 0..2 {
        let base = 12 + s * 20;
        let h: Vec<i32> = (0..5)
            .map(|i| i32::from_le_bytes(bytes[base + 4 * i..base + 4 * i + 4].try_into().unwrap()))
            .collect();
        for w in h.windows(2) {
            assert_eq!((w[0] - w[1]).abs(), 1);
        }
    }
}

#[test]
fn solve_writes_profile_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("p.csv");
    let report = dir.path().join("r.json");
    let out = bin()
        .args([
            "solve", "--region", "unit-interval", "--eps", "0.125", "--boundary",
            "affine:0.5", "--table", "quadratic:1,17", "--max-iters", "500",
        ])
        .args(["--out".as_ref(), profile.as_os_str(), "--report".as_ref(), report.as_os_str()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&profile).unwrap();
    assert!(text.starts_with("x_1,h"));
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(rep["result"]["final_entropy"].as_f64().unwrap() < 0.26);
    assert!(rep["result"]["entropy_trace"].is_array());
}

#[test]
fn validate_lists_violations_and_exits_2() {
    let out = bin()
        .args(["validate", "--command", "sandwich", "--s", "1.0,0", "--n", "6"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("|s|_inf < 1"), "{text}");
}

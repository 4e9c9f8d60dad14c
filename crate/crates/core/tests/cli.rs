use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_newton-switch"));
    c.env_remove("NEWTON_SWITCH_THREADS");
    c
}

#[test]
fn basins_writes_ppm_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (ppm, csv) = (dir.path().join("b.ppm"), dir.path().join("s.csv"));
    let out = bin()
        .args(["basins", "--res", "24,16", "--mode", "NANS", "--out"])
        .arg(&ppm)
        .arg("--csv")
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(&ppm).unwrap();
    assert!(bytes.starts_with(b"P6\n24 16\n255\n"));
    assert_eq!(bytes.len(), 13 + 3 * 24 * 16);
    let stats = std::fs::read_to_string(&csv).unwrap();
    assert!(stats.starts_with("metric,NANS\r\nconvergent,"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hint: convert"));
}

#[test]
fn repeated_runs_give_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("1.ppm"), dir.path().join("2.ppm")];
    for (p, workers) in paths.iter().zip(["1", "3"]) {
        let st = bin().args(["basins", "--res", "20", "--out"]).arg(p).env("NEWTON_SWITCH_THREADS", workers).output().unwrap().status;
        assert!(st.success());
    }
    assert_eq!(std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
}

#[test]
fn table1_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let st = bin().args(["table1", "--res", "6,6", "--out"]).arg(&path).output().unwrap().status;
    assert!(st.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<&str> = text.split("\r\n").collect();
    assert_eq!(rows[0], "metric,AS,ANS,NANS,NAS");
    assert!(rows[1].starts_with("convergent,"));
    assert!(rows[2].starts_with("complexity,") && rows[2].split(',').nth(3) == Some("1.00"));
}

#[test]
fn solve_trace_and_warning() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.json");
    let out = bin().args(["solve", "--x0", "2,0", "--mode", "NAS", "--tau", "0.01", "--trace"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: --tau is ignored"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["mode"], "NAS");
    assert_eq!(v["outcome"], "Converged");
}

#[test]
fn field_and_certify() {
    let out = bin().args(["field", "--transformed", "--res", "3,3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().nth(5).unwrap().ends_with(",1"), "origin is singular");

    let out = bin().args(["certify", "--x0", "1.05,0.02", "--samples", "200"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict:    true"));
}

#[test]
fn exit_codes() {
    assert_eq!(bin().args(["solve", "--mode", "XYZ"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["solve", "--unknown"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["solve", "--x0", "1,2,3"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["basins", "--res", "0,3"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

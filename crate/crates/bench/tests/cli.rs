use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cgp-lingam"))
}

#[test]
fn malformed_series_exits_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x0,x1\n1.0,2.0\n3.0,oops\n").unwrap();
    let out = bin()
        .args(["fit", path.to_str().unwrap(), "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn missing_series_exits_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["select-order", "/nonexistent/series.csv", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_writes_manifested_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["generate", "--samples", "100", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["file"] == "series.csv"));
    let series = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 101);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn run(input: &Path, out: &Path, extra: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_kstab"))
        .arg("run")
        .arg("--input")
        .arg(input)
        .arg("--out")
        .arg(out)
        .args(extra)
        .status()
        .expect("spawn kstab")
        .code()
        .unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn futaki_run_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&problem("flat_1d_futaki.json"), dir.path(), &[]), 0);
    let m = read_json(&dir.path().join("manifest.json"));
    assert_eq!(m["exit_code"], 0);
    for f in m["files"].as_array().unwrap() {
        let name = f["name"].as_str().unwrap();
        let len = fs::metadata(dir.path().join(name)).unwrap().len();
        assert_eq!(f["bytes"].as_u64(), Some(len), "{name}");
    }
    let csv = fs::read_to_string(dir.path().join("futaki.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&problem("malformed.json"), dir.path(), &[]), 2);
    let e = read_json(&dir.path().join("error.json"));
    assert!(e.to_string().contains("primitive"));
}

#[test]
fn divergent_integral_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat_v.json");
    fs::write(
        &input,
        r#"{
            "polyhedron": {"dim": 1, "halfspaces": [{"normal": [1], "offset": "1"}]},
            "weights": {"kind": "explicit",
                "v": {"terms": [{"poly": {"coeffs": [[[0], "1"]]}, "decay": ["0"]}]},
                "w": {"terms": [{"poly": {"coeffs": [[[0], "1"]]}, "decay": ["0"]}]}},
            "task": {"kind": "futaki", "x0": ["0"]}
        }"#,
    )
    .unwrap();
    assert_eq!(run(&input, &dir.path().join("out"), &[]), 3);
}

#[test]
fn output_does_not_depend_on_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let p = problem("flat_c2_abreu.json");
    assert_eq!(run(&p, a.path(), &["--threads", "1"]), 0);
    assert_eq!(run(&p, b.path(), &["--threads", "4"]), 0);
    let m = read_json(&a.path().join("manifest.json"));
    for f in m["files"].as_array().unwrap() {
        let name = f["name"].as_str().unwrap();
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn reproduce_flat_case() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_kstab"))
        .args(["reproduce", "--case", "flat_1d", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(read_json(&dir.path().join("report.json"))["pass"], true);
}

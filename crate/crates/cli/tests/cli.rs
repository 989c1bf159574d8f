use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn catsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_report(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().expect("error report")).expect("report is JSON")
}

fn result(dir: &Path, name: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap();
    serde_json::from_str::<Value>(&text).unwrap()["result"].clone()
}

#[test]
fn list_covers_each_figure_kind() {
    let o = catsim(&["list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["fig2_enhanced_tomography", "fig9_pulse_opt", "x_gate_sweep", "squeezing_sweep", "zeno_y_gate"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn bundled_scenarios_validate() {
    let list = String::from_utf8(catsim(&["list"]).stdout).unwrap();
    for line in list.lines() {
        let name = line.split('\t').next().unwrap();
        let o = catsim(&["validate", name]);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn malformed_file_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"name\": \"bad\",\n  \"kind\": \"stabilize\"\n  \"dims\": [20, 1]\n}\n").unwrap();
    let o = catsim(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let r = stderr_report(&o);
    assert_eq!(r["error"], "schema");
    assert_eq!(r["line"], 4);
}

#[test]
fn missing_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, r#"{"name": "s", "kind": "gate_z", "dims": [20, 1], "settings": {"alpha": 2.0}}"#).unwrap();
    let o = catsim(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_report(&o)["message"].as_str().unwrap().contains("thetas"));
}

#[test]
fn large_cat_in_small_space_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.json");
    std::fs::write(
        &path,
        r#"{"name": "big", "kind": "stabilize", "dims": [20, 1], "settings": {"alpha": 5.0, "duration_ns": 100}}"#,
    )
    .unwrap();
    let o = catsim(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let r = stderr_report(&o);
    assert_eq!(r["required_dim"], 46);
    assert_eq!(r["dim"], 20);
}

#[test]
fn dims_flag_overrides_scenario() {
    let o = catsim(&["validate", "stabilize_cat", "--dims", "8,1"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn enhanced_tomography_beats_ramsey_at_origin() {
    let dir = tempfile::tempdir().unwrap();
    let o = catsim(&["run", "fig2_enhanced_tomography", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(dir.path(), "fig2_enhanced_tomography");
    let enhanced = r["protocols"]["ramsey_enhanced"]["w_at_origin"].as_f64().unwrap();
    let ramsey = r["protocols"]["ramsey"]["w_at_origin"].as_f64().unwrap();
    assert!(enhanced > ramsey, "{enhanced} vs {ramsey}");
    for tag in ["ideal", "ramsey", "ramsey_enhanced"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("fig2_enhanced_tomography.{tag}.wigner.csv"))).unwrap();
        assert!(csv.lines().any(|l| l == "re,im,w"));
        assert!(csv.starts_with("# toolkit: catsim"));
    }
}

#[test]
fn runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = catsim(&["run", "reconstruct_random", "--out-dir", d.path().to_str().unwrap(), "--threads", "3"]);
        assert!(o.status.success());
    }
    for f in ["reconstruct_random.json", "reconstruct_random.reconstruct.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
    let r = result(a.path(), "reconstruct_random");
    assert!(r["max_trace_distance"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn metadata_carries_hash_and_params() {
    let dir = tempfile::tempdir().unwrap();
    let o = catsim(&["run", "reconstruct_random", "--out-dir", dir.path().to_str().unwrap()]);
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    let text = std::fs::read_to_string(dir.path().join("reconstruct_random.json")).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["metadata"]["scenario_sha256"], printed["sha256"]);
    assert_eq!(doc["metadata"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["metadata"]["params"]["kappa2_over_2pi_MHz"], 2.16);
}

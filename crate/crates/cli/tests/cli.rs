use std::fs;
use std::process::Command;

fn relaybf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relaybf"))
}

const SMALL_SPEC: &str = r#"
name = "small"
relay_power_db = [10.0]
rho = [0.3]
n_t = [2]
relay_antennas = [2]
n_relays = [2]
methods = ["perfect_optimal", "nonrobust", "simplified_robust"]
n_trials = 2
"#;

#[test]
fn run_spec_file_writes_csv_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("small.toml");
    fs::write(&spec, SMALL_SPEC).unwrap();
    let out = dir.path().join("out");
    let status = relaybf()
        .args(["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "9", "--threads", "1"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = fs::read_to_string(out.join("small.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("relay_power_db,rho,method,mean_snr_db"));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["base_seed"], 9);
    assert_eq!(meta["n_trials"], 2);
}

#[test]
fn json_spec_and_trial_override() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("small.json");
    fs::write(
        &spec,
        r#"{"name": "j", "relay_power_db": [5.0], "rho": [0.0], "n_t": [1], "relay_antennas": [1],
            "n_relays": [2], "methods": ["nonrobust"], "n_trials": 50}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status =
        relaybf().args(["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--trials", "3"]).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["n_trials"], 3);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("small.toml");
    fs::write(&spec, SMALL_SPEC).unwrap();
    let mut outputs = Vec::new();
    for (k, threads) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        let status = relaybf()
            .args(["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads])
            .output()
            .unwrap();
        assert!(status.status.success());
        outputs.push(fs::read(out.join("small.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn unknown_spec_is_an_error() {
    let out = relaybf().args(["run", "no_such_preset"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("neither a preset"));
}

#[test]
fn presets_are_listed() {
    let out = relaybf().arg("presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["fig3", "fig8"] {
        assert!(text.lines().any(|l| l == name));
    }
}

#[test]
fn verify_reports_every_check() {
    let out = relaybf().arg("verify").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().filter(|l| l.starts_with("PASS ")).count() >= 6);
    assert!(!text.contains("FAIL"));
}

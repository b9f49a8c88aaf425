use serde_json::{json, Value};
use std::path::Path;
use std::process::{Command, Output};

fn gamecode(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gamecode"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GAMECODE_OUT")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, doc: &Value) -> String {
    let path = dir.join("run.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("{}", String::from_utf8_lossy(&out.stderr)))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn minimal() -> Value {
    json!({
        "honest_noise": { "kind": "uniform", "delta": 1.0 },
        "utility": {
            "adversary": { "family": "scaled_product", "c": 1.0 },
            "dc": { "family": "linear", "gamma": 0.5 }
        }
    })
}

#[test]
fn unknown_command_prints_usage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gamecode(&["frobnicate"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn eta_below_two_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut doc = minimal();
    doc["eta"] = json!(1.5);
    let cfg = write_config(tmp.path(), &doc);
    let out = gamecode(&["--config", &cfg, "solve"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = &stderr_json(&out)["error"];
    assert_eq!(err["pointer"], "/eta");
    assert!(err["message"].as_str().unwrap().contains("eta >= 2"));
}

#[test]
fn missing_utility_names_required_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &json!({ "honest_noise": { "kind": "uniform", "delta": 1.0 } }),
    );
    let out = gamecode(&["--config", &cfg, "validate-noise"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr_json(&out)["error"]["message"].as_str().unwrap().to_owned();
    assert!(msg.contains("utility") && msg.contains("honest_noise"), "{msg}");
}

#[test]
fn resolved_config_fills_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &minimal());
    let out = gamecode(&["--config", &cfg, "--out", "o", "validate-noise"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = read_json(&tmp.path().join("o/resolved_config.json"));
    assert_eq!(resolved["simulation"]["trials"], 200_000);
    assert_eq!(resolved["utility"]["m_max"], 100.0);
    let report = read_json(&tmp.path().join("o/noise_validation.json"));
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn output_dir_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let mut doc = minimal();
    doc["output_dir"] = json!("from-config");
    let cfg = write_config(tmp.path(), &doc);
    gamecode(&["--config", &cfg, "validate-noise"], tmp.path());
    assert!(tmp.path().join("from-config/noise_validation.json").exists());
    gamecode(&["--config", &cfg, "--out", "from-flag", "validate-noise"], tmp.path());
    assert!(tmp.path().join("from-flag/noise_validation.json").exists());
    gamecode(&["validate-noise"], tmp.path());
    assert!(tmp.path().join("gamecode-out/noise_validation.json").exists());
}

#[test]
fn adversary_at_half_acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gamecode(&["--out", "o", "adversary", "--alpha", "0.5", "--eta", "2"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let doc = read_json(&tmp.path().join("o/adversary.json"));
    let atoms = doc["atoms"].as_array().unwrap();
    assert_eq!(atoms.len(), 2);
    for a in atoms {
        assert!((a["z"].as_f64().unwrap().abs() - 2.0).abs() < 1e-9);
        assert!((a["weight"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    }
    assert!((doc["c_alpha"].as_f64().unwrap() - 19.0 / 12.0).abs() < 1e-9);
}

#[test]
fn simulate_appends_rows_and_reads_adversary_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mut doc = minimal();
    doc["simulation"] = json!({ "trials": 5000, "eta": 2.0, "alpha": 0.5 });
    let cfg = write_config(tmp.path(), &doc);
    for n in ["2", "4"] {
        let out = gamecode(&["--config", &cfg, "--out", "o", "simulate", "--nodes", n], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = std::fs::read_to_string(tmp.path().join("o/simulations.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("N,eta,alpha,pa_hat"));

    let adv = tmp.path().join("adv.json");
    std::fs::write(&adv, r#"{"atoms": [{"z": 0.0, "weight": 1.0}]}"#).unwrap();
    let out = gamecode(
        &[
            "--config",
            &cfg,
            "--out",
            "o",
            "simulate",
            "--adversary",
            adv.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sim = read_json(&tmp.path().join("o/simulation.json"));
    assert_eq!(sim["result"]["pa_hat"], 1.0);

    std::fs::write(&adv, r#"{"atoms": [{"z": 1.0, "weight": 0.4}]}"#).unwrap();
    let out = gamecode(
        &[
            "--config",
            &cfg,
            "--out",
            "o",
            "simulate",
            "--adversary",
            adv.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut doc = minimal();
    doc["eta_grid"] = json!({ "start": 2.0, "stop": 3.0, "step": 0.5 });
    let cfg = write_config(tmp.path(), &doc);
    let mut seen = Vec::new();
    for dir in ["a", "b"] {
        let out = gamecode(&["--config", &cfg, "--out", dir, "solve"], tmp.path());
        assert_eq!(out.status.code(), Some(0));
        seen.push(std::fs::read(tmp.path().join(dir).join("equilibrium.json")).unwrap());
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn tradeoff_respects_alpha_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gamecode(&["--out", "o", "tradeoff", "--alphas", "0.25,0.5,1"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("o/tradeoff.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

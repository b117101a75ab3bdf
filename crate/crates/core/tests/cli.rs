use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn homsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("HOMSIM_THREADS")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn jsa_default_grid_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = homsim(dir.path(), &["jsa", "--out", "q.csv"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("q.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "nu_s,nu_i,re_q,im_q,abs2_q");
    assert_eq!(text.lines().count(), 65 * 65 + 1);
    let manifest = json(&dir.path().join("q.manifest.json"));
    assert_eq!(manifest["command"], "jsa");
    assert!(manifest["config"]["sigma_p_rad_per_ps"].as_f64().unwrap() > 0.0);
}

#[test]
fn jsa_span_and_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = homsim(
        dir.path(),
        &["jsa", "--span", "4", "--n", "33", "--out", "q.csv"],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("q.csv")).unwrap();
    let nu_s: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(nu_s.len(), 33 * 33);
    let manifest = json(&dir.path().join("q.manifest.json"));
    let filter = &manifest["config"]["signal_filter"];
    assert_eq!(filter["shape"], "gaussian");
    let sigma_0 = filter["sigma"].as_f64().unwrap();
    assert!((nu_s[0] + 4.0 * sigma_0).abs() < 1e-12);
    assert!((nu_s[nu_s.len() - 1] - 4.0 * sigma_0).abs() < 1e-12);
}

#[test]
fn missing_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = homsim(
        dir.path(),
        &["jsa", "--config", "absent.json", "--out", "q.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));
}

#[test]
fn unwritable_output_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = homsim(
        dir.path(),
        &["jsa", "--n", "5", "--out", "no/such/dir/q.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "length_m": 150.0, "beta2_ps2_per_km": -0.116, "gamma_per_W_m": 0.0018,
        "peak_power_W": 0.36, "lambda_p1_nm": 1555.92, "lambda_p2_nm": 1545.95,
        "pump_fwhm_nm": 0.8, "filter": {"signal": {"shape": "gaussian", "fwhm_nm": 0.8}}
    }"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let out = homsim(
        dir.path(),
        &[
            "dip",
            "--config",
            "cfg.json",
            "--peak-power-w",
            "0.5",
            "--out",
            "d.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = json(&dir.path().join("d.manifest.json"));
    assert_eq!(manifest["lab_config"]["length_m"], 150.0);
    assert_eq!(manifest["lab_config"]["peak_power_W"], 0.5);

    std::fs::write(dir.path().join("bad.json"), r#"{"length_m": 1}"#).unwrap();
    let out = homsim(
        dir.path(),
        &["dip", "--config", "bad.json", "--out", "d.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dip_engines_report_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = homsim(
        dir.path(),
        &["dip", "--engine", "gaussian", "--out", "g.csv"],
    );
    assert!(out.status.success());
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((m["visibility"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert!((m["fwhm_ps"].as_f64().unwrap() - 6.4).abs() < 0.3);
    assert_eq!(m["engine"], "gaussian_closed");
    assert!(dir.path().join("g.metrics.json").exists());
    let text = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "delay_ps,rate_normalized");
    assert_eq!(text.lines().count(), 302);

    let out = homsim(
        dir.path(),
        &["dip", "--engine", "supergaussian", "--out", "s.csv"],
    );
    assert!(out.status.success());
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((m["fwhm_ps"].as_f64().unwrap() - 8.0).abs() < 0.4);
    let manifest = json(&dir.path().join("s.manifest.json"));
    let notes = manifest["notes"].to_string();
    assert!(notes.contains("calibrated"), "{notes}");
}

#[test]
fn mismatched_filters_lower_visibility() {
    let dir = tempfile::tempdir().unwrap();
    let out = homsim(
        dir.path(),
        &[
            "dip",
            "--engine",
            "general",
            "--filter-mismatch",
            "0.1",
            "--step-ps",
            "0.5",
            "--out",
            "m.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(m["visibility"].as_f64().unwrap() < 1.0);
    assert_eq!(m["engine"], "asymmetric");

    let out = homsim(
        dir.path(),
        &[
            "dip",
            "--engine",
            "gaussian",
            "--filter-mismatch",
            "0.1",
            "--out",
            "x.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    for (threads, name) in [("1", "a"), ("4", "b")] {
        for cmd in ["jsa", "dip"] {
            let out_name = format!("{cmd}_{name}.csv");
            let out = homsim(dir.path(), &[cmd, "--threads", threads, "--out", &out_name]);
            assert!(out.status.success());
        }
    }
    for cmd in ["jsa", "dip"] {
        let a = std::fs::read(dir.path().join(format!("{cmd}_a.csv"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("{cmd}_b.csv"))).unwrap();
        assert_eq!(a, b, "{cmd}");
    }
}

#[test]
fn fit_gaussian_dip_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let w = 7.2 / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let mut csv = String::from("delay_ps,counts\n");
    for k in 0..=60 {
        let t = -15.0 + 0.5 * k as f64;
        let c = 1000.0 * (1.0 - 0.943 * (-t * t / (2.0 * w * w)).exp());
        csv.push_str(&format!("{t},{c}\n"));
    }
    std::fs::write(dir.path().join("data.csv"), csv).unwrap();
    let out = homsim(
        dir.path(),
        &[
            "fit",
            "--mode",
            "gaussian-dip",
            "--data",
            "data.csv",
            "--out",
            "fit.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fit = json(&dir.path().join("fit.json"));
    assert!((fit["params"]["visibility"].as_f64().unwrap() - 0.943).abs() < 1e-8);
    assert!((fit["params"]["fwhm_ps"].as_f64().unwrap() - 7.2).abs() < 1e-8);
    assert_eq!(fit["curve"]["delays_ps"].as_array().unwrap().len(), 1001);
    assert!(dir.path().join("fit.manifest.json").exists());

    let out = homsim(
        dir.path(),
        &[
            "fit", "--mode", "model", "--engine", "gaussian", "--data", "data.csv", "--out",
            "m.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fit = json(&dir.path().join("m.json"));
    assert!(fit["params"]["scale"].as_f64().unwrap() > 0.9);

    let out = homsim(
        dir.path(),
        &["fit", "--data", "missing.csv", "--out", "f.json"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn overlap_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = homsim(
        dir.path(),
        &[
            "overlap",
            "--target",
            "0.943",
            "--d-mm",
            "5",
            "--lambda-nm",
            "1550",
            "--out",
            "o.json",
        ],
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("urad"));
    let r = json(&dir.path().join("o.json"));
    assert!((r["overlap"].as_f64().unwrap() - 0.943).abs() < 1e-10);
    assert!(dir.path().join("o.manifest.json").exists());

    let out = homsim(
        dir.path(),
        &["overlap-solve", "--theta-urad", "0", "--out", "z.json"],
    );
    assert!(out.status.success());
    assert_eq!(json(&dir.path().join("z.json"))["overlap"], 1.0);

    let out = homsim(
        dir.path(),
        &["overlap", "--target", "1.5", "--out", "bad.json"],
    );
    assert_eq!(out.status.code(), Some(2));
}

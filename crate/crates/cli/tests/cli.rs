use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uplink-qkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn keys(v: &Value) -> Vec<&str> {
    let mut k: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    k.sort_unstable();
    k
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn rates_reports_configured_qber() {
    let v = stdout_json(&run(&["rates", "--pump-mw", "1", "--fiber-km", "0"]));
    assert_eq!(
        keys(&v),
        ["cc_accidental", "cc_total", "cc_true", "qber", "qx", "singles_fib", "singles_sat", "skr"]
    );
    let qber = v["qber"].as_f64().unwrap();
    // Intrinsic 1.7 % plus a few tenths of a percent from accidentals.
    assert!((0.017..0.022).contains(&qber), "{qber}");
}

#[test]
fn invalid_values_name_the_field() {
    let out = run(&["rates", "--pump-mw", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("source.pump_power_mw"));
}

#[test]
fn missing_parameter_file_names_the_path() {
    let out = run(&["--params", "/nonexistent/link.json", "rates"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/link.json"));
}

#[test]
fn parameter_files_in_both_syntaxes() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("link.json");
    let toml = dir.path().join("link.toml");
    std::fs::write(&json, r#"{"source": {"pump_power_mw": 2.0}, "channel": {"fiber_length_km": 0.0}}"#).unwrap();
    std::fs::write(&toml, "[source]\npump_power_mw = 2.0\n[channel]\nfiber_length_km = 0.0\n").unwrap();
    let a = stdout_json(&run(&["--params", path_str(&json), "rates"]));
    let b = stdout_json(&run(&["--params", path_str(&toml), "rates"]));
    assert_eq!(a, b);
    let c = stdout_json(&run(&["rates", "--pump-mw", "2", "--fiber-km", "0"]));
    assert_eq!(a, c);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"source": {"pump_power": 2.0}}"#).unwrap();
    let out = run(&["--params", path_str(&bad), "rates"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pump_power"));
}

#[test]
fn shoulder_csv_matches_rates() {
    let out = run(&["shoulder", "--pump-mw", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("loss_db,pump_mw,skr_bps,qber,qx"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 51);
    assert!(rows[0][2] > 0.0);
    assert_eq!(rows[50][2], 0.0);

    let row = &rows[20];
    let v = stdout_json(&run(&["rates", "--pump-mw", "5", "--loss-db", "20"]));
    assert_eq!(row[0], 20.0);
    assert_eq!(row[2], v["skr"].as_f64().unwrap());
    assert_eq!(row[3], v["qber"].as_f64().unwrap());

    let single = run(&["shoulder", "--loss-min-db", "30", "--loss-max-db", "30", "--format", "json"]);
    let v: Value = serde_json::from_slice(&single.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(keys(&rows[0]), ["loss_db", "pump_mw", "qber", "qx", "skr_bps"]);
}

#[test]
fn simulate_then_count() {
    let dir = tempfile::tempdir().unwrap();
    let sat = dir.path().join("sat.qtag");
    let fib = dir.path().join("fib.qtag");
    let sim = |seed: &str| {
        let out = run(&[
            "simulate", "--loss-db", "10", "--duration-s", "2", "--seed", seed,
            "--sat-out", path_str(&sat), "--fib-out", path_str(&fib),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (std::fs::read(&sat).unwrap(), std::fs::read(&fib).unwrap())
    };
    let first = sim("4");
    assert_eq!(first, sim("4"));
    assert_eq!(&first.0[..6], b"QTAG\x01\x00");
    assert_eq!(&first.1[..6], b"QTAG\x01\x01");

    let v = stdout_json(&run(&[
        "coincidences", "--sat", path_str(&sat), "--fib", path_str(&fib), "--duration-s", "2",
    ]));
    let rec = &v.as_array().unwrap()[0];
    assert_eq!(
        keys(rec),
        ["cc", "duration_s", "heralding", "qber", "qx", "skr_bps", "window_ps"]
    );
    // Configured intrinsic error within 4 sigma (accidentals are negligible at 10 dB).
    let n = rec["cc"].as_f64().unwrap() / 2.0;
    let qber = rec["qber"].as_f64().unwrap();
    assert!((qber - 0.017).abs() < 4.0 * (0.017 * 0.983 / n).sqrt() + 1e-3, "{qber}");

    let v = stdout_json(&run(&[
        "coincidences", "--sat", path_str(&sat), "--fib", path_str(&fib), "--windows", "0:2000:50",
    ]));
    let recs = v.as_array().unwrap();
    assert_eq!(recs.len(), 41);
    let cc: Vec<u64> = recs.iter().map(|r| r["cc"].as_u64().unwrap()).collect();
    assert!(cc.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(recs[40]["window_ps"].as_f64(), Some(2000.0));
}

#[test]
fn csv_tags_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let sat = dir.path().join("sat.csv");
    let fib = dir.path().join("fib.csv");
    let out = run(&[
        "simulate", "--loss-db", "10", "--duration-s", "0.5", "--tag-format", "csv",
        "--sat-out", path_str(&sat), "--fib-out", path_str(&fib),
    ]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(&sat).unwrap().starts_with("timestamp_ps,channel\n"));
    let v = stdout_json(&run(&["coincidences", "--sat", path_str(&sat), "--fib", path_str(&fib)]));
    assert!(v[0]["cc"].as_u64().unwrap() > 0);
}

#[test]
fn simulate_rejects_zero_duration() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.qtag");
    let out = run(&["simulate", "--duration-s", "0", "--sat-out", path_str(&p), "--fib-out", path_str(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duration_s"));
}

#[test]
fn empty_tags_give_no_result() {
    let dir = tempfile::tempdir().unwrap();
    let sat = dir.path().join("sat.csv");
    let fib = dir.path().join("fib.csv");
    std::fs::write(&sat, "timestamp_ps,channel\n100,0\n").unwrap();
    std::fs::write(&fib, "timestamp_ps,channel\n90000,0\n").unwrap();
    let out = run(&["coincidences", "--sat", path_str(&sat), "--fib", path_str(&fib)]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["cc"], 0);
    assert!(v[0]["qber"].is_null());

    std::fs::write(&fib, "timestamp_ps,channel\n500,0\n100,0\n").unwrap();
    let out = run(&["coincidences", "--sat", path_str(&sat), "--fib", path_str(&fib)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn overpass_fixed_and_optimized() {
    let dir = tempfile::tempdir().unwrap();
    let steps = dir.path().join("steps.csv");
    let fixed = stdout_json(&run(&[
        "overpass", "--correction-db", "8.9", "--fiber-km", "10", "--pump-mw", "5",
        "--steps-csv", path_str(&steps),
    ]));
    assert_eq!(
        keys(&fixed),
        ["correction_db", "optimized", "peak_skr_bps", "series", "total_key_bits"]
    );
    let step = &fixed["series"][0];
    assert_eq!(keys(step), ["loss_db", "pump_mw", "skr_bps", "t_s", "window_ps"]);
    let total = fixed["total_key_bits"].as_f64().unwrap();
    assert!(total > 522.3 && total < 52_230.0, "{total}");
    let csv = std::fs::read_to_string(&steps).unwrap();
    assert!(csv.starts_with("t_s,loss_db,skr_bps,pump_mw,window_ps\n"));
    assert_eq!(csv.lines().count(), fixed["series"].as_array().unwrap().len() + 1);

    let opt = stdout_json(&run(&[
        "overpass", "--correction-db", "8.9", "--fiber-km", "10", "--pump-mw", "5", "--optimize",
    ]));
    assert!(opt["total_key_bits"].as_f64().unwrap() >= total);
    assert_eq!(opt["optimized"], true);
}

#[test]
fn overpass_constant_profile() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("flat.csv");
    std::fs::write(&profile, "t_s,loss_db\n0,30\n50,30\n100,30\n").unwrap();
    let v = stdout_json(&run(&["overpass", "--profile", path_str(&profile)]));
    let r = stdout_json(&run(&["rates", "--loss-db", "30"]));
    let skr = r["skr"].as_f64().unwrap();
    let total = v["total_key_bits"].as_f64().unwrap();
    assert!((total - 100.0 * skr).abs() <= 1e-9 * total);

    std::fs::write(&profile, "0,30\n0,31\n").unwrap();
    let out = run(&["overpass", "--profile", path_str(&profile)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use num_complex::Complex64;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_absorber"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Loads a fixture config, applies `edit`, and stores it in `dir`.
fn config_with(dir: &Path, base: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(fixture(base)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(format!("cfg_{}", base));
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

/// Reads a CSV into header and rows.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn row_at(rows: &[Vec<f64>], f: f64) -> &Vec<f64> {
    rows.iter().find(|r| (r[0] - f).abs() < 1e-9).unwrap_or_else(|| panic!("no row at {f}"))
}

#[test]
fn design_writes_stable_report_and_cascades() {
    let tmp = TempDir::new().unwrap();
    ok(&["design", "--config", s(&fixture("table1_1dof.json")), "--out", s(tmp.path())]);
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("stability.json")).unwrap()).unwrap();
    assert_eq!(rep["stable"], Value::Bool(true));
    for f in ["h1_sos.json", "h2_sos.json"] {
        let sos: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join(f)).unwrap()).unwrap();
        assert_eq!(sos["fs_hz"].as_f64(), Some(50_000.0));
        let first = &sos["sections"][0];
        for key in ["b0", "b1", "b2", "a1", "a2"] {
            assert!(first[key].is_number(), "{f}: {key}");
        }
    }
}

#[test]
fn zero_gain_gives_zero_h2_cascade() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(tmp.path(), "table1_1dof.json", |v| v["control"]["kg"] = 0.0.into());
    ok(&["design", "--config", s(&cfg), "--out", s(tmp.path())]);
    let sos: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("h2_sos.json")).unwrap()).unwrap();
    assert_eq!(sos["gain"].as_f64(), Some(0.0));
    assert_eq!(sos["sections"].as_array().unwrap().len(), 0);
}

#[test]
fn design_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        ok(&["design", "--config", s(&fixture("table1_broadband.json")), "--out", s(d.path())]);
    }
    for f in ["controller.json", "h1_sos.json", "h2_sos.json", "stability.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

fn small_mc(v: &mut Value, seed: u64) {
    v["montecarlo"]["n_draws"] = 2000.into();
    v["montecarlo"]["seed"] = seed.into();
}

#[test]
fn montecarlo_feedback_narrows_band_at_resonance() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(tmp.path(), "table1_1dof.json", |v| small_mc(v, 11));
    ok(&["montecarlo", "--config", s(&cfg), "--out", s(tmp.path())]);
    let width = |file: &str| {
        let (h, rows) = read_csv(&tmp.path().join(file));
        let r = row_at(&rows, 205.5);
        r[col(&h, "alpha_q3")] - r[col(&h, "alpha_q1")]
    };
    let (ff, mixed) = (width("mc_feedforward.csv"), width("mc_mixed.csv"));
    assert!(mixed * 2.0 < ff, "{mixed} vs {ff}");
}

#[test]
fn montecarlo_is_reproducible_and_seed_flag_applies() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    let cfg = config_with(a.path(), "table1_1dof.json", |v| small_mc(v, 1));
    ok(&["montecarlo", "--config", s(&cfg), "--out", s(a.path())]);
    ok(&["montecarlo", "--config", s(&cfg), "--out", s(b.path()), "--threads", "1"]);
    ok(&["montecarlo", "--config", s(&cfg), "--out", s(c.path()), "--seed", "2"]);
    let read = |d: &TempDir| std::fs::read(d.path().join("mc_mixed.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn montecarlo_without_spread_returns_nominal() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(tmp.path(), "table1_2dof.json", |v| {
        small_mc(v, 0);
        v["montecarlo"]["n_draws"] = 5.into();
        v["montecarlo"]["rel_std"] = 0.0.into();
    });
    ok(&["montecarlo", "--config", s(&cfg), "--out", s(tmp.path())]);
    let (h, rows) = read_csv(&tmp.path().join("mc_mixed.csv"));
    for r in rows {
        let nominal = r[col(&h, "alpha_nominal")];
        // the nominal curve is the target's; draws go through the loop formula
        assert!((r[col(&h, "alpha_q1")] - nominal).abs() < 1e-9);
        assert!((r[col(&h, "alpha_q3")] - nominal).abs() < 1e-9);
    }
}

#[test]
fn montecarlo_broadband_bands_nearly_coincide_away_from_resonance() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(tmp.path(), "table1_broadband.json", |v| small_mc(v, 5));
    ok(&["montecarlo", "--config", s(&cfg), "--out", s(tmp.path())]);
    let (h, ff) = read_csv(&tmp.path().join("mc_feedforward.csv"));
    let (_, mixed) = read_csv(&tmp.path().join("mc_mixed.csv"));
    let (q1, q3) = (col(&h, "alpha_q1"), col(&h, "alpha_q3"));
    for (a, b) in ff.iter().zip(&mixed) {
        if a[0] > 400.0 {
            let d = ((b[q3] - b[q1]) - (a[q3] - a[q1])).abs();
            assert!(d < 0.05, "{} Hz: {d}", a[0]);
        }
    }
}

fn identify_into(dir: &Path, prefix: &str) -> Value {
    ok(&[
        "identify",
        "--passive",
        s(&dir.join(format!("{prefix}passive.csv"))),
        "--front",
        s(&dir.join(format!("{prefix}front.csv"))),
        "--rear",
        s(&dir.join(format!("{prefix}rear.csv"))),
        "--probes",
        s(&dir.join(format!("{prefix}probes.json"))),
        "--out",
        s(dir),
    ]);
    serde_json::from_str(&std::fs::read_to_string(dir.join("identified.json")).unwrap()).unwrap()
}

fn rel(a: &Value, b: f64) -> f64 {
    (a.as_f64().unwrap() / b - 1.0).abs()
}

#[test]
fn identify_fixture_gives_reference_values() {
    let tmp = TempDir::new().unwrap();
    for f in ["table3_passive.csv", "table3_front.csv", "table3_rear.csv", "table3_probes.json"] {
        std::fs::copy(fixture(f), tmp.path().join(f)).unwrap();
    }
    let m = &identify_into(tmp.path(), "table3_")["model"];
    assert!(rel(&m["rss"], 0.6734 * 1.2 * 343.0) < 1e-9);
    assert!(rel(&m["f0_hz"], 205.5) < 1e-9);
    assert!(rel(&m["qms"], 5.466) < 1e-9);
    assert!(rel(&m["f_pa_per_a"], 1084.0) < 1e-9);
    assert!(rel(&m["csb_m_per_pa"], 1.808e-6) < 1e-9);
}

#[test]
fn identify_round_trip_of_inline_model() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(tmp.path(), "table1_1dof.json", |v| {
        v["model"] = serde_json::json!({
            "rss": 350.0, "f0_hz": 180.0, "qms": 4.0, "f_pa_per_a": 900.0,
            "csb_m_per_pa": 2.5e-6, "rho0": 1.2, "c0": 343.0
        });
    });
    ok(&["synth-spectra", "--config", s(&cfg), "--out", s(tmp.path()), "--lo-hz", "150", "--hi-hz", "220"]);
    let m = &identify_into(tmp.path(), "")["model"];
    assert!(rel(&m["rss"], 350.0) < 1e-6);
    assert!(rel(&m["f0_hz"], 180.0) < 1e-6);
    assert!(rel(&m["qms"], 4.0) < 1e-6);
    assert!(rel(&m["f_pa_per_a"], 900.0) < 1e-6);
    assert!(rel(&m["csb_m_per_pa"], 2.5e-6) < 1e-6);
}

#[test]
fn identify_noisy_spectra_within_tolerance() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        ok(&["synth-spectra", "--out", s(d.path()), "--noise", "0.01", "--seed", "3"]);
    }
    let ma = identify_into(a.path(), "");
    let mb = identify_into(b.path(), "");
    assert_eq!(ma, mb);
    let m = &ma["model"];
    assert!(rel(&m["f0_hz"], 205.5) < 1e-3);
    assert!(rel(&m["rss"], 0.6734 * 1.2 * 343.0) < 0.05);
    assert!(rel(&m["qms"], 5.466) < 0.05);
    assert!(rel(&m["f_pa_per_a"], 1084.0) < 0.05);
    assert!(rel(&m["csb_m_per_pa"], 1.808e-6) < 0.05);
}

#[test]
fn identify_rejects_malformed_csv() {
    let tmp = TempDir::new().unwrap();
    ok(&["synth-spectra", "--out", s(tmp.path())]);
    std::fs::write(tmp.path().join("front.csv"), "freq_hz,re_z_norm\n1,2\n").unwrap();
    let out = run(&[
        "identify",
        "--passive",
        s(&tmp.path().join("passive.csv")),
        "--front",
        s(&tmp.path().join("front.csv")),
        "--rear",
        s(&tmp.path().join("rear.csv")),
        "--probes",
        s(&tmp.path().join("probes.json")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn kundt(dir: &Path, base: &str, edit: impl FnOnce(&mut Value)) -> (Vec<String>, Vec<Vec<f64>>) {
    let cfg = config_with(dir, base, edit);
    ok(&["kundt", "--config", s(&cfg), "--out", s(dir)]);
    read_csv(&dir.join("kundt.csv"))
}

#[test]
fn kundt_noiseless_exact_recovers_target_absorption() {
    let tmp = TempDir::new().unwrap();
    let (h, rows) = kundt(tmp.path(), "table1_1dof.json", |v| v["estimates"]["f"] = 1.0.into());
    let z0 = 1.2 * 343.0_f64;
    let (ia, it) = (col(&h, "alpha_mixed"), col(&h, "alpha_target"));
    let mut checked = 0;
    for r in &rows {
        if r[ia].is_nan() {
            continue;
        }
        // analytic target absorption: Z_st = z0 / (1 + jQ(f/400 - 400/f)), Q = 7
        let f = r[0];
        let x = 7.0 * (f / 400.0 - 400.0 / f);
        let zst = z0 / Complex64::new(1.0, x);
        let alpha = 1.0 - ((zst - z0) / (zst + z0)).norm_sqr();
        assert!((r[it] - alpha).abs() < 1e-6, "{f}");
        assert!((r[ia] - alpha).abs() < 1e-6, "{f}");
        checked += 1;
    }
    assert!(checked > 400);
}

#[test]
fn kundt_mismatch_feedback_closer_to_target_at_passive_resonance() {
    let tmp = TempDir::new().unwrap();
    let (h, rows) = kundt(tmp.path(), "table1_2dof.json", |_| {});
    let r = row_at(&rows, 205.5);
    let t = r[col(&h, "alpha_target")];
    let ff = (r[col(&h, "alpha_feedforward")] - t).abs();
    let mixed = (r[col(&h, "alpha_mixed")] - t).abs();
    assert!(mixed < ff, "{mixed} vs {ff}");
}

#[test]
fn kundt_noise_degrades_low_frequencies() {
    let tmp = TempDir::new().unwrap();
    let (h, clean) = kundt(tmp.path(), "table1_1dof.json", |_| {});
    let (_, noisy) = kundt(tmp.path(), "table1_1dof.json", |v| {
        v["kundt"]["noise_rel"] = 1e-3.into();
        v["kundt"]["seed"] = 9.into();
    });
    let i = col(&h, "alpha_passive");
    let mean_err = |lo: f64, hi: f64| {
        let e: Vec<f64> = clean
            .iter()
            .zip(&noisy)
            .filter(|(c, _)| c[0] >= lo && c[0] < hi && !c[i].is_nan())
            .map(|(c, n)| (c[i] - n[i]).abs())
            .collect();
        e.iter().sum::<f64>() / e.len() as f64
    };
    assert!(mean_err(10.0, 100.0) > 5.0 * mean_err(300.0, 700.0));
}

fn simulate(dir: &Path, base: &str, extra: &[&str], edit: impl FnOnce(&mut Value)) -> (Vec<String>, Vec<Vec<f64>>) {
    let cfg = config_with(dir, base, |v| {
        v["estimates"]["f"] = 1.0.into();
        v["simulate"]["loop"]["settle_s"] = 0.2.into();
        v["simulate"]["loop"]["window_s"] = 0.05.into();
        edit(v);
    });
    let mut args = vec!["simulate", "--config", s(&cfg), "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    read_csv(&dir.join("simulate.csv"))
}

#[test]
fn simulate_passive_matches_plant() {
    let tmp = TempDir::new().unwrap();
    let (h, rows) = simulate(tmp.path(), "table1_1dof.json", &[], |v| v["simulate"]["passive"] = true.into());
    for r in &rows {
        let (re, im) = (r[col(&h, "re_z_norm")], r[col(&h, "im_z_norm")]);
        let (rr, ri) = (r[col(&h, "re_ref_norm")], r[col(&h, "im_ref_norm")]);
        let err = ((re - rr).powi(2) + (im - ri).powi(2)).sqrt() / (rr * rr + ri * ri).sqrt();
        assert!(err < 0.01, "{}: {err}", r[0]);
    }
    let (th, ts) = read_csv(&tmp.path().join("timeseries.csv"));
    assert_eq!(th, ["t_s", "pf_pa", "pb_pa", "i_a", "v_m_per_s"]);
    assert!(ts.iter().all(|r| r[3] == 0.0));
}

#[test]
fn simulate_one_dof_absorbs_at_resonance() {
    let tmp = TempDir::new().unwrap();
    let (h, rows) = simulate(tmp.path(), "table1_1dof.json", &["--latency", "0"], |v| {
        v["simulate"]["freqs_hz"] = serde_json::json!([400.0]);
    });
    let alpha = rows[0][col(&h, "alpha")];
    assert!(alpha > 0.999, "{alpha}");
}

#[test]
fn simulate_latency_sweep_is_monotone_in_phase() {
    let tmp = TempDir::new().unwrap();
    let mut last = -1.0;
    for latency in ["0", "1", "2"] {
        let (h, rows) = simulate(tmp.path(), "table1_1dof.json", &["--latency", latency], |v| {
            v["simulate"]["freqs_hz"] = serde_json::json!([400.0]);
        });
        let r = &rows[0];
        // target is real at 400 Hz, so the phase deviation is the phase of Z
        let phase = r[col(&h, "im_z_norm")].atan2(r[col(&h, "re_z_norm")]).abs();
        assert!(phase > last, "latency {latency}: {phase} <= {last}");
        last = phase;
    }
}

#[test]
fn current_source_prototype_values() {
    let out = ok(&["current-source"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rel(&v["transconductance"], 9.97e-3) < 5e-3);
    assert!(rel(&v["output_leakage"], -10.7e-6) < 1e-2);
    let out = ok(&["current-source", "--r1", "1000", "--r2", "1000", "--r3", "11", "--r4", "10", "--r5", "1"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["output_leakage"].as_f64(), Some(0.0));
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    assert_eq!(run(&["design", "--config", s(&missing)]).status.code(), Some(4));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(&["design", "--config", s(&bad)]).status.code(), Some(2));

    // a target that is stiffer than the plant at low frequency is inadmissible
    let cfg = config_with(tmp.path(), "table1_1dof.json", |v| {
        v["control"]["resonators"][0]["q"] = (-1.0).into();
    });
    assert_eq!(run(&["design", "--config", s(&cfg), "--out", s(tmp.path())]).status.code(), Some(2));

    // a long controller delay destabilizes the feedback loop
    let cfg = config_with(tmp.path(), "table1_1dof.json", |v| {
        v["control"]["kg"] = 100.0.into();
        v["simulate"]["loop"]["latency_samples"] = 50.into();
        v["simulate"]["loop"]["settle_s"] = 0.2.into();
        v["simulate"]["freqs_hz"] = serde_json::json!([400.0]);
    });
    let out = run(&["simulate", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn fixture_configs_round_trip() {
    for name in ["1dof", "broadband", "2dof"] {
        let text = std::fs::read_to_string(fixture(&format!("table1_{name}.json"))).unwrap();
        let out = ok(&["init", name]);
        assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
    }
}

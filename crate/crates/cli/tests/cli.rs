use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shev(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shev-mompc"))
        .args(args)
        .current_dir(dir)
        .env("SHEV_MOMPC_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_short_cycle(dir: &Path, name: &str, speeds: &[f64]) {
    let mut s = String::from("t_s,v_mps\n");
    for (t, v) in speeds.iter().enumerate() {
        s.push_str(&format!("{t},{v}\n"));
    }
    std::fs::write(dir.join(name), s).unwrap();
}

#[test]
fn missing_cycle_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = shev(&["simulate", "--cycle", "nope.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.csv"), "{}", stderr(&out));
}

#[test]
fn bad_arguments_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(shev(&["pareto", "--grid", "0"], dir.path()).status.code(), Some(2));

    std::fs::write(dir.path().join("one.csv"), "P_e_W,mdot_f_gps\n1000,0.12\n").unwrap();
    assert_eq!(shev(&["identify-fuel", "one.csv"], dir.path()).status.code(), Some(2));

    std::fs::write(dir.path().join("bad.json"), r#"{"controller": {"horizn": 3}}"#).unwrap();
    assert_eq!(
        shev(&["config", "--config", "bad.json"], dir.path()).status.code(),
        Some(2)
    );

    std::fs::write(dir.path().join("fast.csv"), "t_s,v_mps\n0,0\n1,60\n").unwrap();
    assert_eq!(
        shev(&["simulate", "--cycle", "fast.csv"], dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let speeds: Vec<f64> = (0..30).map(|t| (t as f64 * 0.5).min(8.0)).collect();
    write_short_cycle(dir.path(), "ramp.csv", &speeds);
    let out = shev(&["simulate", "--cycle", "ramp.csv", "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let res = dir.path().join("res");
    for f in ["trace.csv", "metrics.json", "summary.txt"] {
        assert!(res.join(f).is_file(), "missing {f}");
    }
    let trace = std::fs::read_to_string(res.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,s,s_ref,v,v_ref,F_d,"));
    assert_eq!(trace.lines().count(), 31);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(res.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["steps"], 30);
    assert_eq!(metrics["violation_count"], 0);
}

#[test]
fn mph_cycle_is_converted() {
    let dir = tempfile::tempdir().unwrap();
    write_short_cycle(dir.path(), "mph.csv", &[0.0, 10.0, 20.0, 20.0, 20.0, 20.0]);
    let out = shev(
        &["simulate", "--cycle", "mph.csv", "--unit", "mph", "--out", "."],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(dir.path().join("trace.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "v_ref").unwrap();
    let last: f64 = rdr.records().last().unwrap().unwrap()[col].parse().unwrap();
    assert!((last - 20.0 * 0.44704).abs() < 1e-9, "{last}");
}

#[test]
fn single_point_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let speeds: Vec<f64> = (0..15).map(|t| (t as f64).min(5.0)).collect();
    write_short_cycle(dir.path(), "short.csv", &speeds);
    let out = shev(
        &["pareto", "--grid", "1", "--cycle", "short.csv", "--out", "."],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("pareto.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha1,alpha2,alpha3,J_m,J_fb,dominated");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].ends_with(",0"));
}

#[test]
fn unnormalised_weights_warn() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"controller": {"weights": [0.33, 0.33, 0.33]}}"#,
    )
    .unwrap();
    let out = shev(&["config", "--config", "cfg.json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("rescaled"), "{}", stderr(&out));
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let sum: f64 = cfg["controller"]["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w.as_f64().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn noisy_fuel_fit() {
    let dir = tempfile::tempdir().unwrap();
    let (alpha, beta) = (0.0614, 0.0583);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut s = String::from("P_e_W,mdot_f_gps\n");
    for _ in 0..400 {
        let pe: f64 = rng.gen_range(0.0..11_760.0);
        let noise: f64 = rng.gen_range(-0.005..0.005);
        s.push_str(&format!("{pe},{}\n", alpha * pe / 1000.0 + beta + noise));
    }
    std::fs::write(dir.path().join("noisy.csv"), s).unwrap();
    let out = shev(&["identify-fuel", "noisy.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let fit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((fit["alpha"].as_f64().unwrap() - alpha).abs() < 1e-3, "{fit}");
    assert!((fit["beta"].as_f64().unwrap() - beta).abs() < 3e-3, "{fit}");
    assert!(fit["r_squared"].as_f64().unwrap() > 0.99, "{fit}");
}

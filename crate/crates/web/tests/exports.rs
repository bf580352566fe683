use serde_json::Value;
use shev_mompc_web::{battery_curve_json, pareto_json, simulate_json};

#[test]
fn simulate_returns_full_trace() {
    let v: Value = serde_json::from_str(&simulate_json("pulse", 0.33, 0.33, 0.33).unwrap()).unwrap();
    assert_eq!(v["t"].as_array().unwrap().len(), 121);
    assert_eq!(v["metrics"]["violation_count"], 0);
    assert!(simulate_json("nowhere", 1.0, 1.0, 1.0).is_err());
    assert!(simulate_json("pulse", 0.0, 0.0, 0.0).is_err());
}

#[test]
fn pareto_marks_points() {
    let v: Value = serde_json::from_str(&pareto_json(3).unwrap()).unwrap();
    let pts = v.as_array().unwrap();
    assert_eq!(pts.len(), 3);
    assert!(pts.iter().any(|p| p["dominated"] == false));
    assert!(pareto_json(0).is_err());
}

#[test]
fn battery_curve_spans_box() {
    let v: Value = serde_json::from_str(&battery_curve_json(11).unwrap()).unwrap();
    let current = v["current"].as_array().unwrap();
    assert!((current[0].as_f64().unwrap() + 90.0).abs() < 1e-9);
    assert!((current[10].as_f64().unwrap() - 90.0).abs() < 1e-9);
    assert!(battery_curve_json(1).is_err());
}

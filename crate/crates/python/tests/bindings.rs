use overact::harness::benchmark;
use pyoveract::{dare, plan_json, simulate_json};

fn rows(m: &[&[f64]]) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

#[test]
fn scalar_dare_matches_closed_form() {
    // a = 1, b = 1, q = 1, r = 1: p² − p − 1 = 0.
    let one = rows(&[&[1.0]]);
    let res = dare(&one, &one, &one, &one, 1.0).unwrap();
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((res.p[0][0] - p).abs() < 1e-10);
    assert!((res.k[0][0] + p / (1.0 + p)).abs() < 1e-10);
    assert!((res.j - p).abs() < 1e-10);
}

#[test]
fn dare_rejects_ragged_rows() {
    let a = vec![vec![1.0, 0.0], vec![0.0]];
    let b = rows(&[&[1.0], &[1.0]]);
    let q = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
    assert!(dare(&a, &b, &q, &rows(&[&[1.0]]), 1.0).is_err());
}

#[test]
fn benchmark_plan_round_trips_as_json() {
    let plan: serde_json::Value = serde_json::from_str(&plan_json(&benchmark::config().to_json()).unwrap()).unwrap();
    assert!(plan.get("T_c").is_some());
}

#[test]
fn bad_config_reports_the_field() {
    let err = plan_json(r#"{"plant": 3}"#).unwrap_err().to_string();
    assert!(err.contains("plant"), "{err}");
}

#[test]
fn short_simulation_summarizes_both_baselines() {
    let mut cfg = benchmark::config();
    cfg.horizon = 120;
    let out = simulate_json(&cfg.to_json(), Some(2), Some(3)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["trials"], 2);
    assert_eq!(v["baselines"].as_array().unwrap().len(), 2);
}

use fdprox_web::{eta_curve, lowrank_contrast, sparse_detect};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn sparse_demo_finds_the_blocks() {
    let v = parse(sparse_detect(200, 200, 4, 10, 0.5, 10, 0.5, 2.0, 1).unwrap());
    assert_eq!(v["tau_star"], serde_json::json!([50, 100, 150]));
    assert_eq!(v["estimates"], v["tau_star"]);
    assert_eq!(
        v["S"].as_array().unwrap().len(),
        v["S_baseline"].as_array().unwrap().len()
    );
}

#[test]
fn lowrank_demo_reports_contrast() {
    let v = parse(lowrank_contrast(30, 2.0, 0.04, 5, 0.4, 3).unwrap());
    assert_eq!(v["tau_star"], serde_json::json!([50]));
    assert!(v["contrast"].as_f64().unwrap() > 1.0);
    assert!(v["proposed_wins"].is_boolean());
}

#[test]
fn eta_demo_stays_under_the_bound() {
    let v = parse(eta_curve(300, 5, 300, 2).unwrap());
    assert!(v["eta"].as_f64().unwrap() < v["bound"].as_f64().unwrap());
    assert!(v["curve"].as_array().unwrap().len() > 40);
}

#[test]
fn bad_inputs_come_back_as_messages() {
    assert!(sparse_detect(100, 100, 3, 5, 0.5, 10, 0.1, 0.5, 1)
        .unwrap_err()
        .contains("divide"));
    assert!(sparse_detect(100, 100, 4, 5, 0.5, 0, 0.1, 0.5, 1).is_err());
    assert!(lowrank_contrast(500, 2.0, 0.1, 5, 0.4, 1).is_err());
    assert!(eta_curve(100, 5, 0, 1).is_err());
}

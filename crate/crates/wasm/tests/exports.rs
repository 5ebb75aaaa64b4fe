use serde_json::Value;
use trajopt_wasm::{quu_profile, solve_curves, trajectory};

fn json(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.expect("export succeeds")).unwrap()
}

#[test]
fn ilqr_curves_decrease_and_converge() {
    let v = json(solve_curves("pendulum", "ilqr", 0, 1.0, 200));
    assert_eq!(v["converged"], true);
    assert_eq!(v["reason"], "CONVERGED");
    let costs: Vec<f64> = v["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["cost"].as_f64().unwrap())
        .collect();
    assert!(costs.windows(2).all(|w| w[1] < w[0]));
    assert!(v["points"]
        .as_array()
        .unwrap()
        .iter()
        .all(|p| p["method"] == "ilqr"));
}

#[test]
fn quu_profile_shows_ddp_indefiniteness_only() {
    let v = json(quu_profile("cartpole", 1, 10.0));
    let r_min = v["r_min"].as_f64().unwrap();
    let ilqr: Vec<f64> = v["ilqr"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(ilqr.len(), 200);
    assert!(ilqr.iter().all(|&q| q >= r_min - 1e-10));
    let negative = (0..20).any(|seed| {
        let v = json(quu_profile("cartpole", seed, 10.0));
        v["ddp"]
            .as_array()
            .unwrap()
            .iter()
            .any(|x| x.as_f64().unwrap() < 0.0)
    });
    assert!(negative);
}

#[test]
fn trajectory_has_horizon_plus_one_states() {
    let v = json(trajectory("cartpole", "hybrid", 3, 1.0, 50));
    assert_eq!(v["states"].as_array().unwrap().len(), 201);
    assert_eq!(v["controls"].as_array().unwrap().len(), 200);
    assert_eq!(v["states"][0].as_array().unwrap().len(), 4);
    assert_eq!(v["dt"], 0.02);
}

#[test]
fn bad_inputs_are_reported() {
    assert!(solve_curves("acrobot", "ilqr", 0, 1.0, 10).is_err());
    assert!(solve_curves("pendulum", "gauss-newton", 0, 1.0, 10).is_err());
    assert!(quu_profile("pendulum", 0, f64::NAN).is_err());
    assert!(trajectory("pendulum", "ddp", 0, -1.0, 10).is_err());
}

#[test]
fn exports_are_deterministic() {
    assert_eq!(
        solve_curves("cartpole", "ddp", 5, 2.0, 30),
        solve_curves("cartpole", "ddp", 5, 2.0, 30)
    );
}

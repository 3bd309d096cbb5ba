use dhs_wasm::{deficiency_json, disconjugacy_json, recessive_curves_json};
use serde_json::Value;

#[test]
fn free_system_at_zero_has_constant_recessive() {
    let v: Value = serde_json::from_str(&recessive_curves_json(0.0, 1.0, 60).unwrap()).unwrap();
    for t in 1..=40 {
        assert!((v["recessive"][t].as_f64().unwrap() - 1.0).abs() < 1e-7);
    }
    // Principal solution u(t) = t, so the ratio is 1/t.
    let ratio = v["ratio"].as_array().unwrap();
    let at20 = ratio.iter().find(|p| p[0] == 20).unwrap()[1].as_f64().unwrap();
    assert!((at20 - 1.0 / 20.0).abs() < 1e-6);
}

#[test]
fn friedrichs_matrices_match_deficiency() {
    for n in 1..=3 {
        let v: Value = serde_json::from_str(&deficiency_json(n, 0.5, -1.0, 150).unwrap()).unwrap();
        let d = v["d"].as_u64().unwrap() as usize;
        assert_eq!(d, 2 * n);
        assert_eq!(v["M"].as_array().unwrap().len(), d);
        assert_eq!(v["N"][0].as_array().unwrap().len(), 2 * (d - n));
    }
}

#[test]
fn output_is_deterministic() {
    assert_eq!(disconjugacy_json(4.5, 1.0, 30).unwrap(), disconjugacy_json(4.5, 1.0, 30).unwrap());
}

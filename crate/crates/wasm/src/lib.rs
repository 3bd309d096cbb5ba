//! Browser bindings. Every export takes plain numbers and returns a JSON string.
//!
//! The demo family is `Δu = v`, `Δv = −λ ρᵗ I u(t+1)` in dimension `n`:
//! `ρ = 1` is the free system with weight, `ρ < 1` puts every solution in ℓ²_W.

use dhs_core::conjoined::{principal_at_start, verify_recessive};
use dhs_core::disconjugacy::is_disconjugate;
use dhs_core::extension::{
    estimate_deficiency_index, friedrichs_bc, limit_circle_family, order_basis, recessive_on, theta_matrix,
};
use dhs_core::linalg::CMat;
use dhs_core::{HamiltonianSystem, LatticeWindow};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_HORIZON: usize = 2000;

fn family(n: usize, rho: f64, horizon: usize) -> Result<HamiltonianSystem, String> {
    if !(1..=4).contains(&n) {
        return Err(format!("n = {n} must be between 1 and 4"));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(format!("rho = {rho} must lie in (0, 1]"));
    }
    if !(20..=MAX_HORIZON).contains(&horizon) {
        return Err(format!("horizon {horizon} must lie in [20, {MAX_HORIZON}]"));
    }
    // Room past the horizon for the backward shooting pad.
    let end = horizon + (horizon / 4).max(64);
    let window = LatticeWindow::new(0, end).map_err(|e| e.to_string())?;
    limit_circle_family(n, window, rho).map_err(|e| e.to_string())
}

fn matrix(m: &CMat) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect())).collect())
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

/// Recessive and principal solutions of the scalar family and the ratio
/// `|u_rec / u_principal|`, sampled on `[0, horizon]`.
pub fn recessive_curves_json(lambda: f64, rho: f64, horizon: usize) -> Result<String, String> {
    let sys = family(1, rho, horizon)?;
    let rec = recessive_on(&sys, lambda, horizon).map_err(|e| e.to_string())?;
    let other = principal_at_start(&sys, lambda, horizon).map_err(|e| e.to_string())?;
    let curve = verify_recessive(&rec.basis, &other, horizon, 1e-6).map_err(|e| e.to_string())?;
    let u = |y: &dhs_core::ConjoinedBasis, t: usize| y.u(t).map(|m| m[(0, 0)].norm()).unwrap_or(f64::NAN);
    let ts: Vec<usize> = (0..=horizon).collect();
    Ok(json!({
        "t": ts,
        "recessive": ts.iter().map(|&t| finite(u(&rec.basis, t))).collect::<Vec<_>>(),
        "principal": ts.iter().map(|&t| finite(u(&other, t))).collect::<Vec<_>>(),
        "ratio": curve.points.iter().map(|&(t, v)| json!([t, finite(v)])).collect::<Vec<_>>(),
        "eventually_decreasing": curve.eventually_decreasing,
        "construction": format!("{:?}", rec.construction),
    })
    .to_string())
}

/// Deficiency index, tail ratios, Θ and the Friedrichs boundary matrices.
pub fn deficiency_json(n: usize, rho: f64, lambda: f64, horizon: usize) -> Result<String, String> {
    let sys = family(n, rho, horizon)?;
    let est = estimate_deficiency_index(&sys, lambda, horizon, 1e-8).map_err(|e| e.to_string())?;
    let ord = order_basis(&est.basis, &est.recessive, 1e-8).map_err(|e| e.to_string())?;
    let t1 = ord.t1;
    let h = ord.end();
    let t_list: Vec<usize> = (0..=4).map(|k| t1 + k * (h - t1) / 4).collect();
    let th = theta_matrix(&ord, &t_list, 1e-9).map_err(|e| e.to_string())?;
    let bc = friedrichs_bc(est.d, n).map_err(|e| e.to_string())?;
    Ok(json!({
        "n": n,
        "d": est.d,
        "gap": finite(est.gap),
        "tail_ratios": est.spectrum.iter().map(|&r| finite(r)).collect::<Vec<_>>(),
        "effective_horizon": est.basis.effective_horizon,
        "theta": matrix(&th.theta),
        "theta_drift": th.drift,
        "M": matrix(&bc.m),
        "N": matrix(&bc.n),
        "tail_profiles": est.basis.tail_profiles,
    })
    .to_string())
}

/// Disconjugacy of the scalar family on `[0, len]` at `lambda0`, with the
/// `u` values of a witness when the form is not positive.
pub fn disconjugacy_json(lambda0: f64, rho: f64, len: usize) -> Result<String, String> {
    if !(2..=200).contains(&len) {
        return Err(format!("window length {len} must lie in [2, 200]"));
    }
    let sys = family(1, rho, len.max(20))?;
    let window = LatticeWindow::new(0, len).map_err(|e| e.to_string())?;
    let v = is_disconjugate(&sys, lambda0, window, 1e-10).map_err(|e| e.to_string())?;
    let witness = v.witness.as_ref().map(|y| {
        y.values().iter().map(|z| json!([z[0].re, z[0].im])).collect::<Vec<_>>()
    });
    Ok(json!({
        "disconjugate": v.disconjugate,
        "scan_agrees": v.disconjugate == v.scan.disconjugate,
        "min_eigenvalue": finite(v.min_eigenvalue),
        "form_dim": v.form_dim,
        "witness_value": v.witness_value,
        "witness_u": witness,
        "focal_points": v.scan.focal_points,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn recessive_curves(lambda: f64, rho: f64, horizon: usize) -> Result<String, JsValue> {
    recessive_curves_json(lambda, rho, horizon).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn deficiency(n: usize, rho: f64, lambda: f64, horizon: usize) -> Result<String, JsValue> {
    deficiency_json(n, rho, lambda, horizon).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn disconjugacy(lambda0: f64, rho: f64, len: usize) -> Result<String, JsValue> {
    disconjugacy_json(lambda0, rho, len).map_err(|e| JsValue::from_str(&e))
}

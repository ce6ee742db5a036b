//! Browser bindings: each call returns a JSON string for the page to plot.

use nozzleflow::gas::GasModel;
use nozzleflow::nozzle::{calibrate_inflow, NozzleProfile};
use nozzleflow::potentialflow::{picard_solve, sonic_curve, BoundaryData};
use nozzleflow::problem::{Setup, SolverParams};
use nozzleflow::quasi1d::solve_transonic;
use nozzleflow::shock1d::ShockMap;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn nozzle(curvature: f64, gamma: f64) -> Result<(NozzleProfile, GasModel, f64), String> {
    let p = NozzleProfile::polynomial(-1.0, 1.0, vec![1.0, 0.0, curvature]).map_err(|e| e.to_string())?;
    let g = GasModel::new(gamma).map_err(|e| e.to_string())?;
    let u0 = calibrate_inflow(&p, &g, 1.0).map_err(|e| e.to_string())?;
    Ok((p, g, u0))
}

/// Transonic flow in `a = 1 + c x^2`.
pub fn transonic(curvature: f64, gamma: f64, n: usize) -> Result<Value, String> {
    let (p, g, u0) = nozzle(curvature, gamma)?;
    let f = solve_transonic(&p, &g, 1.0, u0, n.clamp(21, 4001)).map_err(|e| e.to_string())?;
    Ok(json!({ "x": f.x1, "a": f.a, "u": f.u, "m2": f.m2, "p": f.pressure(), "c_star": f.c_star }))
}

/// Shock whose exit pressure sits at fraction `t` of `(p_min, p_max)`.
pub fn shock(curvature: f64, gamma: f64, t: f64, n: usize) -> Result<Value, String> {
    let (p, g, u0) = nozzle(curvature, gamma)?;
    let map = ShockMap::new(&p, &g, 1.0, u0).map_err(|e| e.to_string())?;
    let (p_min, p_max) = map.pressure_range().map_err(|e| e.to_string())?;
    let p_e = p_min + t.clamp(1e-6, 1.0 - 1e-6) * (p_max - p_min);
    let ls = map.locate(p_e).map_err(|e| e.to_string())?;
    let s = map.solution_at(ls, n.clamp(21, 4001)).map_err(|e| e.to_string())?;
    let x: Vec<f64> = s.upstream.x1.iter().chain(&s.downstream.x1).copied().collect();
    let m2: Vec<f64> = s.upstream.m2.iter().chain(&s.downstream.m2).copied().collect();
    let pr: Vec<f64> = s.upstream.pressure().into_iter().chain(s.downstream.pressure()).collect();
    Ok(json!({ "ls": ls, "p_e": p_e, "p_min": p_min, "p_max": p_max, "x": x, "m2": m2, "p": pr }))
}

/// Sonic curve of the irrotational flow with wall data `eps sin(pi x2)`.
pub fn sonic(eps: f64, n1: usize, modes: usize) -> Result<Value, String> {
    let (p, g, u0) = nozzle(1.0, 2.0)?;
    let n1 = 2 * (n1.clamp(33, 401) / 2) + 1;
    let params = SolverParams { n1, n_modes: modes.clamp(1, 16), ..Default::default() };
    let s = Setup::new(&p, &g, 1.0, Some(u0), params).map_err(|e| e.to_string())?;
    let sol = picard_solve(&s, &BoundaryData { eps, h1_sin: vec![1.0], bin_cos: vec![] }).map_err(|e| e.to_string())?;
    let c = sonic_curve(&sol.field, &s.basis).map_err(|e| e.to_string())?;
    Ok(json!({ "x2": c.x2, "xi": c.xi, "sup_xi": c.sup_xi(), "iterations": sol.history.iterations }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn transonic_json(curvature: f64, gamma: f64, n: usize) -> Result<String, JsValue> {
    to_js(transonic(curvature, gamma, n))
}

#[wasm_bindgen]
pub fn shock_json(curvature: f64, gamma: f64, t: f64, n: usize) -> Result<String, JsValue> {
    to_js(shock(curvature, gamma, t, n))
}

#[wasm_bindgen]
pub fn sonic_json(eps: f64, n1: usize, modes: usize) -> Result<String, JsValue> {
    to_js(sonic(eps, n1, modes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transonic_crosses_sonic_at_throat() {
        let v = transonic(1.0, 2.0, 201).unwrap();
        let x = v["x"].as_array().unwrap();
        let m2 = v["m2"].as_array().unwrap();
        for (xi, mi) in x.iter().zip(m2) {
            let (xi, mi) = (xi.as_f64().unwrap(), mi.as_f64().unwrap());
            assert!(xi == 0.0 || (xi < 0.0) == (mi < 1.0));
        }
    }

    #[test]
    fn shock_moves_downstream_as_pressure_drops() {
        let a = shock(1.0, 1.4, 0.8, 201).unwrap()["ls"].as_f64().unwrap();
        let b = shock(1.0, 1.4, 0.2, 201).unwrap()["ls"].as_f64().unwrap();
        assert!(b > a);
    }

    #[test]
    fn sonic_curve_small() {
        let v = sonic(1e-3, 101, 4).unwrap();
        assert!(v["sup_xi"].as_f64().unwrap() < 1e-2);
        assert!(transonic(-1.0, 2.0, 101).is_err());
    }
}

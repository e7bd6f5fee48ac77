//! Browser bindings: bound curves, the single-application predictability
//! sweep and controller queue trajectories.
//!
//! Every export returns a flat `Float64Array`; the layout is documented on
//! each function.

use sysintel::learning::{default_learning_slots, StreamMode};
use sysintel::model::Scenario;
use sysintel::oracle::{intelligence_bound, OracleError};
use sysintel::presets;
use sysintel::sim::{run, Policy};
use wasm_bindgen::prelude::*;

fn preset(name: &str) -> Result<Scenario, String> {
    presets::by_name(name).ok_or_else(|| format!("unknown preset {name:?}"))
}

/// `[ρ_0, I_0, ρ_1, I_1, ...]` over `steps + 1` evenly spaced budgets.
/// Infeasible budgets give `NaN`.
pub fn bound_curve_impl(name: &str, rho_lo: f64, rho_hi: f64, steps: usize) -> Result<Vec<f64>, String> {
    let s = preset(name)?;
    let steps = steps.max(1);
    let mut out = Vec::with_capacity(2 * (steps + 1));
    for i in 0..=steps {
        let rho = rho_lo + (rho_hi - rho_lo) * i as f64 / steps as f64;
        let value = match intelligence_bound(&s.with_rho(rho)) {
            Ok(b) => b.value,
            Err(OracleError::InfeasibleBudget { .. }) => f64::NAN,
            Err(e) => return Err(e.to_string()),
        };
        out.extend([rho, value]);
    }
    Ok(out)
}

/// `[ε, I, H, ...]` for `ε = 0.05, 0.10, ..., 0.95`, with `δ = ε` when
/// `delta` is `NaN` and `δ = delta` otherwise.
pub fn single_app_curve_impl(delta: f64) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for i in 1..20 {
        let eps = i as f64 * 0.05;
        let d = if delta.is_nan() { eps } else { delta };
        let s = presets::single_app(eps, d).map_err(|e| e.to_string())?;
        let value = intelligence_bound(&s).map_or(f64::NAN, |b| b.value);
        let h = s.chain(0).entropy_rate().map_err(|e| e.to_string())?;
        out.extend([eps, value, h]);
    }
    Ok(out)
}

/// `[γ*, d̃(0), d̃(1), ...]` for BISC (`population == 0`) or LBISC with
/// `population` users and the default learning window.
pub fn queue_trajectory_impl(
    name: &str,
    v: f64,
    population: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let s = preset(name)?;
    if v.is_nan() || v < 1.0 {
        return Err("V must be at least 1".into());
    }
    let policy = if population == 0 {
        Policy::Bisc
    } else {
        Policy::Lbisc {
            learning_slots: default_learning_slots(v),
            population,
            stream: StreamMode::Single,
        }
    };
    let gamma = intelligence_bound(&s).map_or(f64::NAN, |b| b.multiplier * v);
    let trace = run(&s, &policy, v, horizon.clamp(1, 200_000), seed).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(trace.len() + 1);
    out.push(gamma);
    out.extend(trace.records.iter().map(|r| r.eff_queue));
    Ok(out)
}

#[wasm_bindgen]
pub fn bound_curve(preset: &str, rho_lo: f64, rho_hi: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    bound_curve_impl(preset, rho_lo, rho_hi, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn single_app_curve(delta: f64) -> Result<Vec<f64>, JsError> {
    single_app_curve_impl(delta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn queue_trajectory(
    preset: &str,
    v: f64,
    population: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    queue_trajectory_impl(preset, v, population, horizon, seed).map_err(|e| JsError::new(&e))
}

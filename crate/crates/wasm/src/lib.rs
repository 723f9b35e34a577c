//! Browser bindings. Each export takes plain numbers and returns a JSON
//! string for the page to plot.

use mrp_core::distributions::union_scheme;
use mrp_core::market_models::{ImpliedVolSurface, ModelSpec, TimeGrid};
use mrp_core::risk_engine::decompose_full;
use mrp_core::scenario::simulate_variable;
use mrp_core::vol_target::{apply_overlay, VariableMode, VolTargetConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SPOT: f64 = 100.0;
const HORIZON: f64 = 0.5;
const MAX_PATHS: usize = 200_000;

fn surface(atm: f64, skew: f64, smile: f64) -> Result<ImpliedVolSurface, String> {
    ImpliedVolSurface::new(vec![0.25, 1.0], vec![atm, atm], skew, smile, 0.05, 1.5)
        .map_err(|e| e.to_string())
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string(value).expect("serializable")
}

fn paths_in_range(n_paths: usize) -> Result<usize, String> {
    if (1000..=MAX_PATHS).contains(&n_paths) {
        Ok(n_paths)
    } else {
        Err(format!("paths must lie in [1000, {MAX_PATHS}]"))
    }
}

#[derive(Serialize)]
struct Smile {
    strikes: Vec<f64>,
    implied: Vec<f64>,
    local: Vec<f64>,
}

/// Implied and local vol across strikes 60%..140% of the forward.
pub fn smile_json(atm: f64, skew: f64, smile: f64, tenor: f64) -> Result<String, String> {
    let s = surface(atm, skew, smile)?;
    if tenor.is_nan() || tenor <= 0.0 {
        return Err("tenor must be > 0".into());
    }
    let strikes: Vec<f64> = (0..=80).map(|i| SPOT * (0.6 + 0.01 * i as f64)).collect();
    let implied = strikes
        .iter()
        .map(|k| s.implied_vol((k / SPOT).ln(), tenor))
        .collect();
    let local = strikes
        .iter()
        .map(|&k| s.local_vol_at(k, tenor, SPOT))
        .collect();
    Ok(to_json(&Smile {
        strikes,
        implied,
        local,
    }))
}

#[derive(Serialize)]
struct OverlayDemo {
    spot_paths: Vec<Vec<f64>>,
    index_paths: Vec<Vec<f64>>,
    bucket_edges: Vec<f64>,
    spot_hist: Vec<f64>,
    index_hist: Vec<f64>,
}

/// Sample spot and vol-targeted paths under constant vol, with terminal
/// histograms of both.
pub fn overlay_json(vol: f64, target: f64, n_paths: usize, seed: u64) -> Result<String, String> {
    let n_paths = paths_in_range(n_paths)?;
    let vt = VolTargetConfig::new(target);
    let grid = TimeGrid::for_horizon(252, HORIZON, vt.window).map_err(|e| e.to_string())?;
    let model = ModelSpec::constant_vol(SPOT, 0.0, vol);
    let paths = mrp_core::market_models::simulate_paths(&model, grid, n_paths, seed)
        .map_err(|e| e.to_string())?;
    let x = apply_overlay(&paths, &vt).map_err(|e| e.to_string())?;
    let show = 8.min(n_paths);
    let spot_paths = (0..show)
        .map(|j| paths.post_inception(j).to_vec())
        .collect();
    let index_paths = (0..show).map(|j| x.path(j).to_vec()).collect();
    let s_t: Vec<f64> = (0..n_paths)
        .map(|j| *paths.post_inception(j).last().unwrap())
        .collect();
    let x_t: Vec<f64> = (0..n_paths).map(|j| *x.path(j).last().unwrap()).collect();
    let scheme = union_scheme(&[&s_t, &x_t], 40).map_err(|e| e.to_string())?;
    let hist = |xs: &[f64]| {
        mrp_core::distributions::histogram_from_samples(xs, &scheme)
            .map(|h| h.probs)
            .map_err(|e| e.to_string())
    };
    Ok(to_json(&OverlayDemo {
        spot_paths,
        index_paths,
        bucket_edges: scheme.edges().to_vec(),
        spot_hist: hist(&s_t)?,
        index_hist: hist(&x_t)?,
    }))
}

#[derive(Serialize)]
struct CellDemo {
    bucket_edges: Vec<f64>,
    b: Vec<f64>,
    m: Vec<f64>,
    f: Vec<Option<f64>>,
    f_meanvar: Vec<Option<f64>>,
    mrp_raw_pct: Option<f64>,
    mrp_mean_pct: Option<f64>,
    mrp_meanvar_pct: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Flat-vol booking against a constant-vol (`skew == 0 && smile == 0`) or
/// local-vol market, both vol-targeted. Smoothing keeps tail buckets finite.
#[allow(clippy::too_many_arguments)]
pub fn cell_json(
    booking_vol: f64,
    market_atm: f64,
    skew: f64,
    smile: f64,
    drift: f64,
    target: f64,
    n_paths: usize,
    seed: u64,
) -> Result<String, String> {
    let n_paths = paths_in_range(n_paths)?;
    let vt = VolTargetConfig::new(target);
    let grid = TimeGrid::for_horizon(252, HORIZON, vt.window).map_err(|e| e.to_string())?;
    let booking = ModelSpec::constant_vol(SPOT, drift, booking_vol);
    let market = if skew == 0.0 && smile == 0.0 {
        ModelSpec::constant_vol(SPOT, drift, market_atm)
    } else {
        ModelSpec::local_vol(SPOT, drift, surface(market_atm, skew, smile)?)
    };
    let run = |model: &ModelSpec, seed: u64| {
        simulate_variable(
            model,
            grid,
            Some(&vt),
            VariableMode::Terminal,
            n_paths,
            seed,
            n_paths,
        )
        .map(|r| r.samples)
        .map_err(|e| e.to_string())
    };
    let b = run(&booking, seed)?;
    let m = run(&market, seed.wrapping_add(1))?;
    let d = decompose_full(&b, &m, 20, HORIZON, Some(0.5)).map_err(|e| e.to_string())?;
    let ratio = |h: &[f64]| {
        h.iter()
            .zip(&d.market.probs)
            .map(|(p, q)| finite(p / q))
            .collect()
    };
    Ok(to_json(&CellDemo {
        bucket_edges: d.scheme.edges().to_vec(),
        f: ratio(&d.raw.probs),
        f_meanvar: ratio(&d.mean_var_corrected.probs),
        b: d.raw.probs.clone(),
        m: d.market.probs.clone(),
        mrp_raw_pct: finite(100.0 * d.ladder.mrp_raw),
        mrp_mean_pct: finite(100.0 * d.ladder.mrp_mean_corrected),
        mrp_meanvar_pct: finite(100.0 * d.ladder.mrp_mean_var_corrected),
    }))
}

#[wasm_bindgen]
pub fn local_vol_smile(atm: f64, skew: f64, smile: f64, tenor: f64) -> Result<String, JsValue> {
    smile_json(atm, skew, smile, tenor).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn vol_target_overlay(
    vol: f64,
    target: f64,
    n_paths: usize,
    seed: u32,
) -> Result<String, JsValue> {
    overlay_json(vol, target, n_paths, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn model_risk_cell(
    booking_vol: f64,
    market_atm: f64,
    skew: f64,
    smile: f64,
    drift: f64,
    target: f64,
    n_paths: usize,
    seed: u32,
) -> Result<String, JsValue> {
    cell_json(
        booking_vol,
        market_atm,
        skew,
        smile,
        drift,
        target,
        n_paths,
        seed as u64,
    )
    .map_err(|e| JsValue::from_str(&e))
}

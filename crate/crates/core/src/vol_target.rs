//! Volatility-targeting overlay.
//!
//! The vol-targeted index starts at `X_0 = S_0` and scales each arithmetic
//! return of `S` by `target / sigma_i`, where `sigma_i` is the annualized
//! root-mean-square of the `n` most recent daily log returns.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::market_models::{Diagnostics, PathSet, TimeGrid};
use crate::par;

/// Positivity floor for the targeted index, relative to its starting level.
pub const X_FLOOR_FRACTION: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolTargetConfig {
    pub target_vol: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_annualization")]
    pub annualization: u32,
    #[serde(default = "default_estimator_floor")]
    pub estimator_floor: f64,
}

fn default_window() -> usize {
    40
}

fn default_annualization() -> u32 {
    252
}

fn default_estimator_floor() -> f64 {
    0.001
}

impl VolTargetConfig {
    pub fn new(target_vol: f64) -> Self {
        Self {
            target_vol,
            window: default_window(),
            annualization: default_annualization(),
            estimator_floor: default_estimator_floor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_vol > 0.0 && self.target_vol.is_finite()) {
            return Err(config_err("target_vol must be > 0"));
        }
        if self.window < 2 {
            return Err(config_err("vol-target window must be >= 2"));
        }
        if self.annualization == 0 {
            return Err(config_err("annualization must be > 0"));
        }
        if !(self.estimator_floor > 0.0 && self.estimator_floor.is_finite()) {
            return Err(config_err("estimator_floor must be > 0"));
        }
        Ok(())
    }

    #[inline]
    fn annualize(&self, sum_sq: f64) -> (f64, bool) {
        let raw = (self.annualization as f64 / self.window as f64 * sum_sq).sqrt();
        if raw < self.estimator_floor || raw.is_nan() {
            (self.estimator_floor, true)
        } else {
            (raw, false)
        }
    }
}

#[inline]
fn sum_sq_log_returns(levels: &[f64]) -> f64 {
    levels.windows(2).map(|w| (w[1] / w[0]).ln().powi(2)).sum()
}

/// Realized vol over a window of `window + 1` consecutive levels.
pub fn realized_vol(levels: &[f64], config: &VolTargetConfig) -> Result<f64> {
    if levels.len() != config.window + 1 {
        return Err(config_err(format!(
            "realized vol needs {} levels, got {}",
            config.window + 1,
            levels.len()
        )));
    }
    if levels.iter().any(|&x| !(x > 0.0)) {
        return Err(config_err("realized vol needs positive levels"));
    }
    Ok(config.annualize(sum_sq_log_returns(levels)).0)
}

/// Applies the overlay to one path. `levels` holds `warmup` pre-inception
/// levels followed by inception and the post-inception levels; `out`
/// receives the targeted index from inception (`levels.len() - warmup`
/// values).
pub fn overlay_path(
    levels: &[f64],
    warmup: usize,
    config: &VolTargetConfig,
    out: &mut [f64],
) -> Diagnostics {
    let n = config.window;
    debug_assert!(warmup >= n);
    debug_assert_eq!(out.len(), levels.len() - warmup);
    let mut diag = Diagnostics::default();
    let x_floor = X_FLOOR_FRACTION * levels[warmup];
    out[0] = levels[warmup];
    for i in 0..out.len() - 1 {
        let idx = warmup + i;
        let (sigma_i, floored) = config.annualize(sum_sq_log_returns(&levels[idx - n..=idx]));
        if floored {
            diag.estimator_floored_steps += 1;
        }
        let ret = (levels[idx + 1] - levels[idx]) / levels[idx];
        let next = out[i] * (1.0 + config.target_vol / sigma_i * ret);
        out[i + 1] = if next < x_floor {
            diag.floored_x_steps += 1;
            x_floor
        } else {
            next
        };
    }
    diag
}

/// Vol-targeted index for every path. Warmup columns are dropped.
pub fn apply_overlay(paths: &PathSet, config: &VolTargetConfig) -> Result<PathSet> {
    config.validate()?;
    let grid = paths.grid;
    if grid.warmup_steps < config.window {
        return Err(config_err(format!(
            "vol-target window {} needs at least that many warmup steps, grid has {}",
            config.window, grid.warmup_steps
        )));
    }
    let out_grid = TimeGrid {
        warmup_steps: 0,
        ..grid
    };
    let cols = out_grid.n_columns();
    let mut levels = vec![0.0; paths.n_paths() * cols];
    let diag = par::map_rows(&mut levels, cols, |j, row| {
        overlay_path(paths.path(j), grid.warmup_steps, config, row)
    });
    let mut set = PathSet::from_levels(
        levels,
        paths.n_paths(),
        out_grid,
        paths.seed,
        paths.model_label.clone(),
    )?;
    set.diagnostics = paths.diagnostics;
    set.diagnostics.merge(&diag);
    Ok(set)
}

/// Which functional of a path is the investment variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableMode {
    Terminal,
    Average,
    RunningMax,
}

/// Variable value for a post-inception level sequence.
pub fn variable_of(levels: &[f64], mode: VariableMode) -> f64 {
    match mode {
        VariableMode::Terminal => levels[levels.len() - 1],
        VariableMode::Average => levels.iter().sum::<f64>() / levels.len() as f64,
        VariableMode::RunningMax => levels.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// One variable value per path, computed over post-inception levels.
pub fn extract_variable(paths: &PathSet, mode: VariableMode) -> Result<Vec<f64>> {
    if paths.n_paths() == 0 {
        return Err(Error::Config("empty path set".into()));
    }
    Ok((0..paths.n_paths())
        .map(|j| variable_of(paths.post_inception(j), mode))
        .collect())
}

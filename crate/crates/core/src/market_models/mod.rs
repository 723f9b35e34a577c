//! Diffusion models for the underlying index: constant vol, Dupire local vol
//! and stochastic local vol with a binned particle leverage calibration.

mod leverage;
mod rng;
mod simulate;
mod surface;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

pub use leverage::{
    calibrate_slv_leverage, calibrate_with_bins, Leverage, LeverageBin, LeverageStep,
    LeverageTable, LEVERAGE_BINS,
};
pub use rng::PathStreams;
pub use simulate::{calibration_seed, simulate_paths, simulate_paths_with, PathSimulator};
pub use surface::{
    ImpliedVolSurface, LocalVolValue, DENOM_FLOOR, LOCAL_VOL_CAP, LOCAL_VOL_FLOOR, STRIKE_BUMP,
    TENOR_BUMP,
};

/// Stochastic-vol multiplier parameters. `ln Z` is an Ornstein-Uhlenbeck
/// process started at zero:
///
/// `d ln Z = (-kappa ln Z - eta^2 / 2) dt + eta dW_Z`, `dW_S dW_Z = rho dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlvParams {
    pub eta: f64,
    pub kappa: f64,
    pub rho: f64,
}

impl SlvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(config_err("slv eta must be >= 0"));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(config_err("slv kappa must be >= 0"));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(config_err("slv rho must lie in [-1, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    ConstantVol {
        vol: f64,
    },
    LocalVol {
        surface: ImpliedVolSurface,
    },
    Slv {
        surface: ImpliedVolSurface,
        slv: SlvParams,
    },
}

/// A fully specified diffusion for `S_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub spot: f64,
    pub drift: f64,
    #[serde(flatten)]
    pub dynamics: Dynamics,
}

impl ModelSpec {
    pub fn constant_vol(spot: f64, drift: f64, vol: f64) -> Self {
        Self {
            spot,
            drift,
            dynamics: Dynamics::ConstantVol { vol },
        }
    }

    pub fn local_vol(spot: f64, drift: f64, surface: ImpliedVolSurface) -> Self {
        Self {
            spot,
            drift,
            dynamics: Dynamics::LocalVol { surface },
        }
    }

    pub fn slv(spot: f64, drift: f64, surface: ImpliedVolSurface, slv: SlvParams) -> Self {
        Self {
            spot,
            drift,
            dynamics: Dynamics::Slv { surface, slv },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return Err(config_err("spot must be > 0"));
        }
        if !self.drift.is_finite() {
            return Err(config_err("drift must be finite"));
        }
        match &self.dynamics {
            Dynamics::ConstantVol { vol } => {
                if !(*vol >= 0.0 && vol.is_finite()) {
                    return Err(config_err("const_vol must be >= 0"));
                }
            }
            Dynamics::LocalVol { surface } => surface.validate()?,
            Dynamics::Slv { surface, slv } => {
                surface.validate()?;
                slv.validate()?;
            }
        }
        Ok(())
    }

    /// Forward level at time `t`.
    pub fn forward(&self, t: f64) -> f64 {
        self.spot * (self.drift * t).exp()
    }

    pub fn surface(&self) -> Option<&ImpliedVolSurface> {
        match &self.dynamics {
            Dynamics::ConstantVol { .. } => None,
            Dynamics::LocalVol { surface } | Dynamics::Slv { surface, .. } => Some(surface),
        }
    }
}

/// Daily simulation grid. Columns `0..warmup_steps` hold pre-inception
/// history; column `warmup_steps` is inception.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub steps_per_year: u32,
    pub n_steps: usize,
    pub warmup_steps: usize,
}

impl TimeGrid {
    pub fn new(steps_per_year: u32, n_steps: usize, warmup_steps: usize) -> Result<Self> {
        let g = Self {
            steps_per_year,
            n_steps,
            warmup_steps,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid covering `horizon` years at `steps_per_year` steps per year.
    pub fn for_horizon(steps_per_year: u32, horizon: f64, warmup_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(config_err("horizon must be > 0"));
        }
        let n = (horizon * steps_per_year as f64).round() as usize;
        Self::new(steps_per_year, n.max(1), warmup_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_year == 0 {
            return Err(config_err("steps_per_year must be > 0"));
        }
        if self.n_steps == 0 {
            return Err(config_err("n_steps must be > 0"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_year as f64
    }

    /// Number of level columns per path.
    pub fn n_columns(&self) -> usize {
        self.warmup_steps + self.n_steps + 1
    }

    /// Horizon covered after inception, in years.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt()
    }
}

/// Row-major matrix of simulated levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    levels: Vec<f64>,
    n_paths: usize,
    pub grid: TimeGrid,
    pub seed: u64,
    pub model_label: String,
    pub diagnostics: Diagnostics,
}

impl PathSet {
    pub fn from_levels(
        levels: Vec<f64>,
        n_paths: usize,
        grid: TimeGrid,
        seed: u64,
        model_label: impl Into<String>,
    ) -> Result<Self> {
        if levels.len() != n_paths * grid.n_columns() {
            return Err(config_err("path matrix shape does not match the grid"));
        }
        Ok(Self {
            levels,
            n_paths,
            grid,
            seed,
            model_label: model_label.into(),
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn path(&self, j: usize) -> &[f64] {
        let c = self.grid.n_columns();
        &self.levels[j * c..(j + 1) * c]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.levels.chunks_exact(self.grid.n_columns())
    }

    /// Levels from inception onwards for path `j`.
    pub fn post_inception(&self, j: usize) -> &[f64] {
        &self.path(j)[self.grid.warmup_steps..]
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

/// Counters for clamped or floored numerical events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Steps where the Dupire ratio was degenerate and local vol was floored.
    pub dupire_floored_steps: u64,
    /// Steps where the realized-vol estimator hit its floor.
    pub estimator_floored_steps: u64,
    /// Steps where the vol-targeted level hit its positivity floor.
    pub floored_x_steps: u64,
    /// Leverage bins with no particles that inherited a neighbour.
    pub empty_leverage_bins: u64,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Diagnostics) {
        self.dupire_floored_steps += other.dupire_floored_steps;
        self.estimator_floored_steps += other.estimator_floored_steps;
        self.floored_x_steps += other.floored_x_steps;
        self.empty_leverage_bins += other.empty_leverage_bins;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_spec_json_tags() {
        let m = ModelSpec::constant_vol(100.0, 0.0, 0.2);
        let js = serde_json::to_string(&m).unwrap();
        assert!(js.contains("\"kind\":\"constant_vol\""));
        let back: ModelSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ModelSpec::constant_vol(0.0, 0.0, 0.2).validate().is_err());
        assert!(ModelSpec::constant_vol(100.0, 0.0, -0.1)
            .validate()
            .is_err());
        let s = ImpliedVolSurface::flat(0.2).unwrap();
        let bad = SlvParams {
            eta: 1.0,
            kappa: 1.0,
            rho: -1.5,
        };
        assert!(ModelSpec::slv(100.0, 0.0, s, bad).validate().is_err());
    }

    #[test]
    fn grid_for_half_year() {
        let g = TimeGrid::for_horizon(252, 0.5, 40).unwrap();
        assert_eq!(g.n_steps, 126);
        assert_eq!(g.n_columns(), 167);
        assert!(TimeGrid::new(0, 1, 0).is_err());
        assert!(TimeGrid::new(252, 0, 0).is_err());
    }
}

use crate::error::{config_err, Result};
use crate::par;

use super::leverage::{calibrate_slv_leverage, Leverage};
use super::rng::PathStreams;
use super::{Diagnostics, Dynamics, ModelSpec, PathSet, SlvParams, TimeGrid};

/// Exact one-step transition of `ln Z` plus the shock correlation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FactorStep {
    decay: f64,
    shift: f64,
    noise: f64,
    rho: f64,
    rho_bar: f64,
}

impl FactorStep {
    pub(crate) fn new(p: &SlvParams, dt: f64) -> Self {
        let (decay, shift, noise) = if p.kappa > 0.0 {
            let decay = (-p.kappa * dt).exp();
            let shift = -0.5 * p.eta * p.eta * (1.0 - decay) / p.kappa;
            let noise = p.eta * ((1.0 - decay * decay) / (2.0 * p.kappa)).sqrt();
            (decay, shift, noise)
        } else {
            (1.0, -0.5 * p.eta * p.eta * dt, p.eta * dt.sqrt())
        };
        Self {
            decay,
            shift,
            noise,
            rho: p.rho,
            rho_bar: (1.0 - p.rho * p.rho).max(0.0).sqrt(),
        }
    }

    #[inline]
    pub(crate) fn advance(&self, ln_z: f64, eps_spot: f64, eps_indep: f64) -> f64 {
        let eps_z = self.rho * eps_spot + self.rho_bar * eps_indep;
        ln_z * self.decay + self.shift + self.noise * eps_z
    }
}

/// State of one particle: log spot and log vol factor.
#[derive(Debug, Clone, Copy)]
pub(crate) struct State {
    pub ln_s: f64,
    pub ln_z: f64,
}

/// Model with everything needed to step a path.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    model: ModelSpec,
    grid: TimeGrid,
    leverage: Leverage,
    factor: Option<FactorStep>,
    sqrt_dt: f64,
}

impl PathSimulator {
    /// Simulator for constant-vol and local-vol models, or SLV with `eta = 0`.
    pub fn new(model: ModelSpec, grid: TimeGrid) -> Result<Self> {
        if let Dynamics::Slv { slv, .. } = &model.dynamics {
            if slv.eta > 0.0 {
                return Err(config_err(
                    "SLV with eta > 0 needs a calibrated leverage table",
                ));
            }
        }
        Self::with_leverage(model, grid, Leverage::Identity)
    }

    pub fn with_leverage(model: ModelSpec, grid: TimeGrid, leverage: Leverage) -> Result<Self> {
        model.validate()?;
        grid.validate()?;
        if let Leverage::Table(t) = &leverage {
            if !matches!(model.dynamics, Dynamics::Slv { .. }) {
                return Err(config_err("leverage table supplied for a non-SLV model"));
            }
            if t.steps.len() < grid.warmup_steps.max(grid.n_steps) {
                return Err(config_err("leverage table is shorter than the time grid"));
            }
        }
        let factor = match &model.dynamics {
            Dynamics::Slv { slv, .. } => Some(FactorStep::new(slv, grid.dt())),
            _ => None,
        };
        let sqrt_dt = grid.dt().sqrt();
        Ok(Self {
            model,
            grid,
            leverage,
            factor,
            sqrt_dt,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn leverage(&self) -> &Leverage {
        &self.leverage
    }

    /// Local (diffusion) vol of `S` before the stochastic multiplier.
    #[inline]
    pub(crate) fn local_vol(&self, s: f64, t: f64, diag: &mut Diagnostics) -> f64 {
        match &self.model.dynamics {
            Dynamics::ConstantVol { vol } => *vol,
            Dynamics::LocalVol { surface } | Dynamics::Slv { surface, .. } => {
                let v = surface.local_vol_checked(s, t, self.model.forward(t));
                if v.degenerate {
                    diag.dupire_floored_steps += 1;
                }
                v.vol
            }
        }
    }

    /// Advances `state` by one step starting at time `t`, using leverage
    /// factor `lev_factor` for SLV.
    #[inline]
    pub(crate) fn step(
        &self,
        state: &mut State,
        t: f64,
        lev_factor: f64,
        streams: &mut PathStreams,
        diag: &mut Diagnostics,
    ) {
        let dt = self.grid.dt();
        let eps_s = streams.spot_shock();
        let s = state.ln_s.exp();
        let mut vol = self.local_vol(s, t, diag);
        if let Some(f) = &self.factor {
            let eps_2 = streams.factor_shock();
            if let Leverage::Table(_) = self.leverage {
                vol *= lev_factor;
            }
            vol *= state.ln_z.exp();
            state.ln_z = f.advance(state.ln_z, eps_s, eps_2);
        }
        state.ln_s += (self.model.drift - 0.5 * vol * vol) * dt + vol * self.sqrt_dt * eps_s;
    }

    fn run_segment(&self, streams: &mut PathStreams, out: &mut [f64], diag: &mut Diagnostics) {
        let spot = self.model.spot;
        let dt = self.grid.dt();
        let mut state = State {
            ln_s: spot.ln(),
            ln_z: 0.0,
        };
        out[0] = spot;
        for k in 0..out.len() - 1 {
            let t = k as f64 * dt;
            let lev = self.leverage.factor(k, state.ln_s.exp());
            self.step(&mut state, t, lev, streams, diag);
            out[k + 1] = state.ln_s.exp();
        }
    }

    /// Simulates path `j` into `out` (length `grid.n_columns()`).
    ///
    /// The warmup segment is generated from spot with the model's own
    /// dynamics and rescaled so that it ends exactly at spot; the
    /// post-inception segment then restarts from `(spot, Z = 1)` at `t = 0`.
    pub fn simulate_path(&self, seed: u64, j: usize, out: &mut [f64]) -> Diagnostics {
        debug_assert_eq!(out.len(), self.grid.n_columns());
        let mut diag = Diagnostics::default();
        let mut streams = PathStreams::new(seed, j as u64);
        let w = self.grid.warmup_steps;
        let spot = self.model.spot;
        if w > 0 {
            self.run_segment(&mut streams, &mut out[..=w], &mut diag);
            let ratio = spot / out[w];
            out[..w].iter_mut().for_each(|x| *x *= ratio);
        }
        self.run_segment(&mut streams, &mut out[w..], &mut diag);
        diag
    }
}

/// Simulates `n_paths` paths. SLV models with `eta > 0` are first calibrated
/// with `n_paths` particles under a seed derived from `seed`.
pub fn simulate_paths(
    model: &ModelSpec,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    model.validate()?;
    let leverage = match &model.dynamics {
        Dynamics::Slv { .. } => {
            calibrate_slv_leverage(model, grid, n_paths, calibration_seed(seed))?
        }
        _ => Leverage::Identity,
    };
    let sim = PathSimulator::with_leverage(model.clone(), grid, leverage)?;
    simulate_paths_with(&sim, n_paths, seed, "")
}

/// Seed used for the leverage calibration particles of a simulation run.
pub fn calibration_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

pub fn simulate_paths_with(
    sim: &PathSimulator,
    n_paths: usize,
    seed: u64,
    label: &str,
) -> Result<PathSet> {
    if n_paths == 0 {
        return Err(config_err("n_paths must be >= 1"));
    }
    let cols = sim.grid.n_columns();
    let mut levels = vec![0.0; n_paths * cols];
    let diag = par::map_rows(&mut levels, cols, |j, row| sim.simulate_path(seed, j, row));
    let mut set = PathSet::from_levels(levels, n_paths, sim.grid, seed, label)?;
    set.diagnostics = diag;
    Ok(set)
}

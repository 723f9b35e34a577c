//! SLV leverage calibration by the binned particle method.
//!
//! At each step the particles are sorted by spot and split into
//! equal-population bins. Within a bin the conditional second moment
//! `E[Z^2 | S]` is estimated and the leverage is set to
//! `L(S, t) = sigma_dupire(S, t) / sqrt(E[Z^2 | S])`, so that
//! `L^2 E[Z^2 | S] = sigma_dupire^2` bin by bin. The particles are then
//! advanced one step with that leverage.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::par;

use super::rng::PathStreams;
use super::simulate::{PathSimulator, State};
use super::{Diagnostics, Dynamics, ModelSpec, TimeGrid};

pub const LEVERAGE_BINS: usize = 50;
const Z2_FLOOR: f64 = 1e-4;

/// One bin of a serialized leverage table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeverageBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub leverage: f64,
}

/// Leverage for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct LeverageStep {
    /// `n_bins + 1` spot boundaries; the outer two are the particle extremes.
    pub edges: Vec<f64>,
    /// `E[Z^2 | S in bin]`, floored.
    pub cond_z2: Vec<f64>,
    /// Particle count per bin.
    pub counts: Vec<usize>,
    /// Leverage evaluated at each bin's midpoint, for inspection.
    pub leverage_mid: Vec<f64>,
    inv_sqrt_z2: Vec<f64>,
}

impl LeverageStep {
    pub fn n_bins(&self) -> usize {
        self.cond_z2.len()
    }

    /// Bin holding spot level `s`; levels beyond the outer edges map to the
    /// end bins.
    pub fn bin_of(&self, s: f64) -> usize {
        let n = self.n_bins();
        self.edges[1..n].partition_point(|&e| e <= s)
    }

    /// Multiplier applied to the Dupire vol: `1 / sqrt(E[Z^2 | S])`.
    #[inline]
    pub fn factor(&self, s: f64) -> f64 {
        self.inv_sqrt_z2[self.bin_of(s)]
    }

    pub fn bins(&self) -> Vec<LeverageBin> {
        (0..self.n_bins())
            .map(|b| LeverageBin {
                bin_lo: self.edges[b],
                bin_hi: self.edges[b + 1],
                leverage: self.leverage_mid[b],
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeverageTable {
    pub steps: Vec<LeverageStep>,
    pub empty_bins: u64,
}

impl LeverageTable {
    /// Per-step arrays of `{bin_lo, bin_hi, leverage}`.
    pub fn to_bins(&self) -> Vec<Vec<LeverageBin>> {
        self.steps.iter().map(LeverageStep::bins).collect()
    }
}

/// Leverage used by an SLV simulation. `Identity` means `L = sigma_dupire`.
#[derive(Debug, Clone, PartialEq)]
pub enum Leverage {
    Identity,
    Table(LeverageTable),
}

impl Leverage {
    #[inline]
    pub fn factor(&self, step: usize, s: f64) -> f64 {
        match self {
            Leverage::Identity => 1.0,
            Leverage::Table(t) => t.steps[step.min(t.steps.len() - 1)].factor(s),
        }
    }

    pub fn empty_bins(&self) -> u64 {
        match self {
            Leverage::Identity => 0,
            Leverage::Table(t) => t.empty_bins,
        }
    }
}

struct Particle {
    state: State,
    streams: PathStreams,
}

/// Calibrates the SLV leverage for `model` on `grid` with `n_paths` particles.
///
/// The table covers `max(warmup_steps, n_steps)` steps so that both the
/// warmup and post-inception segments can use it.
pub fn calibrate_slv_leverage(
    model: &ModelSpec,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<Leverage> {
    calibrate_with_bins(model, grid, n_paths, seed, LEVERAGE_BINS)
}

pub fn calibrate_with_bins(
    model: &ModelSpec,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    n_bins: usize,
) -> Result<Leverage> {
    model.validate()?;
    let (surface, slv) = match &model.dynamics {
        Dynamics::Slv { surface, slv } => (surface, slv),
        _ => return Err(config_err("leverage calibration needs an SLV model")),
    };
    if slv.eta == 0.0 {
        return Ok(Leverage::Identity);
    }
    if n_paths == 0 || n_bins == 0 {
        return Err(config_err(
            "calibration needs at least one particle and one bin",
        ));
    }

    // The stepping kernel is shared with the path simulator; the leverage
    // factor is passed explicitly at each step.
    let kernel =
        PathSimulator::with_leverage(model.clone(), grid, Leverage::Table(placeholder(grid)))?;
    let n_steps = grid.warmup_steps.max(grid.n_steps);
    let dt = grid.dt();

    let mut particles: Vec<Particle> = (0..n_paths)
        .map(|j| Particle {
            state: State {
                ln_s: model.spot.ln(),
                ln_z: 0.0,
            },
            streams: PathStreams::new(seed, j as u64),
        })
        .collect();

    let mut steps = Vec::with_capacity(n_steps);
    let mut empty_bins = 0u64;
    let mut scratch: Vec<(f64, f64)> = Vec::with_capacity(n_paths);
    for k in 0..n_steps {
        let t = k as f64 * dt;
        scratch.clear();
        scratch.extend(particles.iter().map(|p| {
            let z = p.state.ln_z.exp();
            (p.state.ln_s.exp(), z * z)
        }));
        let (step, empty) = bin_step(&mut scratch, n_bins, |s| {
            surface.local_vol_at(s, t, model.forward(t))
        });
        empty_bins += empty;
        let step_ref = &step;
        par::for_each_mut(&mut particles, |p| {
            let mut d = Diagnostics::default();
            let lev = step_ref.factor(p.state.ln_s.exp());
            kernel.step(&mut p.state, t, lev, &mut p.streams, &mut d);
            d
        });
        steps.push(step);
    }
    Ok(Leverage::Table(LeverageTable { steps, empty_bins }))
}

fn placeholder(grid: TimeGrid) -> LeverageTable {
    let step = LeverageStep {
        edges: vec![0.0, 0.0],
        cond_z2: vec![1.0],
        counts: vec![0],
        leverage_mid: vec![0.0],
        inv_sqrt_z2: vec![1.0],
    };
    LeverageTable {
        steps: vec![step; grid.warmup_steps.max(grid.n_steps)],
        empty_bins: 0,
    }
}

/// Builds one step of the table from `(spot, z^2)` samples.
fn bin_step(
    samples: &mut [(f64, f64)],
    n_bins: usize,
    dupire: impl Fn(f64) -> f64,
) -> (LeverageStep, u64) {
    samples.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let n = samples.len();
    let mut edges = Vec::with_capacity(n_bins + 1);
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for b in 0..n_bins {
        let (lo, hi) = (b * n / n_bins, (b + 1) * n / n_bins);
        edges.push(samples[lo.min(n - 1)].0);
        counts[b] = hi - lo;
        sums[b] = samples[lo..hi].iter().map(|x| x.1).sum();
    }
    edges.push(samples[n - 1].0);

    let populated: Vec<usize> = (0..n_bins).filter(|&b| counts[b] > 0).collect();
    let mut empty = 0u64;
    let cond_z2: Vec<f64> = (0..n_bins)
        .map(|b| {
            let src = if counts[b] > 0 {
                b
            } else {
                empty += 1;
                *populated
                    .iter()
                    .min_by_key(|&&p| p.abs_diff(b))
                    .expect("at least one populated bin")
            };
            (sums[src] / counts[src] as f64).max(Z2_FLOOR)
        })
        .collect();
    let inv_sqrt_z2: Vec<f64> = cond_z2.iter().map(|z2| 1.0 / z2.sqrt()).collect();
    let leverage_mid = (0..n_bins)
        .map(|b| dupire(0.5 * (edges[b] + edges[b + 1])) * inv_sqrt_z2[b])
        .collect();
    (
        LeverageStep {
            edges,
            cond_z2,
            counts,
            leverage_mid,
            inv_sqrt_z2,
        },
        empty,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_models::{ImpliedVolSurface, SlvParams};

    #[test]
    fn zero_vol_of_vol_returns_identity() {
        let s = ImpliedVolSurface::flat(0.2).unwrap();
        let m = ModelSpec::slv(
            100.0,
            0.0,
            s,
            SlvParams {
                eta: 0.0,
                kappa: 10.0,
                rho: -0.7,
            },
        );
        let g = TimeGrid::new(252, 10, 5).unwrap();
        assert_eq!(
            calibrate_slv_leverage(&m, g, 100, 1).unwrap(),
            Leverage::Identity
        );
        assert_eq!(Leverage::Identity.factor(3, 120.0), 1.0);
    }

    #[test]
    fn bins_are_equal_population() {
        let mut xs: Vec<(f64, f64)> = (0..1000)
            .map(|i| (1000.0 - i as f64, 1.0 + (i % 3) as f64))
            .collect();
        let (step, empty) = bin_step(&mut xs, 50, |_| 0.2);
        assert_eq!(empty, 0);
        assert!(step.counts.iter().all(|&c| c == 20));
        assert_eq!(step.edges[0], 1.0);
        assert_eq!(step.edges[50], 1000.0);
        assert_eq!(step.bin_of(0.0), 0);
        assert_eq!(step.bin_of(1e9), 49);
        assert_eq!(step.bin_of(21.0), 1);
    }

    #[test]
    fn empty_bins_inherit_neighbour() {
        let mut xs: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 4.0)).collect();
        let (step, empty) = bin_step(&mut xs, 50, |_| 0.2);
        assert_eq!(empty, 40);
        assert!(step.cond_z2.iter().all(|&z| z == 4.0));
        assert!(step.leverage_mid.iter().all(|&l| (l - 0.1).abs() < 1e-15));
    }

    #[test]
    fn z2_floor_applies() {
        let mut xs: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, 0.0)).collect();
        let (step, _) = bin_step(&mut xs, 10, |_| 0.2);
        assert!(step.cond_z2.iter().all(|&z| z == Z2_FLOOR));
    }

    #[test]
    fn table_serializes_to_bins() {
        let s = ImpliedVolSurface::flat(0.2).unwrap();
        let m = ModelSpec::slv(
            100.0,
            0.0,
            s,
            SlvParams {
                eta: 1.0,
                kappa: 5.0,
                rho: -0.5,
            },
        );
        let g = TimeGrid::new(252, 5, 2).unwrap();
        let Leverage::Table(t) = calibrate_with_bins(&m, g, 200, 3, 4).unwrap() else {
            panic!()
        };
        let js = serde_json::to_value(t.to_bins()).unwrap();
        assert_eq!(js.as_array().unwrap().len(), 5);
        assert!(js[0][0].get("bin_lo").is_some() && js[0][0].get("leverage").is_some());
    }
}

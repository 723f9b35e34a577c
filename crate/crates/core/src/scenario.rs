//! Config-driven experiments: one booking model against a list of market
//! models, each cell reporting the MRP, its ladder and payoff curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::{market_implied_from_prices, BucketScheme, Histogram, PriceVector};
use crate::error::{config_err, Error, Result};
use crate::market_models::{
    calibrate_slv_leverage, Diagnostics, Dynamics, ImpliedVolSurface, Leverage, LeverageBin,
    ModelSpec, PathSimulator, SlvParams, TimeGrid,
};
use crate::par;
use crate::risk_engine::{
    assess, decompose_full, Decomposition, MrpReport, PayoffPoint, RatesSpec,
};
use crate::vol_target::{overlay_path, variable_of, VariableMode, VolTargetConfig};

/// Market data shared by every model in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub spot: f64,
    pub drift: f64,
    #[serde(default = "default_steps_per_year")]
    pub steps_per_year: u32,
    pub surface: ImpliedVolSurface,
}

fn default_steps_per_year() -> u32 {
    252
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    ConstantVol { vol: f64 },
    LocalVol,
    Slv { eta: f64, kappa: f64, rho: f64 },
}

/// A model entry in the scenario file. Spot, surface and (unless
/// overridden) drift come from [`MarketConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledModel {
    pub label: String,
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
}

impl LabeledModel {
    pub fn resolve(&self, market: &MarketConfig) -> ModelSpec {
        let drift = self.drift.unwrap_or(market.drift);
        let dynamics = match self.kind {
            ModelKind::ConstantVol { vol } => Dynamics::ConstantVol { vol },
            ModelKind::LocalVol => Dynamics::LocalVol {
                surface: market.surface.clone(),
            },
            ModelKind::Slv { eta, kappa, rho } => Dynamics::Slv {
                surface: market.surface.clone(),
                slv: SlvParams { eta, kappa, rho },
            },
        };
        ModelSpec {
            spot: market.spot,
            drift,
            dynamics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub booking: u64,
    pub market: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub market: MarketConfig,
    pub booking_model: LabeledModel,
    pub market_models: Vec<LabeledModel>,
    pub vol_target: VolTargetConfig,
    /// When false the variable is read off `S` directly.
    #[serde(default = "yes")]
    pub apply_overlay: bool,
    #[serde(default = "default_variable")]
    pub variable: VariableMode,
    pub horizon: f64,
    pub n_paths: usize,
    #[serde(default = "default_buckets")]
    pub buckets: usize,
    pub seeds: Seeds,
    #[serde(default)]
    pub rates: RatesSpec,
    /// Particles for SLV leverage calibration; defaults to `n_paths`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_paths: Option<usize>,
    /// Add half a count to every bucket before normalizing.
    #[serde(default)]
    pub smoothing: bool,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<String>,
}

fn yes() -> bool {
    true
}

fn default_variable() -> VariableMode {
    VariableMode::Terminal
}

fn default_buckets() -> usize {
    20
}

pub const MIN_SCENARIO_PATHS: usize = 1000;
const SMOOTHING_PSEUDO_COUNT: f64 = 0.5;

impl ScenarioConfig {
    /// Parses a scenario file, reporting the line and column of JSON errors.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {}", e.line(), e.column(), e)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(false)
    }

    fn validate_with(&self, shared_seed: bool) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(config_err("horizon: must be > 0"));
        }
        if self.n_paths < MIN_SCENARIO_PATHS {
            return Err(config_err(format!(
                "n_paths: must be >= {MIN_SCENARIO_PATHS}"
            )));
        }
        if self.buckets < 2 {
            return Err(config_err("buckets: must be >= 2"));
        }
        if !shared_seed && self.seeds.booking == self.seeds.market {
            return Err(config_err("seeds: booking and market seeds must differ"));
        }
        if self.market_models.is_empty() {
            return Err(config_err(
                "market_models: at least one market model is required",
            ));
        }
        let mut labels: Vec<&str> = self
            .market_models
            .iter()
            .map(|m| m.label.as_str())
            .collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(config_err("market_models: labels must be unique"));
        }
        self.vol_target
            .validate()
            .map_err(|e| config_err(format!("vol_target: {e}")))?;
        self.rates
            .validate()
            .map_err(|e| config_err(format!("rates: {e}")))?;
        self.market
            .surface
            .validate()
            .map_err(|e| config_err(format!("market.surface: {e}")))?;
        self.grid()?;
        for m in std::iter::once(&self.booking_model).chain(&self.market_models) {
            m.resolve(&self.market)
                .validate()
                .map_err(|e| config_err(format!("model '{}': {e}", m.label)))?;
        }
        Ok(())
    }

    /// Grid with a warmup long enough for the realized-vol window.
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::for_horizon(
            self.market.steps_per_year,
            self.horizon,
            self.vol_target.window,
        )
    }

    pub fn model(&self, label: &str) -> Option<&LabeledModel> {
        std::iter::once(&self.booking_model)
            .chain(&self.market_models)
            .find(|m| m.label == label)
    }
}

/// Variable samples for one model together with run diagnostics.
#[derive(Debug, Clone)]
pub struct SampleRun {
    pub samples: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub leverage: Option<Vec<Vec<LeverageBin>>>,
}

/// Simulates `n_paths` paths, applies the overlay when `vol_target` is set
/// and returns one variable value per path. Paths are streamed, so memory is
/// independent of `n_paths`.
pub fn simulate_variable(
    model: &ModelSpec,
    grid: TimeGrid,
    vol_target: Option<&VolTargetConfig>,
    mode: VariableMode,
    n_paths: usize,
    seed: u64,
    calibration_paths: usize,
) -> Result<SampleRun> {
    let leverage = match &model.dynamics {
        Dynamics::Slv { .. } => calibrate_slv_leverage(
            model,
            grid,
            calibration_paths,
            crate::market_models::calibration_seed(seed),
        )?,
        _ => Leverage::Identity,
    };
    let lev_bins = match &leverage {
        Leverage::Table(t) => Some(t.to_bins()),
        Leverage::Identity => None,
    };
    let empty_bins = leverage.empty_bins();
    let sim = PathSimulator::with_leverage(model.clone(), grid, leverage)?;
    if let Some(vt) = vol_target {
        if grid.warmup_steps < vt.window {
            return Err(config_err("vol-target window exceeds the warmup history"));
        }
    }
    let cols = grid.n_columns();
    let results: Vec<(f64, Diagnostics)> = par::map_indices(n_paths, |j| {
        let mut levels = vec![0.0; cols];
        let mut diag = sim.simulate_path(seed, j, &mut levels);
        let value = match vol_target {
            Some(vt) => {
                let mut x = vec![0.0; grid.n_steps + 1];
                diag.merge(&overlay_path(&levels, grid.warmup_steps, vt, &mut x));
                variable_of(&x, mode)
            }
            None => variable_of(&levels[grid.warmup_steps..], mode),
        };
        (value, diag)
    });
    let mut diagnostics = Diagnostics {
        empty_leverage_bins: empty_bins,
        ..Default::default()
    };
    let mut samples = Vec::with_capacity(n_paths);
    for (v, d) in results {
        if !v.is_finite() {
            return Err(Error::Simulation("non-finite path variable".into()));
        }
        samples.push(v);
        diagnostics.merge(&d);
    }
    Ok(SampleRun {
        samples,
        diagnostics,
        leverage: lev_bins,
    })
}

/// One booking/market comparison.
#[derive(Debug, Clone)]
pub struct Cell {
    pub booking_label: String,
    pub market_label: String,
    pub report: MrpReport,
    pub decomposition: Decomposition,
    pub diagnostics: Diagnostics,
    pub leverage: Option<Vec<Vec<LeverageBin>>>,
}

impl Cell {
    pub fn ladder_pct(&self) -> LadderJson {
        let l = &self.decomposition.ladder;
        LadderJson {
            raw_pct: finite_pct(l.mrp_raw),
            mean_pct: finite_pct(l.mrp_mean_corrected),
            meanvar_pct: finite_pct(l.mrp_mean_var_corrected),
        }
    }

    pub fn to_json(&self) -> CellJson {
        let r = &self.report;
        CellJson {
            booking_label: self.booking_label.clone(),
            market_label: self.market_label.clone(),
            mrp_nats: finite(r.mrp_horizon),
            mrp_annual_pct: finite_pct(r.mrp_annual),
            er_annual_pct: finite_pct(r.er_annual),
            material: r.material,
            infinite: r.infinite,
            infinite_buckets: r.infinite_buckets.clone(),
            zero_market_buckets: self.zero_market_buckets(),
            ladder: self.ladder_pct(),
            payoff: r.payoff.points(),
            residual_payoff: self.decomposition.ladder.residual_payoff.points(),
            diagnostics: DiagnosticsJson::from(&self.diagnostics),
        }
    }

    /// Buckets where raw booking samples exist but no market sample does.
    /// Infinite without smoothing; kept visible when smoothing is on.
    pub fn zero_market_buckets(&self) -> Vec<usize> {
        let d = &self.decomposition;
        match (&d.raw.counts, &d.market.counts) {
            (Some(b), Some(m)) => (0..b.len()).filter(|&i| b[i] > 0 && m[i] == 0).collect(),
            _ => Vec::new(),
        }
    }

    /// Payoff CSV for one correction level: `bucket_lo,bucket_hi,b,m,f`.
    pub fn payoff_csv(&self, level: &str) -> Option<String> {
        let d = &self.decomposition;
        let (_, b) = d.levels().into_iter().find(|(name, _)| *name == level)?;
        Some(payoff_csv(b, &d.market))
    }
}

fn payoff_csv(b: &Histogram, m: &Histogram) -> String {
    let mut out = String::from("bucket_lo,bucket_hi,b,m,f\n");
    for i in 0..b.n_buckets() {
        let (lo, hi) = b.scheme.bounds(i);
        let (bi, mi) = (b.probs[i], m.probs[i]);
        let f = match (bi == 0.0, mi == 0.0) {
            (true, true) => "1".to_string(),
            (false, true) => "inf".to_string(),
            _ => format!("{}", bi / mi),
        };
        let _ = writeln!(out, "{lo},{hi},{bi},{mi},{f}");
    }
    out
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn finite_pct(x: f64) -> Option<f64> {
    finite(100.0 * x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderJson {
    pub raw_pct: Option<f64>,
    pub mean_pct: Option<f64>,
    pub meanvar_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticsJson {
    /// Dupire floors plus realized-vol estimator floors.
    pub floored_vol_steps: u64,
    pub floored_x_steps: u64,
    pub empty_leverage_bins: u64,
}

impl From<&Diagnostics> for DiagnosticsJson {
    fn from(d: &Diagnostics) -> Self {
        Self {
            floored_vol_steps: d.dupire_floored_steps + d.estimator_floored_steps,
            floored_x_steps: d.floored_x_steps,
            empty_leverage_bins: d.empty_leverage_bins,
        }
    }
}

/// `None` numbers are infinite and flagged by `infinite`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellJson {
    pub booking_label: String,
    pub market_label: String,
    pub mrp_nats: Option<f64>,
    pub mrp_annual_pct: Option<f64>,
    pub er_annual_pct: Option<f64>,
    pub material: bool,
    pub infinite: bool,
    pub infinite_buckets: Vec<usize>,
    pub zero_market_buckets: Vec<usize>,
    pub ladder: LadderJson,
    pub payoff: Vec<PayoffPoint>,
    pub residual_payoff: Vec<PayoffPoint>,
    pub diagnostics: DiagnosticsJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookingJson {
    pub label: String,
    pub diagnostics: DiagnosticsJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub config_echo: ScenarioConfig,
    pub booking: BookingJson,
    pub cells: Vec<CellJson>,
}

/// Everything a scenario run produced.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub config: ScenarioConfig,
    pub booking_diagnostics: Diagnostics,
    pub cells: Vec<Cell>,
}

impl ScenarioOutcome {
    pub fn any_infinite(&self) -> bool {
        self.cells.iter().any(|c| c.report.infinite)
    }

    pub fn cell(&self, market_label: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.market_label == market_label)
    }

    pub fn report_json(&self) -> ReportJson {
        ReportJson {
            config_echo: self.config.clone(),
            booking: BookingJson {
                label: self.config.booking_model.label.clone(),
                diagnostics: DiagnosticsJson::from(&self.booking_diagnostics),
            },
            cells: self.cells.iter().map(Cell::to_json).collect(),
        }
    }

    pub fn report_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report_json()).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes `report.json`, one payoff CSV per cell and correction level,
    /// and leverage tables for SLV markets.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.report_string())?;
        for cell in &self.cells {
            let slug = slugify(&cell.market_label);
            for (level, _) in cell.decomposition.levels() {
                let csv = cell.payoff_csv(level).expect("known level");
                fs::write(dir.join(format!("payoff_{slug}_{level}.csv")), csv)?;
            }
            if let Some(lev) = &cell.leverage {
                let js = serde_json::to_string(lev).expect("leverage serializes");
                fs::write(dir.join(format!("leverage_{slug}.json")), js)?;
            }
        }
        Ok(())
    }
}

/// File-name-safe form of a label.
pub fn slugify(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn run_model(config: &ScenarioConfig, model: &LabeledModel, seed: u64) -> Result<SampleRun> {
    let grid = config.grid()?;
    let spec = model.resolve(&config.market);
    let vt = config.apply_overlay.then_some(&config.vol_target);
    simulate_variable(
        &spec,
        grid,
        vt,
        config.variable,
        config.n_paths,
        seed,
        config.calibration_paths.unwrap_or(config.n_paths),
    )
}

fn build_cell(
    config: &ScenarioConfig,
    booking: &LabeledModel,
    b: &SampleRun,
    market: &LabeledModel,
    m: SampleRun,
) -> Result<Cell> {
    let smoothing = config.smoothing.then_some(SMOOTHING_PSEUDO_COUNT);
    let decomposition = decompose_full(
        &b.samples,
        &m.samples,
        config.buckets,
        config.horizon,
        smoothing,
    )?;
    let mut report = assess(
        &decomposition.raw,
        &decomposition.market,
        &config.rates,
        config.horizon,
    )?;
    report.ladder = Some(decomposition.ladder.clone());
    Ok(Cell {
        booking_label: booking.label.clone(),
        market_label: market.label.clone(),
        report,
        decomposition,
        diagnostics: m.diagnostics,
        leverage: m.leverage,
    })
}

/// Runs the booking model against every market model. Cells are ordered by
/// market label.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    config.validate()?;
    let booking = &config.booking_model;
    let b = run_model(config, booking, config.seeds.booking)?;
    let mut markets: Vec<&LabeledModel> = config.market_models.iter().collect();
    markets.sort_by(|x, y| x.label.cmp(&y.label));
    let mut cells = Vec::with_capacity(markets.len());
    for market in markets {
        let m = run_model(config, market, config.seeds.market)?;
        cells.push(build_cell(config, booking, &b, market, m)?);
    }
    Ok(ScenarioOutcome {
        config: config.clone(),
        booking_diagnostics: b.diagnostics,
        cells,
    })
}

/// A single pairwise cell with any configured model as the booking. With
/// `shared_seed` both runs use the booking seed.
pub fn cross_check(
    config: &ScenarioConfig,
    booking_label: &str,
    market_label: &str,
    shared_seed: bool,
) -> Result<Cell> {
    config.validate_with(shared_seed)?;
    let booking = config
        .model(booking_label)
        .ok_or_else(|| config_err(format!("unknown model label '{booking_label}'")))?;
    let market = config
        .model(market_label)
        .ok_or_else(|| config_err(format!("unknown model label '{market_label}'")))?;
    let b = run_model(config, booking, config.seeds.booking)?;
    let market_seed = if shared_seed {
        config.seeds.booking
    } else {
        config.seeds.market
    };
    let m = run_model(config, market, market_seed)?;
    build_cell(config, booking, &b, market, m)
}

/// Booking samples against a market given by state prices. Samples outside
/// the priced range are assigned to the end buckets. Rates come from the
/// price normalization, annualized over the horizon.
pub fn cross_check_prices(
    config: &ScenarioConfig,
    booking_label: &str,
    prices: &PriceVector,
) -> Result<PriceCheck> {
    config.validate()?;
    let booking = config
        .model(booking_label)
        .ok_or_else(|| config_err(format!("unknown model label '{booking_label}'")))?;
    let implied = market_implied_from_prices(prices)?;
    let scheme: &BucketScheme = &implied.histogram.scheme;
    let b = run_model(config, booking, config.seeds.booking)?;
    let clamped: Vec<f64> = b
        .samples
        .iter()
        .map(|x| x.clamp(scheme.lo(), scheme.hi()))
        .collect();
    let hist = crate::distributions::histogram_from_samples(&clamped, scheme)?;
    let rates = RatesSpec {
        rfr: implied.rfr / config.horizon,
        cr: implied.cr / config.horizon,
        materiality_threshold: config.rates.materiality_threshold,
    };
    let report = assess(&hist, &implied.histogram, &rates, config.horizon)?;
    Ok(PriceCheck {
        booking_label: booking.label.clone(),
        rates,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct PriceCheck {
    pub booking_label: String,
    pub rates: RatesSpec,
    pub report: MrpReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceCheckJson {
    pub booking_label: String,
    pub rfr_annual_pct: f64,
    pub cr_annual_pct: f64,
    pub mrp_nats: Option<f64>,
    pub mrp_annual_pct: Option<f64>,
    pub er_annual_pct: Option<f64>,
    pub material: bool,
    pub infinite: bool,
    pub infinite_buckets: Vec<usize>,
    pub payoff: Vec<PayoffPoint>,
}

impl PriceCheck {
    pub fn to_json(&self) -> PriceCheckJson {
        let r = &self.report;
        PriceCheckJson {
            booking_label: self.booking_label.clone(),
            rfr_annual_pct: 100.0 * self.rates.rfr,
            cr_annual_pct: 100.0 * self.rates.cr,
            mrp_nats: finite(r.mrp_horizon),
            mrp_annual_pct: finite_pct(r.mrp_annual),
            er_annual_pct: finite_pct(r.er_annual),
            material: r.material,
            infinite: r.infinite,
            infinite_buckets: r.infinite_buckets.clone(),
            payoff: r.payoff.points(),
        }
    }
}

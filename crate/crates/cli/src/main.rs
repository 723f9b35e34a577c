use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mrp_core::distributions::PriceVector;
use mrp_core::scenario::{cross_check, cross_check_prices, run_scenario, slugify, ScenarioConfig};
use mrp_core::Error;

/// Model risk analysis by growth-optimal investment structuring.
#[derive(Parser)]
#[command(name = "mrp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the booking model against every market model in the config.
    Run(Common),
    /// Run a single booking/market cell using any two configured models.
    CrossCheck {
        #[command(flatten)]
        common: Common,
        /// Label of the model used as booking.
        #[arg(long)]
        booking: String,
        /// Label of the model used as market.
        #[arg(long, required_unless_present = "prices")]
        market: Option<String>,
        /// Use the booking seed for both runs.
        #[arg(long)]
        shared_seed: bool,
        /// Market given by a price-vector JSON instead of a simulated model.
        #[arg(long, conflicts_with = "market")]
        prices: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the number of Monte-Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed_booking: Option<u64>,
    #[arg(long)]
    seed_market: Option<u64>,
    /// Override the bucket count.
    #[arg(long)]
    buckets: Option<usize>,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_INFINITE: u8 = 2;
const EXIT_SIMULATION: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_SIMULATION,
    }
}

impl Common {
    fn load(&self) -> Result<(ScenarioConfig, PathBuf), Error> {
        let mut cfg = ScenarioConfig::load(&self.config)?;
        if let Some(p) = self.paths {
            cfg.n_paths = p;
        }
        if let Some(s) = self.seed_booking {
            cfg.seeds.booking = s;
        }
        if let Some(s) = self.seed_market {
            cfg.seeds.market = s;
        }
        if let Some(n) = self.buckets {
            cfg.buckets = n;
        }
        let out = self
            .output_dir
            .clone()
            .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("mrp-output"));
        Ok((cfg, out))
    }
}

fn fmt_pct(x: Option<f64>) -> String {
    x.map_or_else(|| "inf".to_string(), |v| format!("{v:.2}%"))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> std::io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    std::fs::write(path, s)
}

fn run(cli: Cli) -> Result<u8, (u8, String)> {
    let io_err = |e: std::io::Error| (EXIT_SIMULATION, format!("writing outputs: {e}"));
    let core_err = |e: Error| (exit_code(&e), e.to_string());
    match cli.command {
        Command::Run(common) => {
            let (cfg, out) = common.load().map_err(core_err)?;
            let outcome = run_scenario(&cfg).map_err(core_err)?;
            outcome.write(&out).map_err(io_err)?;
            println!(
                "{:<28} {:>10} {:>10} {:>10} {:>10}  verdict",
                "market", "MRP p.a.", "B*", "B**", "ER p.a."
            );
            for cell in &outcome.cells {
                let js = cell.to_json();
                let verdict = if js.material {
                    "material"
                } else {
                    "immaterial"
                };
                println!(
                    "{:<28} {:>10} {:>10} {:>10} {:>10}  {verdict}",
                    js.market_label,
                    fmt_pct(js.mrp_annual_pct),
                    fmt_pct(js.ladder.mean_pct),
                    fmt_pct(js.ladder.meanvar_pct),
                    fmt_pct(js.er_annual_pct),
                );
            }
            println!("wrote {}", out.join("report.json").display());
            Ok(if outcome.any_infinite() {
                EXIT_INFINITE
            } else {
                0
            })
        }
        Command::CrossCheck {
            common,
            booking,
            market,
            shared_seed,
            prices,
        } => {
            let (cfg, out) = common.load().map_err(core_err)?;
            std::fs::create_dir_all(&out).map_err(io_err)?;
            if let Some(path) = prices {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| (EXIT_CONFIG, format!("{}: {e}", path.display())))?;
                let pv: PriceVector = serde_json::from_str(&text).map_err(|e| {
                    (
                        EXIT_CONFIG,
                        format!(
                            "{}: line {} column {}: {e}",
                            path.display(),
                            e.line(),
                            e.column()
                        ),
                    )
                })?;
                let check = cross_check_prices(&cfg, &booking, &pv).map_err(core_err)?;
                let js = check.to_json();
                let file = out.join(format!("prices_{}.json", slugify(&booking)));
                write_json(&file, &js).map_err(io_err)?;
                println!(
                    "{booking} vs prices: MRP {} p.a., ER {} p.a.",
                    fmt_pct(js.mrp_annual_pct),
                    fmt_pct(js.er_annual_pct)
                );
                return Ok(if js.infinite { EXIT_INFINITE } else { 0 });
            }
            let market = market.expect("clap requires --market without --prices");
            let cell = cross_check(&cfg, &booking, &market, shared_seed).map_err(core_err)?;
            let js = cell.to_json();
            let file = out.join(format!(
                "cross_{}_vs_{}.json",
                slugify(&booking),
                slugify(&market)
            ));
            write_json(&file, &js).map_err(io_err)?;
            for (level, _) in cell.decomposition.levels() {
                let csv = cell.payoff_csv(level).expect("known level");
                let name = format!(
                    "payoff_{}_vs_{}_{level}.csv",
                    slugify(&booking),
                    slugify(&market)
                );
                std::fs::write(out.join(name), csv).map_err(io_err)?;
            }
            println!(
                "{booking} vs {market}: MRP {} p.a. (B* {}, B** {}), {}",
                fmt_pct(js.mrp_annual_pct),
                fmt_pct(js.ladder.mean_pct),
                fmt_pct(js.ladder.meanvar_pct),
                if js.material {
                    "material"
                } else {
                    "immaterial"
                }
            );
            Ok(if js.infinite { EXIT_INFINITE } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

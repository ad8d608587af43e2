//! Command-line entry point: `skewvar <simulate|estimate|backtest|evaluate|irf|risk|ingest>`.
//!
//! Exit codes: 0 success (including `--help`), 1 runtime failure, 2 usage error,
//! 3 missing or invalid configuration.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::config::{Config, SimulateSection};
use crate::error::{Error, Result};
use crate::forecast::{self, Archive};
use crate::ingest;
use crate::irf;
use crate::model::{generate, Dataset, ModelSpec, ParameterDraw, StatePath, Variant};
use crate::period::Quarter;
use crate::risk;
use crate::rv::RngHandle;
use crate::sampler::{self, Chain, SamplerOptions};
use crate::scoring::{self, Metric, PeriodWindow};

#[derive(Parser, Debug)]
#[command(
    name = "skewvar",
    version,
    about = "Bayesian VARs with stochastic volatility and time-varying skewness in mean"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and its true states.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides paths.out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the sampler on the full dataset and save the chain.
    Estimate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recursive out-of-sample forecasts over the configured origins.
    Backtest {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 1 is the bitwise reference mode.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Score a backtest archive against realized data.
    Evaluate {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        realized: PathBuf,
        /// `all` or a comma-separated list (rmse, log_score, crps, wls_both, wcrps_left, ...).
        #[arg(long, default_value = "all")]
        losses: String,
        /// JSON list of `{name, start, end}` windows; the full sample is always included.
        #[arg(long)]
        periods: Option<PathBuf>,
        #[arg(long, default_value = "full")]
        proposed: String,
        /// Comma-separated competitor variants; all other archived variants when absent.
        #[arg(long)]
        competitors: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generalized impulse responses to a volatility or skewness shock.
    Irf {
        #[arg(long)]
        chain: PathBuf,
        /// `h_<var>`, `d_<var>` or a 0-based state index.
        #[arg(long)]
        shock: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        size: f64,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = irf::DEFAULT_REPLICATIONS)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Percentiles and exceedance probabilities of one-step predictive distributions.
    Risk {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, default_value = "5,95", value_delimiter = ',')]
        percentiles: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Variables reported at annual rates (×4).
        #[arg(long, value_delimiter = ',')]
        annualize: Vec<String>,
        /// `<var>:<threshold>`, repeatable.
        #[arg(long)]
        exceed: Vec<String>,
        /// Predictive simulations per posterior draw.
        #[arg(long, default_value_t = 1)]
        sims: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build a dataset from raw series with a JSON recipe.
    Ingest {
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 3,
                _ => 1,
            }
        }
    }
}

fn require_config(path: Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(&p),
        None => Err(Error::Config(vec![
            "--config <file> is required for this command".into()
        ])),
    }
}

fn require_path(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(vec![format!("no {name} path: pass --{name} or set paths.{name}")]))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, seed, out } => {
            let cfg = require_config(config)?;
            let out = require_path(out, &cfg.paths.out, "out")?;
            let seed = seed.unwrap_or(cfg.seed);
            let spec = cfg.model.spec(cfg.simulate.n_vars);
            spec.validate()?;
            let params = default_dgp(&spec, &cfg.simulate);
            let mut rng = RngHandle::new(seed, 0);
            let (data, path) = simulate_dgp(&spec, &params, cfg.simulate.periods, cfg.simulate.start, &mut rng)?;
            fs::create_dir_all(&out)?;
            ingest::write_dataset(&data, &out.join("data.csv"))?;
            write_states(&spec, &data, &path, &out.join("states.csv"))?;
            let manifest = json!({
                "command": "simulate",
                "seed": seed,
                "spec": spec,
                "simulate": cfg.simulate,
                "data_hash": ingest::file_hash(&out.join("data.csv"))?,
                "states_hash": ingest::file_hash(&out.join("states.csv"))?,
            });
            fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
            println!(
                "simulated {} rows x {} variables into {}",
                data.n_obs(),
                data.n_vars(),
                out.display()
            );
            Ok(())
        }
        Command::Estimate {
            config,
            seed,
            data,
            out,
        } => {
            let cfg = require_config(config)?;
            let data_path = require_path(data, &cfg.paths.data, "data")?;
            let out = require_path(out, &cfg.paths.out, "out")?;
            let seed = seed.unwrap_or(cfg.seed);
            let data = ingest::load_dataset(&data_path)?;
            let spec = cfg.model.spec(data.n_vars());
            spec.validate()?;
            let options = SamplerOptions {
                storage: cfg.sampler.store_paths,
            };
            let mut rng = RngHandle::new(seed, 0);
            let chain = sampler::estimate(&spec, &data, &cfg.prior, &options, &mut rng)?;
            chain.save(&out, &data)?;
            ingest::write_dataset(&data, &out.join("data.csv"))?;
            write_states(&spec, &data, &chain.state_mean, &out.join("states_mean.csv"))?;
            let manifest = json!({
                "command": "estimate",
                "seed": seed,
                "spec": spec,
                "prior": cfg.prior,
                "data_hash": forecast::hash_dataset(&data),
                "stored_draws": chain.len(),
                "update_rate": chain.diagnostics.overall_update_rate(),
            });
            fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
            println!(
                "stored {} draws in {} (state update rate {:.3})",
                chain.len(),
                out.display(),
                chain.diagnostics.overall_update_rate()
            );
            Ok(())
        }
        Command::Backtest {
            config,
            seed,
            data,
            out,
            workers,
        } => {
            let cfg = require_config(config)?;
            let section = cfg
                .backtest
                .clone()
                .ok_or_else(|| Error::Config(vec!["missing `backtest` section".into()]))?;
            let data_path = require_path(data, &cfg.paths.data, "data")?;
            let out = require_path(out, &cfg.paths.out, "out")?;
            let seed = seed.unwrap_or(cfg.seed);
            let workers = workers.unwrap_or(section.workers);
            if workers == 0 {
                return Err(Error::Config(vec!["--workers must be >= 1".into()]));
            }
            let data = ingest::load_dataset(&data_path)?;
            let spec = cfg.model.spec(data.n_vars());
            let plan = section.plan();
            let summary = forecast::run_backtest(&plan, &data, &spec, &cfg.prior, seed, &out, workers)?;
            println!(
                "{} entries ({} reused, {} failed); content hash {}",
                summary.manifest.entries.len(),
                summary.skipped,
                summary.failed,
                summary.manifest.content_hash
            );
            Ok(())
        }
        Command::Evaluate {
            archive,
            realized,
            losses,
            periods,
            proposed,
            competitors,
            out,
        } => {
            let archive = Archive::open(&archive)?;
            let data = ingest::load_dataset(&realized)?;
            let metrics = Metric::parse_list(&losses)?;
            let proposed = parse_variant(&proposed)?;
            let competitors: Vec<Variant> = match competitors {
                Some(list) => list
                    .split(',')
                    .map(|s| parse_variant(s.trim()))
                    .collect::<Result<_>>()?,
                None => archive
                    .manifest
                    .plan
                    .variants
                    .iter()
                    .copied()
                    .filter(|v| *v != proposed)
                    .collect(),
            };
            let plan = &archive.manifest.plan;
            let mut windows = vec![PeriodWindow {
                name: "full".into(),
                start: plan.first_origin,
                end: plan.last_origin,
            }];
            if let Some(p) = periods {
                let extra: Vec<PeriodWindow> = serde_json::from_str(&fs::read_to_string(&p)?)
                    .map_err(|e| Error::Config(vec![format!("{}: {e}", p.display())]))?;
                windows.extend(extra);
            }
            let mut variants = competitors.clone();
            variants.push(proposed);
            let scores = scoring::compute_scores(&archive, &data, &variants, &metrics)?;
            let tables = scoring::score_table(
                &scores,
                &archive.manifest.labels,
                proposed,
                &competitors,
                &metrics,
                &windows,
                plan.horizon,
            );
            scoring::write_tables(&tables, &out, plan.horizon)?;
            for m in &tables.missing {
                eprintln!("missing origins (excluded pairwise): {m}");
            }
            println!(
                "wrote {} horizon rows and {} period rows to {}",
                tables.horizon_rows.len(),
                tables.period_rows.len(),
                out.display()
            );
            Ok(())
        }
        Command::Irf {
            chain,
            shock,
            out,
            size,
            horizon,
            reps,
            seed,
        } => {
            let (chain, data) = load_chain(&chain)?;
            let k = irf::shock_index(&chain.spec, &data.labels, &shock)?;
            let r = irf::girf(&chain, &data, k, size, horizon, reps, seed.unwrap_or(chain.seed))?;
            r.write_csv(&out)?;
            println!("wrote responses to {} over {horizon} horizons", out.display());
            Ok(())
        }
        Command::Risk {
            chain,
            percentiles,
            out,
            annualize,
            exceed,
            sims,
            seed,
        } => {
            let (chain, data) = load_chain(&chain)?;
            let index = |name: &str| {
                data.labels
                    .iter()
                    .position(|l| l == name)
                    .ok_or_else(|| Error::invalid(format!("unknown variable `{name}`")))
            };
            let mut mask = vec![false; data.n_vars()];
            for a in &annualize {
                mask[index(a)?] = true;
            }
            let thresholds = exceed
                .iter()
                .map(|s| {
                    let (v, t) = s
                        .split_once(':')
                        .ok_or_else(|| Error::invalid(format!("--exceed `{s}` is not <var>:<threshold>")))?;
                    let thr: f64 = t.parse().map_err(|_| Error::invalid(format!("bad threshold `{t}`")))?;
                    Ok((index(v)?, thr))
                })
                .collect::<Result<Vec<_>>>()?;
            let table = risk::tail_percentiles(
                &chain,
                &data,
                &percentiles,
                sims.max(1),
                &mask,
                &thresholds,
                seed.unwrap_or(chain.seed),
            )?;
            table.write_csv(&out)?;
            println!("wrote {} dates to {}", table.dates.len(), out.display());
            Ok(())
        }
        Command::Ingest { recipe, out } => {
            let data = ingest::run_recipe_file(&recipe)?;
            ingest::write_dataset(&data, &out)?;
            let manifest = json!({
                "command": "ingest",
                "recipe_hash": ingest::file_hash(&recipe)?,
                "output_hash": ingest::file_hash(&out)?,
                "variables": data.labels,
                "start": data.dates.first().map(|d| d.to_string()),
                "end": data.dates.last().map(|d| d.to_string()),
            });
            let mut name = out.as_os_str().to_owned();
            name.push(".manifest.json");
            fs::write(PathBuf::from(name), serde_json::to_string_pretty(&manifest)?)?;
            println!(
                "wrote {} rows x {} variables to {}",
                data.n_obs(),
                data.n_vars(),
                out.display()
            );
            Ok(())
        }
    }
}

fn parse_variant(s: &str) -> Result<Variant> {
    Variant::from_tag(s).ok_or_else(|| Error::invalid(format!("unknown variant `{s}` (full, restricted, sv_only)")))
}

/// Loads a chain directory written by `estimate` (chain files plus `data.csv`).
pub fn load_chain(dir: &Path) -> Result<(Chain, Dataset)> {
    let data = ingest::load_dataset(&dir.join("data.csv"))?;
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("chain.json"))?)?;
    let spec: ModelSpec = serde_json::from_value(sidecar["spec"].clone())?;
    let chain = Chain::load(dir, data.periods(&spec))?;
    Ok((chain, data))
}

fn write_states(spec: &ModelSpec, data: &Dataset, path: &StatePath, file: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(file)?;
    let n = spec.n_vars;
    let mut header = vec!["date".to_string()];
    for prefix in ["h", "d", "theta"] {
        header.extend(data.labels.iter().map(|l| format!("{prefix}_{l}")));
    }
    w.write_record(&header)?;
    let offset = spec.presample() as i64 - path.presample as i64;
    for r in 0..path.rows() {
        let row = r as i64 + offset;
        let date = if row >= 0 {
            data.dates
                .first()
                .map(|d| d.offset(row).to_string())
                .unwrap_or_default()
        } else {
            "presample".into()
        };
        let mut rec = vec![date];
        for m in [&path.h, &path.d, &path.theta_parent] {
            rec.extend((0..n).map(|v| format!("{}", m[(r, v)])));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Default data-generating process: persistent log-variances around `log 0.5`,
/// skewness states around `skew_mean`, and (for the full variant) each variable's
/// mean loading on its own lagged skewness with `skew_loading`.
pub fn default_dgp(spec: &ModelSpec, sim: &SimulateSection) -> ParameterDraw {
    let n = spec.n_vars;
    let k = spec.state_dim();
    let mut p = ParameterDraw::zeros(spec);
    p.intercept = DVector::from_element(n, 0.2);
    p.var_lags[0] = DMatrix::from_diagonal_element(n, n, 0.5);
    for i in 1..n {
        p.a[(i, 0)] = 0.3;
    }
    let (rho_h, rho_d) = (0.9, 0.8);
    let mut theta = DVector::from_element(k, rho_h);
    let mut alpha = DVector::from_element(k, (1.0 - rho_h) * 0.5f64.ln());
    if spec.variant.has_skew() {
        for i in n..k {
            theta[i] = rho_d;
            alpha[i] = (1.0 - rho_d) * sim.skew_mean;
        }
    }
    p.state_ar = DMatrix::from_diagonal(&theta);
    p.state_intercept = alpha;
    p.state_cov = DMatrix::from_diagonal_element(k, k, 0.05);
    if spec.variant.has_feedback() {
        p.vol_in_mean[0] = DMatrix::from_diagonal_element(n, n, -0.1);
        if spec.variant.has_skew() {
            p.skew_in_mean[0] = DMatrix::from_diagonal_element(n, n, sim.skew_loading);
        }
    }
    p
}

/// Simulates `periods` observations exactly from the model equations, after
/// zero pre-sample observations and pre-sample states at the transition's fixed
/// point (ignoring observation feedback; zero when that is singular).
///
/// The dataset includes the pre-sample rows; path row `L + i` belongs to dataset row `t0 + i`.
pub fn simulate_dgp(
    spec: &ModelSpec,
    params: &ParameterDraw,
    periods: usize,
    start: Quarter,
    rng: &mut RngHandle,
) -> Result<(Dataset, StatePath)> {
    params.validate(spec)?;
    let n = spec.n_vars;
    let k = spec.state_dim();
    let t0 = spec.presample();
    let fixed = (DMatrix::identity(k, k) - &params.state_ar)
        .lu()
        .solve(&params.state_intercept)
        .unwrap_or_else(|| DVector::zeros(k));
    let beta0 = vec![fixed; spec.l_inmean_lags];
    let (y, path) = generate(spec, params, &DMatrix::zeros(t0, n), &beta0, periods, rng).map_err(|e| match e {
        Error::NonFinite(msg) | Error::InvalidInput(msg) => Error::invalid(format!(
            "{msg}; the simulated path exploded, try tamer parameters (smaller lag or in-mean coefficients)"
        )),
        other => other,
    })?;
    let labels = (1..=n).map(|i| format!("y{i}")).collect();
    let dates = (0..y.nrows()).map(|i| start.offset(i as i64)).collect();
    Ok((Dataset::new(y, labels, dates)?, path))
}

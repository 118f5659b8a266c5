// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end for the moving-window chart.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use nswchart::dfewma::{self, Centering, DfewmaConfig};
use nswchart::io::{self as nio, MetricsRow};
use nswchart::limits::{self, LimitCache};
use nswchart::monitor::ChartRecord;
use nswchart::sim::{self, ModelParams, REFERENCE_POOL_SIZE};
use nswchart::{rng, ControlLimit, LimitConfig, Monitor, MonitorConfig, ObservationMatrix};

/// Environment variable naming the default limit cache directory.
const CACHE_DIR_ENV: &str = "NSWCHART_CACHE_DIR";

#[derive(Parser)]
#[command(
    name = "nswchart",
    version,
    about = "Moving-window mean-shift chart for high-dimensional streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate a control limit by bootstrap and print it.
    Limits(LimitsArgs),
    /// Monitor a CSV stream and print one JSON record per chart point.
    Monitor(MonitorArgs),
    /// Run a scenario grid and write a metrics table.
    Simulate(SimulateArgs),
    /// Clean an in-control and an out-of-control sample.
    Preprocess(PreprocessArgs),
    /// Autocorrelation of the chart statistic on an in-control stream.
    Acf(AcfArgs),
    /// Replay cleaned IC/OC pools with a change at tau.
    Replay(ReplayArgs),
}

#[derive(clap::Args)]
struct LimitArgs {
    /// Target false-alarm probability over the horizon.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Bootstrap sample count.
    #[arg(long = "B", default_value_t = 10_000)]
    bootstrap: usize,
    /// Monitoring horizon.
    #[arg(long = "n", default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl LimitArgs {
    fn config(&self, window: usize, step: usize) -> LimitConfig {
        LimitConfig {
            alpha: self.alpha,
            bootstrap_b: self.bootstrap,
            horizon_n: self.horizon,
            window,
            step,
            seed: self.seed,
        }
    }
}

#[derive(clap::Args)]
struct LimitsArgs {
    #[arg(long = "p")]
    p: Option<usize>,
    #[arg(long = "W")]
    window: usize,
    #[arg(long = "s", default_value_t = 5)]
    step: usize,
    #[command(flatten)]
    limit: LimitArgs,
    /// In-control reference sample (CSV). Defaults to a standard normal pool.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Cache directory; falls back to $NSWCHART_CACHE_DIR.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct MonitorArgs {
    #[arg(long)]
    input: PathBuf,
    /// Limit cache file written by `limits`.
    #[arg(long)]
    limit_cache: PathBuf,
    #[arg(long = "W")]
    window: usize,
    #[arg(long = "s", default_value_t = 5)]
    step: usize,
    /// Select the cached record with this horizon.
    #[arg(long = "n")]
    horizon: Option<usize>,
    /// Select the cached record with this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Add the change-point estimate and suspicious variables on alarm.
    #[arg(long)]
    diagnose: bool,
    /// Keep monitoring after the first alarm.
    #[arg(long = "continue")]
    keep_going: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Nsw,
    Dfewma,
}

#[derive(Clone, Copy, ValueEnum)]
enum CenteringArg {
    PerRank,
    AsPublished,
}

impl From<CenteringArg> for Centering {
    fn from(c: CenteringArg) -> Self {
        match c {
            CenteringArg::PerRank => Centering::PerRank,
            CenteringArg::AsPublished => Centering::AsPublished,
        }
    }
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, value_enum, default_value = "nsw")]
    scheme: Scheme,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "s", default_value_t = 5)]
    step: usize,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Bootstrap sample count for the window chart limit.
    #[arg(long = "B", default_value_t = 10_000)]
    bootstrap: usize,
    /// Seed for limit calibration.
    #[arg(long, default_value_t = 1)]
    limit_seed: u64,
    /// DFEWMA reference sample size.
    #[arg(long, default_value_t = 100)]
    m0: usize,
    /// DFEWMA smoothing weight.
    #[arg(long, default_value_t = DfewmaConfig::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "per-rank")]
    centering: CenteringArg,
    /// In-control runs used to calibrate the DFEWMA limit.
    #[arg(long, default_value_t = 1000)]
    calibration_runs: usize,
}

#[derive(clap::Args)]
struct PreprocessArgs {
    #[arg(long)]
    ic: PathBuf,
    #[arg(long)]
    oc: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(clap::Args)]
struct AcfArgs {
    #[arg(long = "p", default_value_t = 100)]
    p: usize,
    #[arg(long = "W", default_value_t = 20)]
    window: usize,
    #[arg(long = "s", default_value_t = 5)]
    step: usize,
    #[arg(long, default_value_t = 10)]
    lags: usize,
    /// Chart points to collect.
    #[arg(long, default_value_t = 2000)]
    points: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ReplayArgs {
    /// Cleaned in-control pool (CSV).
    #[arg(long)]
    ic: PathBuf,
    /// Cleaned out-of-control pool (CSV).
    #[arg(long)]
    oc: PathBuf,
    #[arg(long)]
    tau: usize,
    #[arg(long = "W")]
    window: usize,
    #[arg(long = "s", default_value_t = 5)]
    step: usize,
    #[command(flatten)]
    limit: LimitArgs,
    #[arg(long = "R", default_value_t = 1000)]
    replications: usize,
    /// Seed for stream assembly.
    #[arg(long, default_value_t = 1)]
    replay_seed: u64,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Limits(a) => cmd_limits(a),
        Command::Monitor(a) => cmd_monitor(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Acf(a) => cmd_acf(a),
        Command::Replay(a) => cmd_replay(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn read_matrix(path: &Path) -> Result<ObservationMatrix> {
    let (m, _) =
        nio::read_matrix_csv(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(m)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_limits(a: LimitsArgs) -> Result<()> {
    let cfg = a.limit.config(a.window, a.step);
    let reference = match &a.reference {
        Some(path) => read_matrix(path)?,
        None => {
            let Some(p) = a.p else {
                bail!("--p is required without --reference");
            };
            sim::reference_pool(p, REFERENCE_POOL_SIZE, rng::child_seed(cfg.seed, 0x5EED))?
        }
    };
    if let Some(p) = a.p {
        if p != reference.p() {
            bail!(
                "--p {p} does not match the reference sample (p = {})",
                reference.p()
            );
        }
    }
    let cache_dir = a
        .cache_dir
        .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from));
    let limit = match cache_dir {
        Some(dir) => LimitCache::in_dir(dir).get_or_compute(reference.view(), cfg)?,
        None => limits::bootstrap_control_limit(reference.view(), cfg)?,
    };
    print!("{}", limits::format_record(&limit));
    Ok(())
}

fn select_limit(a: &MonitorArgs, p: usize) -> Result<ControlLimit> {
    let all = LimitCache::new(&a.limit_cache)
        .load()
        .with_context(|| format!("reading {}", a.limit_cache.display()))?;
    let hits: Vec<ControlLimit> = all
        .into_iter()
        .filter(|l| {
            l.p == p
                && l.config.window == a.window
                && l.config.step == a.step
                && a.horizon.is_none_or(|n| l.config.horizon_n == n)
                && a.seed.is_none_or(|s| l.config.seed == s)
        })
        .collect();
    match hits.as_slice() {
        [one] => Ok(one.clone()),
        [] => bail!("no cached limit for p={p}, W={}, s={}", a.window, a.step),
        _ => bail!(
            "{} cached limits match p={p}, W={}, s={}; narrow with --n or --seed",
            hits.len(),
            a.window,
            a.step
        ),
    }
}

fn cmd_monitor(a: MonitorArgs) -> Result<()> {
    let stream = read_matrix(&a.input)?;
    let limit = select_limit(&a, stream.p())?;
    let h = limit.h;
    let mut cfg = MonitorConfig::new(stream.p(), a.window, a.step, limit)?;
    if a.keep_going {
        cfg = cfg.continuing();
    }
    let mut monitor = Monitor::new(cfg)?;
    let mut out = output(a.out.as_deref())?;
    for row in stream.rows() {
        if monitor.is_stopped() {
            break;
        }
        if let Some(e) = monitor.feed(row)? {
            let report = if a.diagnose { e.signal.as_ref() } else { None };
            let rec = ChartRecord::new(&e.point, h, report);
            serde_json::to_writer(&mut out, &rec)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let text =
        fs::read_to_string(&a.grid).with_context(|| format!("reading {}", a.grid.display()))?;
    let grid = nio::read_grid(&text)?;
    let params = ModelParams::default();
    let mut limits: HashMap<(usize, usize, usize), f64> = HashMap::new();
    let mut rows = Vec::with_capacity(grid.len());
    for spec in grid {
        let key = (spec.p, spec.window, spec.horizon_n);
        let metrics = match a.scheme {
            Scheme::Nsw => {
                let cfg = LimitConfig {
                    alpha: a.alpha,
                    bootstrap_b: a.bootstrap,
                    horizon_n: spec.horizon_n,
                    window: spec.window,
                    step: a.step,
                    seed: a.limit_seed,
                };
                let h = match limits.get(&key) {
                    Some(&h) => h,
                    None => {
                        let h = sim::normal_reference_limit(spec.p, cfg)?.h;
                        limits.insert(key, h);
                        h
                    }
                };
                let mcfg = MonitorConfig::new(
                    spec.p,
                    spec.window,
                    a.step,
                    ControlLimit::fixed(h, spec.p, cfg),
                )?
                .with_horizon(spec.horizon_n);
                sim::run_scenario(&spec, &params, &mcfg)?
            }
            Scheme::Dfewma => {
                let mut cfg = DfewmaConfig::new(spec.p, a.m0, spec.window);
                cfg.alpha = a.alpha;
                cfg.lambda = a.lambda;
                cfg.centering = a.centering.into();
                cfg.limit_h = match limits.get(&key) {
                    Some(&h) => h,
                    None => {
                        let h = dfewma::calibrate_limit(
                            &cfg,
                            spec.horizon_n,
                            a.calibration_runs,
                            a.limit_seed,
                        )?;
                        limits.insert(key, h);
                        h
                    }
                };
                dfewma::run_dfewma_scenario(&spec, &params, &cfg)?
            }
        };
        log::info!(
            "{} p={} W={} delta={}: DR={:.3}",
            spec.model,
            spec.p,
            spec.window,
            spec.delta,
            metrics.dr
        );
        rows.push(MetricsRow { spec, metrics });
    }
    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    nio::write_metrics_csv(BufWriter::new(file), &rows)?;
    Ok(())
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<()> {
    let ic = nio::read_raw_csv(&a.ic).with_context(|| format!("reading {}", a.ic.display()))?;
    let oc = nio::read_raw_csv(&a.oc).with_context(|| format!("reading {}", a.oc.display()))?;
    let (ic_clean, oc_clean, report) = nio::preprocess(&ic, &oc)?;
    let header: Option<Vec<String>> = ic.header.as_ref().map(|h| {
        report
            .retained_columns
            .iter()
            .map(|&c| h[c].clone())
            .collect()
    });
    fs::create_dir_all(&a.out_dir)?;
    let write = |name: &str, m: &ObservationMatrix| -> Result<()> {
        let f = File::create(a.out_dir.join(name))?;
        nio::write_matrix_csv(BufWriter::new(f), m, header.as_deref())?;
        Ok(())
    };
    write("ic_clean.csv", &ic_clean)?;
    write("oc_clean.csv", &oc_clean)?;
    let f = File::create(a.out_dir.join("report.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &report)?;
    eprintln!(
        "retained {} of {} columns",
        report.retained_columns.len(),
        report.original_columns
    );
    Ok(())
}

fn cmd_acf(a: AcfArgs) -> Result<()> {
    let acf = sim::chart_acf(a.p, a.window, a.step, a.points, a.lags, a.seed)?;
    let mut out = output(Some(&a.out))?;
    writeln!(out, "lag,acf")?;
    for (lag, v) in acf.iter().enumerate() {
        writeln!(out, "{},{}", lag + 1, nio::fmt_f64(*v))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> Result<()> {
    let ic = read_matrix(&a.ic)?;
    let oc = read_matrix(&a.oc)?;
    let cfg = a.limit.config(a.window, a.step);
    let limit = limits::bootstrap_control_limit(ic.view(), cfg)?;
    let mcfg = MonitorConfig::new(ic.p(), a.window, a.step, limit)?.with_horizon(cfg.horizon_n);
    let outcome = nio::replay_case(&ic, &oc, a.tau, &mcfg, a.replications, a.replay_seed)?;
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &outcome)?;
    writeln!(out)?;
    Ok(())
}

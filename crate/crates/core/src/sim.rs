// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scenario generators and the Monte-Carlo experiment runner.
//!
//! Every run is in control, `N_p(0, I)`, up to and including time `tau`. After
//! `tau` the mean becomes `mu1 = (delta, ..., delta, 0, ..., 0)` with
//! `round(v p)` shifted leading coordinates, and the noise follows one of
//! four models:
//!
//! | model | post-change distribution |
//! |-------|--------------------------|
//! | I     | `N(mu1, I)` |
//! | II    | `N(mu1, lambda_t I)`, `lambda_t` cycling 0.5, 0.6, ..., 1.0, 0.9, ..., 0.6 from `t = 1` at `tau + 1` |
//! | III   | `N(mu1, S)`, `S[l][m] = 0.995^|l - m|` |
//! | IV    | multivariate t with 30 dof, location `mu1`, scale `S` |
//!
//! Replication `j` of a scenario draws from substream `j` of the scenario
//! seed, so parallel and sequential execution agree exactly.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::{self, ControlLimit, LimitConfig};
use crate::matrix::ObservationMatrix;
use crate::monitor::{self, Monitor, MonitorConfig, SignalReport};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    I,
    II,
    III,
    IV,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::I => "I",
            Model::II => "II",
            Model::III => "III",
            Model::IV => "IV",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Model::I),
            "II" | "2" => Ok(Model::II),
            "III" | "3" => Ok(Model::III),
            "IV" | "4" => Ok(Model::IV),
            other => Err(Error::config(format!(
                "unknown model `{other}` (expected I, II, III or IV)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub model: Model,
    pub p: usize,
    pub window: usize,
    /// Last in-control time index.
    pub tau: usize,
    /// Shift size; 0 encodes an in-control scenario.
    pub delta: f64,
    /// Fraction of shifted variables.
    pub sparsity_v: f64,
    pub horizon_n: usize,
    pub replications: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Number of shifted leading variables, `round(v p)`.
    pub fn shifted_count(&self) -> usize {
        (self.sparsity_v * self.p as f64).round() as usize
    }

    pub fn is_in_control(&self) -> bool {
        self.delta == 0.0
    }

    pub fn truth(&self) -> Truth {
        if self.is_in_control() {
            Truth::InControl
        } else {
            Truth::Shifted(self.shifted_count())
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::config("p must be >= 1"));
        }
        if self.horizon_n == 0 || self.tau >= self.horizon_n {
            return Err(Error::config(format!(
                "need 0 <= tau < horizon (tau={}, horizon={})",
                self.tau, self.horizon_n
            )));
        }
        if !(self.sparsity_v > 0.0 && self.sparsity_v <= 1.0) {
            return Err(Error::config(format!(
                "sparsity v must lie in (0, 1], got {}",
                self.sparsity_v
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::config("delta must be finite"));
        }
        if !self.is_in_control() && self.shifted_count() == 0 {
            return Err(Error::config(format!(
                "v * p = {} rounds to no shifted variables",
                self.sparsity_v * self.p as f64
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Model II variance multipliers, cycled over post-change time.
    pub lambda_sequence: Vec<f64>,
    /// Base of the Model III/IV correlation `corr_base^|l - m|`.
    pub corr_base: f64,
    /// Model IV degrees of freedom.
    pub t_dof: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            lambda_sequence: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.9, 0.8, 0.7, 0.6],
            corr_base: 0.995,
            t_dof: 30.0,
        }
    }
}

impl ModelParams {
    /// Variance multiplier at post-change time `t >= 1`.
    pub fn lambda(&self, t: usize) -> f64 {
        self.lambda_sequence[(t - 1) % self.lambda_sequence.len()]
    }
}

/// Lower Cholesky factor of `base^|l - m|`, row-major.
fn correlation_factor(p: usize, base: f64) -> Result<Vec<f64>> {
    let sigma = DMatrix::from_fn(p, p, |l, m| base.powi(l.abs_diff(m) as i32));
    let chol = sigma.cholesky().ok_or_else(|| {
        Error::config(format!(
            "correlation matrix with base {base} is not positive definite"
        ))
    })?;
    let l = chol.l();
    Ok((0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| l[(i, j)])
        .collect())
}

/// Draws runs of one scenario; the covariance factor is computed once.
#[derive(Clone, Debug)]
pub struct RunGenerator {
    spec: ScenarioSpec,
    params: ModelParams,
    factor: Option<Vec<f64>>,
    chi: Option<ChiSquared<f64>>,
}

impl RunGenerator {
    pub fn new(spec: ScenarioSpec, params: ModelParams) -> Result<Self> {
        spec.validate()?;
        if params.lambda_sequence.is_empty()
            || params
                .lambda_sequence
                .iter()
                .any(|&l| l <= 0.0 || l.is_nan())
        {
            return Err(Error::config(
                "lambda sequence must be nonempty and positive",
            ));
        }
        let factor = match spec.model {
            Model::III | Model::IV => Some(correlation_factor(spec.p, params.corr_base)?),
            _ => None,
        };
        let chi = match spec.model {
            Model::IV => Some(
                ChiSquared::new(params.t_dof)
                    .map_err(|e| Error::config(format!("bad t degrees of freedom: {e}")))?,
            ),
            _ => None,
        };
        Ok(Self {
            spec,
            params,
            factor,
            chi,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    /// Run number `index` of the scenario.
    pub fn generate(&self, index: u64) -> ObservationMatrix {
        let mut rng = rng::substream(self.spec.seed, index);
        self.generate_with(&mut rng)
    }

    pub fn generate_with(&self, rng: &mut Rng) -> ObservationMatrix {
        let (n, p, tau) = (self.spec.horizon_n, self.spec.p, self.spec.tau);
        let shifted = if self.spec.is_in_control() {
            0
        } else {
            self.spec.shifted_count()
        };
        let mut data = Vec::with_capacity(n * p);
        let mut z = vec![0.0; p];
        for _ in 0..tau.min(n) {
            data.extend((0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
        for i in tau + 1..=n {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let noise_scale = match self.spec.model {
                Model::II => self.params.lambda(i - tau).sqrt(),
                Model::IV => {
                    let chi = self.chi.as_ref().expect("model IV has a chi-square law");
                    (self.params.t_dof / chi.sample(rng)).sqrt()
                }
                _ => 1.0,
            };
            for r in 0..p {
                let noise = match &self.factor {
                    Some(l) => {
                        let row = &l[r * p..r * p + r + 1];
                        row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()
                    }
                    None => z[r],
                };
                let mean = if r < shifted { self.spec.delta } else { 0.0 };
                data.push(mean + noise_scale * noise);
            }
        }
        ObservationMatrix::from_row_major(n, p, data).expect("generated values are finite")
    }
}

/// One run of `spec` drawn from the generator keyed by `run_seed`.
pub fn generate_run(
    spec: &ScenarioSpec,
    params: &ModelParams,
    run_seed: u64,
) -> Result<ObservationMatrix> {
    let mut rng = rng::substream(run_seed, 0);
    Ok(RunGenerator::new(*spec, params.clone())?.generate_with(&mut rng))
}

/// `size` i.i.d. `N_p(0, I)` observations.
pub fn reference_pool(p: usize, size: usize, seed: u64) -> Result<ObservationMatrix> {
    let mut rng = rng::substream(seed, u64::MAX);
    let data = (0..p * size).map(|_| rng.sample(StandardNormal)).collect();
    ObservationMatrix::from_row_major(size, p, data)
}

/// Default size of the in-control pool the simulation limits bootstrap from.
pub const REFERENCE_POOL_SIZE: usize = 1000;

/// Bootstraps a limit for simulated `N_p(0, I)` data from a pool of
/// [`REFERENCE_POOL_SIZE`] observations keyed by `cfg.seed`.
pub fn normal_reference_limit(p: usize, cfg: LimitConfig) -> Result<ControlLimit> {
    let pool = reference_pool(p, REFERENCE_POOL_SIZE, rng::child_seed(cfg.seed, 0x5EED))?;
    limits::bootstrap_control_limit(pool.view(), cfg)
}

/// Aggregated performance of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Fraction of runs that signaled.
    pub dr: f64,
    /// Mean first-signal time minus `tau`, over signaling runs.
    pub ced: Option<f64>,
    /// Fraction of runs that signaled, reported for in-control scenarios.
    pub fap: Option<f64>,
    /// Mean change-point estimate over signaling runs.
    pub cpe: Option<f64>,
    /// Mean fraction of shifted variables flagged, over signaling runs.
    pub drv: Option<f64>,
    pub replications: usize,
    pub signaling_runs: usize,
}

/// What is known about the shifted variables of a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truth {
    /// No shift; FAP is reported.
    InControl,
    /// The first `k` variables shifted; DRV is reported.
    Shifted(usize),
    /// Real data replay: neither FAP nor DRV applies.
    Unknown,
}

/// Aggregates per-run results in replication order.
pub fn summarize(results: &[Option<SignalReport>], tau: usize, truth: Truth) -> MetricsSummary {
    let signals: Vec<&SignalReport> = results.iter().flatten().collect();
    let r = results.len();
    let m = signals.len();
    let mean = |f: &dyn Fn(&SignalReport) -> f64| {
        (m > 0).then(|| signals.iter().map(|s| f(s)).sum::<f64>() / m as f64)
    };
    let dr = if r == 0 { 0.0 } else { m as f64 / r as f64 };
    let drv = match truth {
        Truth::Shifted(k) => mean(&|s| variable_detection_rate(&s.suspicious_variables, k)),
        _ => None,
    };
    MetricsSummary {
        dr,
        ced: mean(&|s| s.alarm_time as f64).map(|t| t - tau as f64),
        fap: (truth == Truth::InControl).then_some(dr),
        cpe: mean(&|s| s.change_point_estimate as f64),
        drv,
        replications: r,
        signaling_runs: m,
    }
}

/// `|flagged ∩ {0..shifted}| / shifted`.
pub fn variable_detection_rate(flagged: &[usize], shifted: usize) -> f64 {
    if shifted == 0 {
        return 0.0;
    }
    let hits = flagged.iter().filter(|&&v| v < shifted).count();
    hits as f64 / shifted as f64
}

/// DRV of one signal report against the scenario's shifted set.
pub fn drv(report: &SignalReport, spec: &ScenarioSpec) -> f64 {
    variable_detection_rate(&report.suspicious_variables, spec.shifted_count())
}

/// Runs every replication of `spec` through the chart and aggregates metrics.
pub fn run_scenario(
    spec: &ScenarioSpec,
    params: &ModelParams,
    cfg: &MonitorConfig,
) -> Result<MetricsSummary> {
    let generator = RunGenerator::new(*spec, params.clone())?;
    if cfg.p != spec.p || cfg.window != spec.window {
        return Err(Error::config(format!(
            "monitor is configured for p={}, W={} but scenario has p={}, W={}",
            cfg.p, cfg.window, spec.p, spec.window
        )));
    }
    let mut cfg = cfg.clone();
    cfg.continue_after_signal = false;
    let results = (0..spec.replications as u64)
        .into_par_iter()
        .map(|j| {
            let run = generator.generate(j);
            monitor::run_offline(run.view(), &cfg).map(|o| o.signal)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&results, spec.tau, spec.truth()))
}

/// Sample autocorrelations at lags `1..=max_lag`.
pub fn sample_acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    const MIN_POINTS: usize = 30;
    let m = series.len();
    if m < MIN_POINTS {
        return Err(Error::InsufficientSample {
            needed: MIN_POINTS,
            got: m,
        });
    }
    if max_lag >= m {
        return Err(Error::precondition(format!(
            "lag {max_lag} too large for {m} points"
        )));
    }
    let mean = series.iter().sum::<f64>() / m as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::precondition("autocorrelation of a constant series"));
    }
    Ok((1..=max_lag)
        .map(|lag| {
            centered
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom
        })
        .collect())
}

/// Chart statistics of a continued in-control `N_p(0, I)` stream.
pub fn in_control_chart_series(
    p: usize,
    window: usize,
    step: usize,
    points: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let lc = LimitConfig {
        alpha: 0.5,
        bootstrap_b: 1,
        horizon_n: window,
        window,
        step,
        seed,
    };
    // The limit is irrelevant when continuing; infinity keeps reports out.
    let cfg = MonitorConfig::new(p, window, step, ControlLimit::fixed(f64::INFINITY, p, lc))?
        .continuing();
    let mut monitor = Monitor::new(cfg)?;
    let mut rng = rng::substream(seed, 0);
    let mut row = vec![0.0; p];
    let mut values = Vec::with_capacity(points);
    while values.len() < points {
        row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        if let Some(cp) = monitor.observe(&row)? {
            values.push(cp.value);
        }
    }
    Ok(values)
}

/// Autocorrelation of the chart statistic on a continued in-control stream.
pub fn chart_acf(
    p: usize,
    window: usize,
    step: usize,
    points: usize,
    max_lag: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    sample_acf(
        &in_control_chart_series(p, window, step, points, seed)?,
        max_lag,
    )
}

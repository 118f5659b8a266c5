// SPDX-License-Identifier: MIT OR Apache-2.0

//! Distribution-free EWMA (DFEWMA) comparator chart.
//!
//! With `m0` in-control reference rows prepended to the stream, let
//! `R(n, i, r)` be the rank of `X[i][r]` among all `N = m0 + n` values of
//! column `r` seen by time `n`. The chart statistic is
//!
//! ```text
//! T(n, r) = sum_{i = n-W+1}^{n} (1 - lambda)^(n - i) (R(n, i, r) - c) / sqrt(W (N + 1) (N - W) / 12)
//! T(n)    = sum_r T(n, r)^2
//! ```
//!
//! where the centering `c` is the mean rank `(N + 1) / 2` ([`Centering::PerRank`],
//! the default) or `W (N + 1) / 2` as the formula is usually typeset
//! ([`Centering::AsPublished`]). The latter subtracts a drift that dwarfs the
//! rank signal: `T(n)` is largest at `n = W` and shrinks under upward shifts,
//! so it is kept only for sensitivity checks. Tied values receive average ranks.
//!
//! The control limit is calibrated offline by simulation: the `(1 - alpha)`
//! empirical quantile of the per-run maximum of `T(n)` over the horizon.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::empirical_quantile;
use crate::matrix::{MatrixView, ObservationMatrix};
use crate::rng::{self, Rng};
use crate::sim::{MetricsSummary, ModelParams, RunGenerator, ScenarioSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Centering {
    /// Subtract `W (N + 1) / 2` inside every summand.
    AsPublished,
    /// Subtract the mean rank `(N + 1) / 2`.
    #[default]
    PerRank,
}

impl std::str::FromStr for Centering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-rank" | "per_rank" => Ok(Centering::PerRank),
            "as-published" | "as_published" => Ok(Centering::AsPublished),
            other => Err(Error::config(format!(
                "unknown centering `{other}` (expected per-rank or as-published)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfewmaConfig {
    pub m0: usize,
    pub window: usize,
    pub lambda: f64,
    pub p: usize,
    pub alpha: f64,
    pub limit_h: f64,
    pub centering: Centering,
}

impl DfewmaConfig {
    pub const DEFAULT_LAMBDA: f64 = 0.1;

    pub fn new(p: usize, m0: usize, window: usize) -> Self {
        Self {
            m0,
            window,
            lambda: Self::DEFAULT_LAMBDA,
            p,
            alpha: 0.01,
            limit_h: f64::INFINITY,
            centering: Centering::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m0 == 0 {
            return Err(Error::config("reference sample size m0 must be >= 1"));
        }
        if self.window == 0 {
            return Err(Error::config("window W must be >= 1"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config(format!(
                "lambda must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if self.p == 0 {
            return Err(Error::config("p must be >= 1"));
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        // weights[j] multiplies the observation j steps before n
        (0..self.window)
            .map(|j| (1.0 - self.lambda).powi(j as i32))
            .collect()
    }

    fn center_and_scale(&self, total: usize) -> (f64, f64) {
        let (w, nn) = (self.window as f64, total as f64);
        let c = match self.centering {
            Centering::AsPublished => w * (nn + 1.0) / 2.0,
            Centering::PerRank => (nn + 1.0) / 2.0,
        };
        (c, (w * (nn + 1.0) * (nn - w) / 12.0).sqrt())
    }
}

/// Average ranks of every stream row within its column of the pooled
/// reference-plus-stream sample.
#[derive(Clone, Debug, PartialEq)]
pub struct RankTable {
    /// `ranks[i * p + r]`, 1-based, for stream rows only.
    ranks: Vec<f64>,
    n: usize,
    p: usize,
}

impl RankTable {
    pub fn new(reference: MatrixView<'_>, stream: MatrixView<'_>) -> Result<Self> {
        if reference.p() != stream.p() {
            return Err(Error::Schema(format!(
                "reference has p={}, stream has p={}",
                reference.p(),
                stream.p()
            )));
        }
        let (m0, n, p) = (reference.n(), stream.n(), stream.p());
        let mut ranks = vec![0.0; n * p];
        let mut column: Vec<(f64, usize)> = Vec::with_capacity(m0 + n);
        for r in 0..p {
            column.clear();
            column.extend((0..m0).map(|i| (reference.get(i, r), usize::MAX)));
            column.extend((0..n).map(|i| (stream.get(i, r), i)));
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut start = 0;
            while start < column.len() {
                let mut end = start + 1;
                while end < column.len() && column[end].0 == column[start].0 {
                    end += 1;
                }
                // positions start..end hold ranks start+1..=end
                let avg = (start + 1 + end) as f64 / 2.0;
                for &(_, i) in &column[start..end] {
                    if i != usize::MAX {
                        ranks[i * p + r] = avg;
                    }
                }
                start = end;
            }
        }
        Ok(Self { ranks, n, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self, i: usize, r: usize) -> f64 {
        self.ranks[i * self.p + r]
    }
}

/// Per-variable statistics `T(n, r)` at `n = stream.n()`.
pub fn dfewma_components(
    reference: MatrixView<'_>,
    stream: MatrixView<'_>,
    cfg: &DfewmaConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = stream.n();
    if n < cfg.window {
        return Err(Error::InsufficientSample {
            needed: cfg.window,
            got: n,
        });
    }
    if reference.n() != cfg.m0 {
        return Err(Error::precondition(format!(
            "reference has {} rows, expected m0={}",
            reference.n(),
            cfg.m0
        )));
    }
    let table = RankTable::new(reference, stream)?;
    let (c, d) = cfg.center_and_scale(cfg.m0 + n);
    let weights = cfg.weights();
    Ok((0..stream.p())
        .map(|r| {
            (0..cfg.window)
                .map(|j| weights[j] * (table.rank(n - 1 - j, r) - c) / d)
                .sum()
        })
        .collect())
}

/// `T(n) = sum_r T(n, r)^2` for the stream observed so far.
pub fn dfewma_statistic(
    reference: MatrixView<'_>,
    stream: MatrixView<'_>,
    cfg: &DfewmaConfig,
) -> Result<f64> {
    Ok(dfewma_components(reference, stream, cfg)?
        .iter()
        .map(|t| t * t)
        .sum())
}

/// Incremental DFEWMA evaluation.
///
/// Keeps each column sorted plus the running ranks of the last `W`
/// observations, so a new observation costs `O(p (m0 + n))` for the insertion
/// and `O(p W)` for the rank updates.
#[derive(Clone, Debug)]
pub struct DfewmaMonitor {
    cfg: DfewmaConfig,
    weights: Vec<f64>,
    sorted: Vec<Vec<f64>>,
    /// Last `W` observations and their current ranks, oldest first, per column.
    recent: Vec<std::collections::VecDeque<(f64, f64)>>,
    time: usize,
}

impl DfewmaMonitor {
    pub fn new(reference: MatrixView<'_>, cfg: DfewmaConfig) -> Result<Self> {
        cfg.validate()?;
        if reference.n() != cfg.m0 || reference.p() != cfg.p {
            return Err(Error::precondition(format!(
                "reference is {}x{}, expected {}x{}",
                reference.n(),
                reference.p(),
                cfg.m0,
                cfg.p
            )));
        }
        let sorted = (0..cfg.p)
            .map(|r| {
                let mut col: Vec<f64> = (0..cfg.m0).map(|i| reference.get(i, r)).collect();
                col.sort_by(f64::total_cmp);
                col
            })
            .collect();
        Ok(Self {
            weights: cfg.weights(),
            recent: vec![std::collections::VecDeque::with_capacity(cfg.window); cfg.p],
            sorted,
            cfg,
            time: 0,
        })
    }

    pub fn time(&self) -> usize {
        self.time
    }

    /// Adds one observation; returns `T(n)` once `n >= W`.
    pub fn observe(&mut self, x: &[f64]) -> Result<Option<f64>> {
        if x.len() != self.cfg.p {
            return Err(Error::precondition(format!(
                "observation has {} entries, expected {}",
                x.len(),
                self.cfg.p
            )));
        }
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: self.time,
                col,
            });
        }
        self.time += 1;
        for (r, &v) in x.iter().enumerate() {
            let col = &mut self.sorted[r];
            let below = col.partition_point(|&y| y < v);
            let upto = col.partition_point(|&y| y <= v);
            col.insert(upto, v);
            // ties share the average rank of their group
            let rank = below as f64 + (upto - below + 2) as f64 / 2.0;
            let recent = &mut self.recent[r];
            for (y, ry) in recent.iter_mut() {
                if v < *y {
                    *ry += 1.0;
                } else if v == *y {
                    *ry += 0.5;
                }
            }
            if recent.len() == self.cfg.window {
                recent.pop_front();
            }
            recent.push_back((v, rank));
        }
        if self.time < self.cfg.window {
            return Ok(None);
        }
        let (c, d) = self.cfg.center_and_scale(self.cfg.m0 + self.time);
        let stat = self
            .recent
            .iter()
            .map(|recent| {
                let t: f64 = recent
                    .iter()
                    .rev()
                    .zip(&self.weights)
                    .map(|(&(_, rank), w)| w * (rank - c) / d)
                    .sum();
                t * t
            })
            .sum();
        Ok(Some(stat))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfewmaSignal {
    pub alarm_time: usize,
    pub statistic_value: f64,
}

/// Monitors `stream` and returns the first time `T(n) > limit_h`.
pub fn dfewma_monitor(
    reference: MatrixView<'_>,
    stream: MatrixView<'_>,
    cfg: &DfewmaConfig,
) -> Result<Option<DfewmaSignal>> {
    let mut mon = DfewmaMonitor::new(reference, *cfg)?;
    for i in 0..stream.n() {
        if let Some(t) = mon.observe(stream.row(i))? {
            if t > cfg.limit_h {
                return Ok(Some(DfewmaSignal {
                    alarm_time: i + 1,
                    statistic_value: t,
                }));
            }
        }
    }
    Ok(None)
}

/// Largest `T(n)` over the whole stream.
pub fn dfewma_path_max(
    reference: MatrixView<'_>,
    stream: MatrixView<'_>,
    cfg: &DfewmaConfig,
) -> Result<f64> {
    let mut mon = DfewmaMonitor::new(reference, *cfg)?;
    let mut best = f64::NEG_INFINITY;
    for i in 0..stream.n() {
        if let Some(t) = mon.observe(stream.row(i))? {
            best = best.max(t);
        }
    }
    Ok(best)
}

fn normal_block(rng: &mut Rng, n: usize, p: usize) -> ObservationMatrix {
    let data = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    ObservationMatrix::from_row_major(n, p, data).expect("normal draws are finite")
}

/// Simulation-calibrated limit: the `(1 - alpha)` quantile of the per-run
/// maximum of `T(n)` over `horizon` in-control `N_p(0, I)` observations.
pub fn calibrate_limit(cfg: &DfewmaConfig, horizon: usize, runs: usize, seed: u64) -> Result<f64> {
    cfg.validate()?;
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha must lie in (0, 1), got {}",
            cfg.alpha
        )));
    }
    if runs == 0 || horizon < cfg.window {
        return Err(Error::config(
            "calibration needs runs >= 1 and horizon >= W",
        ));
    }
    let mut maxima = (0..runs as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::substream(seed, j);
            let reference = normal_block(&mut rng, cfg.m0, cfg.p);
            let stream = normal_block(&mut rng, horizon, cfg.p);
            dfewma_path_max(reference.view(), stream.view(), cfg)
        })
        .collect::<Result<Vec<f64>>>()?;
    maxima.sort_by(f64::total_cmp);
    empirical_quantile(&maxima, 1.0 - cfg.alpha)
}

/// Runs a scenario through the DFEWMA chart. Each replication draws a fresh
/// `m0`-row in-control reference sample ahead of its stream.
///
/// CPE and DRV are not defined for this chart and are left empty.
pub fn run_dfewma_scenario(
    spec: &ScenarioSpec,
    params: &ModelParams,
    cfg: &DfewmaConfig,
) -> Result<MetricsSummary> {
    let generator = RunGenerator::new(*spec, params.clone())?;
    if cfg.p != spec.p {
        return Err(Error::config(format!(
            "chart has p={}, scenario p={}",
            cfg.p, spec.p
        )));
    }
    let signals = (0..spec.replications as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::substream(spec.seed, j);
            let reference = normal_block(&mut rng, cfg.m0, cfg.p);
            let stream = generator.generate_with(&mut rng);
            dfewma_monitor(reference.view(), stream.view(), cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let hits: Vec<&DfewmaSignal> = signals.iter().flatten().collect();
    let r = signals.len();
    let m = hits.len();
    let dr = if r == 0 { 0.0 } else { m as f64 / r as f64 };
    Ok(MetricsSummary {
        dr,
        ced: (m > 0).then(|| {
            hits.iter().map(|s| s.alarm_time as f64).sum::<f64>() / m as f64 - spec.tau as f64
        }),
        fap: spec.is_in_control().then_some(dr),
        cpe: None,
        drv: None,
        replications: r,
        signaling_runs: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> ObservationMatrix {
        ObservationMatrix::from_column(v).unwrap()
    }

    /// Rank by direct counting: #less + (#equal + 1) / 2 over the pooled sample.
    fn brute_rank(pool: &[f64], x: f64) -> f64 {
        let less = pool.iter().filter(|&&y| y < x).count() as f64;
        let eq = pool.iter().filter(|&&y| y == x).count() as f64;
        less + (eq + 1.0) / 2.0
    }

    #[test]
    fn ranks_with_ties_are_averaged() {
        let reference = col(&[1.0, 3.0, 3.0]);
        let stream = col(&[2.0, 3.0, 0.5]);
        let t = RankTable::new(reference.view(), stream.view()).unwrap();
        // pooled sorted: 0.5, 1, 2, 3, 3, 3
        assert_eq!(t.rank(0, 0), 3.0);
        assert_eq!(t.rank(1, 0), 5.0);
        assert_eq!(t.rank(2, 0), 1.0);
    }

    #[test]
    fn hand_computed_small_case() {
        // m0 = 3, n = 4, W = 3, lambda = 0.5, published centering
        let reference = col(&[0.2, 1.4, -0.7]);
        let stream = col(&[0.9, 2.0, -1.5, 0.1]);
        let mut cfg = DfewmaConfig::new(1, 3, 3);
        cfg.lambda = 0.5;
        cfg.centering = Centering::AsPublished;
        let pool = [0.2, 1.4, -0.7, 0.9, 2.0, -1.5, 0.1];
        // sorted: -1.5, -0.7, 0.1, 0.2, 0.9, 1.4, 2.0 -> ranks of stream rows 2..4
        let ranks = [7.0, 1.0, 3.0];
        for (i, &r) in ranks.iter().enumerate() {
            assert_eq!(brute_rank(&pool, stream.get(i + 1, 0)), r);
        }
        let nn = 7.0;
        let c = 3.0 * (nn + 1.0) / 2.0;
        let d = (3.0 * (nn + 1.0) * (nn - 3.0) / 12.0f64).sqrt();
        let t = (0.25 * (ranks[0] - c) + 0.5 * (ranks[1] - c) + (ranks[2] - c)) / d;
        let got = dfewma_statistic(reference.view(), stream.view(), &cfg).unwrap();
        assert!((got - t * t).abs() < 1e-12, "{got} vs {}", t * t);
        // (0.25 * 7 + 0.5 * 1 + 3 - 1.75 * 12)^2 / 8 = 15.75^2 / 8
        assert!((got - 15.75f64.powi(2) / 8.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_one_keeps_only_latest_rank() {
        let reference = col(&[0.3, -0.2, 1.1, 0.8]);
        let stream = col(&[0.0, 0.5, 2.0]);
        for centering in [Centering::AsPublished, Centering::PerRank] {
            let mut cfg = DfewmaConfig::new(1, 4, 2);
            cfg.lambda = 1.0;
            cfg.centering = centering;
            let nn = 7.0;
            let c = match centering {
                Centering::AsPublished => 2.0 * (nn + 1.0) / 2.0,
                Centering::PerRank => (nn + 1.0) / 2.0,
            };
            let d = (2.0 * (nn + 1.0) * (nn - 2.0) / 12.0f64).sqrt();
            let expect = ((7.0 - c) / d).powi(2);
            let got = dfewma_statistic(reference.view(), stream.view(), &cfg).unwrap();
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn incremental_matches_recomputation() {
        let mut rng = rng::substream(5, 0);
        let reference = normal_block(&mut rng, 12, 3);
        let mut data = normal_block(&mut rng, 25, 3).into_vec();
        // inject ties with the reference and within the stream
        data[7] = reference.get(2, 1);
        data[10] = data[4];
        let stream = ObservationMatrix::from_row_major(25, 3, data).unwrap();
        let mut cfg = DfewmaConfig::new(3, 12, 6);
        cfg.centering = Centering::PerRank;
        let mut mon = DfewmaMonitor::new(reference.view(), cfg).unwrap();
        for i in 0..stream.n() {
            let got = mon.observe(stream.row(i)).unwrap();
            if i + 1 < 6 {
                assert!(got.is_none());
                continue;
            }
            let prefix = stream.slice_rows(0..i + 1).unwrap();
            let want = dfewma_statistic(reference.view(), prefix, &cfg).unwrap();
            assert!((got.unwrap() - want).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn short_stream_is_rejected() {
        let cfg = DfewmaConfig::new(1, 2, 5);
        assert!(dfewma_statistic(col(&[0.0, 1.0]).view(), col(&[1.0, 2.0]).view(), &cfg).is_err());
    }

    #[test]
    fn constant_stream_signals_iff_above_limit() {
        // untied reference below the constant: every stream value ties with
        // the others and ranks above the reference
        let reference = col(&[-3.0, -2.0, -1.0]);
        let stream = col(&[5.0; 8]);
        let mut cfg = DfewmaConfig::new(1, 3, 4);
        cfg.centering = Centering::PerRank;
        cfg.limit_h = 1e9;
        assert!(dfewma_monitor(reference.view(), stream.view(), &cfg)
            .unwrap()
            .is_none());
        cfg.limit_h = 0.0;
        let sig = dfewma_monitor(reference.view(), stream.view(), &cfg)
            .unwrap()
            .unwrap();
        assert_eq!(sig.alarm_time, 4);
    }
}

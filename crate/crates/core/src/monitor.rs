// SPDX-License-Identifier: MIT OR Apache-2.0

//! Moving-window monitoring and post-signal diagnosis.
//!
//! The chart is evaluated once the first `W` observations are in and then
//! after every `s` further observations, always on the latest `W` rows. It
//! signals when the chart statistic strictly exceeds `h`. On a signal the
//! change point is estimated as `n - W + k*` and every variable whose own
//! split statistic at `k*` exceeds `h` is reported as suspicious.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::ControlLimit;
use crate::matrix::MatrixView;
use crate::stats::{self, ChartPoint, PrefixSums, MIN_SAMPLE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub p: usize,
    pub window: usize,
    pub step: usize,
    pub limit: ControlLimit,
    /// Observations past the horizon are ignored.
    pub horizon_n: Option<usize>,
    /// Keep evaluating after the first signal (autocorrelation studies).
    pub continue_after_signal: bool,
}

impl MonitorConfig {
    pub fn new(p: usize, window: usize, step: usize, limit: ControlLimit) -> Result<Self> {
        let cfg = Self {
            p,
            window,
            step,
            limit,
            horizon_n: None,
            continue_after_signal: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon_n = Some(horizon);
        self
    }

    pub fn continuing(mut self) -> Self {
        self.continue_after_signal = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < MIN_SAMPLE {
            return Err(Error::config(format!(
                "window W={} must be >= 6",
                self.window
            )));
        }
        if self.step == 0 {
            return Err(Error::config("step s must be >= 1"));
        }
        if self.p == 0 {
            return Err(Error::config("dimension p must be >= 1"));
        }
        if self.limit.config.window != self.window {
            return Err(Error::config(format!(
                "control limit was calibrated for W={}, monitor uses W={}",
                self.limit.config.window, self.window
            )));
        }
        if self.limit.p != self.p {
            return Err(Error::config(format!(
                "control limit was calibrated for p={}, monitor uses p={}",
                self.limit.p, self.p
            )));
        }
        Ok(())
    }

    /// Whether time `n` (1-based count of observations) is an evaluation time.
    pub fn is_evaluation_time(&self, n: usize) -> bool {
        n >= self.window
            && (n - self.window).is_multiple_of(self.step)
            && self.horizon_n.is_none_or(|h| n <= h)
    }
}

/// Post-signal diagnosis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    pub alarm_time: usize,
    pub statistic_value: f64,
    pub split_k: usize,
    /// Estimated last in-control time index.
    pub change_point_estimate: usize,
    /// 0-based suspicious variables in ascending order.
    pub suspicious_variables: Vec<usize>,
}

pub fn check_signal(cp: &ChartPoint, cfg: &MonitorConfig) -> bool {
    cp.value > cfg.limit.h
}

/// Diagnoses a signaling window: change-point estimate plus every variable
/// whose statistic at the maximizing split exceeds `h`.
pub fn diagnose(
    window: MatrixView<'_>,
    cp: &ChartPoint,
    cfg: &MonitorConfig,
) -> Result<SignalReport> {
    if !check_signal(cp, cfg) {
        return Err(Error::precondition(format!(
            "diagnosis requested without a signal (U={} <= h={})",
            cp.value, cfg.limit.h
        )));
    }
    if window.n() != cfg.window || window.p() != cfg.p {
        return Err(Error::precondition(format!(
            "window is {}x{}, expected {}x{}",
            window.n(),
            window.p(),
            cfg.window,
            cfg.p
        )));
    }
    let k = cp.best_split.split_k;
    let prefix = PrefixSums::new(window);
    let h = cfg.limit.h;
    let mut suspicious: Vec<usize> = (0..cfg.p)
        .filter(|&r| prefix.variable_statistic(k, r) > h)
        .collect();
    let lead = cp.best_split.argmax_variable;
    if let Err(pos) = suspicious.binary_search(&lead) {
        suspicious.insert(pos, lead);
    }
    Ok(SignalReport {
        alarm_time: cp.time_index,
        statistic_value: cp.value,
        split_k: k,
        change_point_estimate: stats::change_point_estimate(cp, cfg.window)?,
        suspicious_variables: suspicious,
    })
}

/// One line of monitoring output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartRecord {
    pub time: usize,
    pub value: f64,
    pub h: f64,
    pub signal: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tau_hat: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variables: Option<Vec<usize>>,
}

impl ChartRecord {
    pub fn new(point: &ChartPoint, h: f64, report: Option<&SignalReport>) -> Self {
        Self {
            time: point.time_index,
            value: point.value,
            h,
            signal: point.value > h,
            tau_hat: report.map(|r| r.change_point_estimate),
            variables: report.map(|r| r.suspicious_variables.clone()),
        }
    }
}

/// A chart point together with its diagnosis when it signaled.
#[derive(Clone, Debug, PartialEq)]
pub struct Emission {
    pub point: ChartPoint,
    pub signal: Option<SignalReport>,
}

/// Streaming moving-window chart. Single writer; observations arrive in order.
#[derive(Clone, Debug)]
pub struct Monitor {
    cfg: MonitorConfig,
    buffer: VecDeque<f64>,
    time: usize,
    history: Vec<ChartPoint>,
    first_signal: Option<SignalReport>,
}

impl Monitor {
    pub fn new(cfg: MonitorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            buffer: VecDeque::with_capacity(cfg.window * cfg.p),
            cfg,
            time: 0,
            history: Vec::new(),
            first_signal: None,
        })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.cfg
    }

    /// Observations received so far.
    pub fn time(&self) -> usize {
        self.time
    }

    pub fn next_evaluation_time(&self) -> usize {
        let (w, s) = (self.cfg.window, self.cfg.step);
        if self.time < w {
            w
        } else {
            w + ((self.time - w) / s + 1) * s
        }
    }

    pub fn history(&self) -> &[ChartPoint] {
        &self.history
    }

    pub fn first_signal(&self) -> Option<&SignalReport> {
        self.first_signal.as_ref()
    }

    /// True once the monitor has signaled and is not continuing, or has passed
    /// its horizon.
    pub fn is_stopped(&self) -> bool {
        (self.first_signal.is_some() && !self.cfg.continue_after_signal)
            || self.cfg.horizon_n.is_some_and(|h| self.time >= h)
    }

    /// The buffered rows, oldest first.
    pub fn window(&mut self) -> MatrixView<'_> {
        MatrixView::new(self.buffer.make_contiguous(), self.cfg.p).expect("buffer holds whole rows")
    }

    /// Appends one observation and returns the chart point if this time is an
    /// evaluation time. A rejected observation leaves the state unchanged.
    pub fn observe(&mut self, x: &[f64]) -> Result<Option<ChartPoint>> {
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
        let (w, p) = (self.cfg.window, self.cfg.p);
        if self.buffer.len() == w * p {
            self.buffer.drain(..p);
        }
        self.buffer.extend(x.iter().copied());
        self.time += 1;
        if !self.cfg.is_evaluation_time(self.time) {
            return Ok(None);
        }
        let time = self.time;
        let cp = stats::window_chart_statistic(self.window(), w, time)?;
        self.history.push(cp);
        Ok(Some(cp))
    }

    /// [`Monitor::observe`] plus signal check and diagnosis. Once stopped,
    /// further observations are ignored and yield `None`.
    pub fn feed(&mut self, x: &[f64]) -> Result<Option<Emission>> {
        if self.is_stopped() {
            return Ok(None);
        }
        let Some(point) = self.observe(x)? else {
            return Ok(None);
        };
        let signal = if check_signal(&point, &self.cfg) {
            let cfg = self.cfg.clone();
            let report = diagnose(self.window(), &point, &cfg)?;
            if self.first_signal.is_none() {
                self.first_signal = Some(report.clone());
            }
            Some(report)
        } else {
            None
        };
        Ok(Some(Emission { point, signal }))
    }
}

/// Result of monitoring one recorded stream.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub points: Vec<ChartPoint>,
    pub signal: Option<SignalReport>,
}

/// Monitors a recorded stream offline, evaluating windows in place.
///
/// Produces the same points as feeding the rows one at a time to a
/// [`Monitor`], stopping at the first signal unless the config continues.
pub fn run_offline(stream: MatrixView<'_>, cfg: &MonitorConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    if stream.p() != cfg.p {
        return Err(Error::precondition(format!(
            "stream has p={}, monitor expects p={}",
            stream.p(),
            cfg.p
        )));
    }
    let last = cfg.horizon_n.map_or(stream.n(), |h| h.min(stream.n()));
    let mut points = Vec::new();
    let mut signal = None;
    let mut n = cfg.window;
    while n <= last {
        let window = stream.slice_rows(n - cfg.window..n)?;
        let cp = stats::window_chart_statistic(window, cfg.window, n)?;
        points.push(cp);
        if check_signal(&cp, cfg) && signal.is_none() {
            signal = Some(diagnose(window, &cp, cfg)?);
            if !cfg.continue_after_signal {
                break;
            }
        }
        n += cfg.step;
    }
    Ok(RunOutcome { points, signal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::LimitConfig;
    use crate::matrix::ObservationMatrix;

    fn config(p: usize, w: usize, s: usize, h: f64) -> MonitorConfig {
        let lc = LimitConfig {
            alpha: 0.01,
            bootstrap_b: 1,
            horizon_n: 100,
            window: w,
            step: s,
            seed: 0,
        };
        MonitorConfig::new(p, w, s, ControlLimit::fixed(h, p, lc)).unwrap()
    }

    #[test]
    fn evaluation_schedule() {
        let mut m = Monitor::new(config(1, 6, 5, 1.0)).unwrap();
        let mut times = Vec::new();
        for i in 0..30 {
            if let Some(cp) = m.observe(&[i as f64 % 2.0]).unwrap() {
                times.push(cp.time_index);
            }
        }
        assert_eq!(times, vec![6, 11, 16, 21, 26]);
        assert_eq!(m.next_evaluation_time(), 31);
    }

    #[test]
    fn constant_stream_never_signals() {
        let mut m = Monitor::new(config(3, 8, 2, 1e-9)).unwrap();
        for _ in 0..50 {
            if let Some(e) = m.feed(&[2.5, -1.0, 0.1]).unwrap() {
                assert_eq!(e.point.value, 0.0);
                assert!(e.signal.is_none());
            }
        }
        assert!(m.first_signal().is_none());
    }

    #[test]
    fn rejected_observation_leaves_state() {
        let mut m = Monitor::new(config(2, 6, 1, 1.0)).unwrap();
        m.observe(&[1.0, 2.0]).unwrap();
        assert!(m.observe(&[f64::NAN, 2.0]).is_err());
        assert!(m.observe(&[1.0]).is_err());
        assert_eq!(m.time(), 1);
        assert_eq!(m.window().n(), 1);
    }

    #[test]
    fn signal_is_strict() {
        let cfg = config(1, 8, 1, 2f64.sqrt());
        let w = ObservationMatrix::from_column(&[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let cp = stats::window_chart_statistic(w.view(), 8, 8).unwrap();
        let at = ChartPoint {
            value: cfg.limit.h,
            ..cp
        };
        assert!(!check_signal(&at, &cfg));
        let above = ChartPoint {
            value: cfg.limit.h + 1e-12,
            ..cp
        };
        assert!(check_signal(&above, &cfg));
        assert!(diagnose(w.view(), &at, &cfg).is_err());
    }

    #[test]
    fn single_shifted_column_is_diagnosed() {
        let mut rows = vec![[0.0; 4]; 10];
        for row in rows.iter_mut().skip(5) {
            row[2] = 5.0;
        }
        // small alternating noise elsewhere
        for (i, row) in rows.iter_mut().enumerate() {
            row[0] = if i % 2 == 0 { 0.1 } else { -0.1 };
        }
        let w = ObservationMatrix::from_rows(&rows).unwrap();
        let cfg = config(4, 10, 1, 1.0);
        let cp = stats::window_chart_statistic(w.view(), 10, 30).unwrap();
        let rep = diagnose(w.view(), &cp, &cfg).unwrap();
        assert_eq!(rep.suspicious_variables, vec![2]);
        assert_eq!(rep.split_k, 5);
        assert_eq!(rep.change_point_estimate, 25);
    }

    #[test]
    fn limit_window_mismatch_rejected() {
        let mut cfg = config(2, 10, 1, 1.0);
        cfg.window = 12;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn feed_stops_after_first_signal() {
        let mut m = Monitor::new(config(1, 6, 1, 0.5)).unwrap();
        let stream = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 0.0, 0.0];
        let mut emitted = 0;
        for v in stream {
            if m.feed(&[v]).unwrap().is_some() {
                emitted += 1;
            }
        }
        assert_eq!(emitted, 1);
        assert!(m.is_stopped());
        let rep = m.first_signal().unwrap();
        assert_eq!(rep.alarm_time, 6);
        assert_eq!(rep.change_point_estimate, 3);
    }
}

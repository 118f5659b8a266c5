// SPDX-License-Identifier: MIT OR Apache-2.0

//! Moving-window change-point control chart for detecting sparse mean shifts
//! in high-dimensional, possibly heteroscedastic and non-normal data streams.
//!
//! The chart statistic for a window of `W` observations is the largest
//! standardized difference of column means over every admissible split
//! `3 <= k <= W - 3` and every variable:
//!
//! ```text
//! T(k)  = max_r sqrt(k (W - k)) |mean(X[1..k], r) - mean(X[k+1..W], r)| / sqrt(W)
//! U(W)  = max_k T(k)
//! ```
//!
//! Windows advance by `s` observations; the chart signals when `U > h`, where
//! `h` comes from a bootstrap of in-control windows (see [`limits`]).
//!
//! Module map:
//! - [`matrix`]: observation storage and borrowed row views.
//! - [`stats`]: split statistics, chart statistics, change-point estimates.
//! - [`limits`]: bootstrap control limits and the on-disk limit cache.
//! - [`monitor`]: the streaming moving-window engine and post-signal diagnosis.
//! - [`sim`]: scenario generators (Models I-IV), the Monte-Carlo runner and metrics.
//! - [`dfewma`]: the rank-based DFEWMA comparator chart.
//! - [`io`]: CSV ingestion/emission, preprocessing of raw industrial data, replay.

#![forbid(unsafe_code)]

pub mod dfewma;
pub mod error;
pub mod io;
pub mod limits;
pub mod matrix;
pub mod monitor;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use limits::{bootstrap_control_limit, quantile_exponent, ControlLimit, LimitConfig};
pub use matrix::{MatrixView, ObservationMatrix};
pub use monitor::{diagnose, Monitor, MonitorConfig, SignalReport};
pub use stats::{
    change_point_estimate, column_means, full_sample_chart_statistic, split_statistic,
    window_chart_statistic, ChartPoint, SplitStatistic,
};

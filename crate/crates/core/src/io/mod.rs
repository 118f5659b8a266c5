// SPDX-License-Identifier: MIT OR Apache-2.0

//! Data ingestion, preprocessing, replay and result tables.

mod preprocess;
mod replay;
mod table;

pub use preprocess::{preprocess, quartiles, PreprocessReport, TUKEY_MULTIPLIER};
pub use replay::{replay_case, ReplayOutcome};
pub use table::{
    fmt_f64, read_grid, read_matrix_csv, read_raw_csv, write_matrix_csv, write_metrics_csv,
    GridRow, MetricsRow, RawMatrix, METRICS_HEADER,
};

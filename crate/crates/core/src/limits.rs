// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bootstrap control limits.
//!
//! `B` windows of `W` rows are resampled with replacement from an in-control
//! reference sample and the chart statistic is computed for each. The limit is
//! the empirical `(1 - alpha)^Q` quantile of those values, where
//! `Q = 1 / (floor((n - W) / s) + 1)` is the reciprocal of the number of
//! windows evaluated over a horizon of `n` observations. Treating successive
//! window statistics as independent, this spreads the false-alarm
//! probability `alpha` over the whole horizon.
//!
//! Quantile rule: sort ascending and take the order statistic at 1-based index
//! `ceil(level * B)`, i.e. the smallest value whose empirical CDF reaches
//! `level`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::MatrixView;
use crate::rng;
use crate::stats::{PrefixSums, MIN_SAMPLE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    /// Target false-alarm probability over the whole horizon.
    pub alpha: f64,
    pub bootstrap_b: usize,
    /// Monitoring horizon `n`.
    pub horizon_n: usize,
    pub window: usize,
    pub step: usize,
    pub seed: u64,
}

impl LimitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.bootstrap_b == 0 {
            return Err(Error::config("bootstrap sample count B must be >= 1"));
        }
        if self.window < MIN_SAMPLE || self.window > self.horizon_n {
            return Err(Error::config(format!(
                "window W={} must satisfy 6 <= W <= n={}",
                self.window, self.horizon_n
            )));
        }
        if self.step == 0 {
            return Err(Error::config("step s must be >= 1"));
        }
        Ok(())
    }

    /// Per-window quantile level `(1 - alpha)^Q`.
    pub fn quantile_level(&self) -> f64 {
        (1.0 - self.alpha).powf(quantile_exponent(self.horizon_n, self.window, self.step))
    }
}

/// A calibrated threshold for the window chart statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlLimit {
    pub h: f64,
    pub p: usize,
    pub config: LimitConfig,
    pub quantile_level: f64,
    /// SHA-256 of the reference sample the bootstrap drew from.
    pub source_fingerprint: String,
}

impl ControlLimit {
    /// A fixed limit that did not come from a bootstrap (tests, external values).
    pub fn fixed(h: f64, p: usize, config: LimitConfig) -> Self {
        Self {
            h,
            p,
            quantile_level: config.quantile_level(),
            config,
            source_fingerprint: String::new(),
        }
    }

    fn matches(&self, p: usize, cfg: &LimitConfig, fingerprint: &str) -> bool {
        self.p == p
            && self.config.window == cfg.window
            && self.config.step == cfg.step
            && self.config.horizon_n == cfg.horizon_n
            && self.config.alpha.to_bits() == cfg.alpha.to_bits()
            && self.config.bootstrap_b == cfg.bootstrap_b
            && self.config.seed == cfg.seed
            && self.source_fingerprint == fingerprint
    }
}

/// `Q = 1 / (floor((n - W) / s) + 1)`. Requires `W <= n` and `s >= 1`.
pub fn quantile_exponent(n: usize, window: usize, step: usize) -> f64 {
    debug_assert!(window <= n && step >= 1);
    let windows = n.saturating_sub(window) / step.max(1) + 1;
    1.0 / windows as f64
}

/// Order statistic at 1-based index `ceil(level * len)` of an ascending slice.
pub fn empirical_quantile(sorted: &[f64], level: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::precondition("empirical quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::precondition(format!(
            "quantile level {level} outside [0, 1]"
        )));
    }
    let rank = (level * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Hex SHA-256 over the shape and little-endian bytes of a sample.
pub fn fingerprint(x: MatrixView<'_>) -> String {
    let mut hasher = Sha256::new();
    hasher.update((x.n() as u64).to_le_bytes());
    hasher.update((x.p() as u64).to_le_bytes());
    for v in x.as_slice() {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Window chart statistics of `b` bootstrap windows, in replicate order.
///
/// Replicate `i` draws its `window` row indices from substream `i` of `seed`,
/// so the output does not depend on how the work is scheduled.
pub fn bootstrap_statistics(
    reference: MatrixView<'_>,
    window: usize,
    b: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if reference.n() == 0 {
        return Err(Error::precondition(
            "bootstrap reference sample has no rows",
        ));
    }
    if window < MIN_SAMPLE {
        return Err(Error::InsufficientSample {
            needed: MIN_SAMPLE,
            got: window,
        });
    }
    let (m, p) = (reference.n(), reference.p());
    let stats = (0..b)
        .into_par_iter()
        .map_init(
            || vec![0.0; window * p],
            |buf, i| {
                let mut rng = rng::substream(seed, i as u64);
                for row in buf.chunks_exact_mut(p) {
                    row.copy_from_slice(reference.row(rng.random_range(0..m)));
                }
                let view = MatrixView::new(buf, p).expect("buffer is whole rows");
                PrefixSums::new(view).chart().value
            },
        )
        .collect();
    Ok(stats)
}

/// Turns pooled bootstrap statistics into a limit at `cfg.quantile_level()`.
pub fn limit_from_statistics(
    mut pooled: Vec<f64>,
    p: usize,
    cfg: LimitConfig,
    source_fingerprint: String,
) -> Result<ControlLimit> {
    cfg.validate()?;
    pooled.sort_by(f64::total_cmp);
    let level = cfg.quantile_level();
    let h = empirical_quantile(&pooled, level)?;
    Ok(ControlLimit {
        h,
        p,
        config: cfg,
        quantile_level: level,
        source_fingerprint,
    })
}

/// Calibrates `h` for the given reference sample and configuration.
pub fn bootstrap_control_limit(
    reference: MatrixView<'_>,
    cfg: LimitConfig,
) -> Result<ControlLimit> {
    cfg.validate()?;
    let pooled = bootstrap_statistics(reference, cfg.window, cfg.bootstrap_b, cfg.seed)?;
    let limit = limit_from_statistics(pooled, reference.p(), cfg, fingerprint(reference))?;
    if limit.h == 0.0 {
        log::warn!(
            "control limit is 0 (constant reference sample); any non-constant window will signal"
        );
    }
    Ok(limit)
}

/// Plain-text store of calibrated limits, one `[limit]` record per entry.
///
/// ```text
/// [limit]
/// p = 100
/// window = 40
/// ...
/// h = 3.3712...e0
/// ```
#[derive(Clone, Debug)]
pub struct LimitCache {
    path: PathBuf,
}

/// Default file name used inside a cache directory.
pub const CACHE_FILE_NAME: &str = "limits.txt";

impl LimitCache {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        Self::new(dir.as_ref().join(CACHE_FILE_NAME))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn load(&self) -> Result<Vec<ControlLimit>> {
        match fs::read_to_string(&self.path) {
            Ok(text) => parse_records(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn find(
        &self,
        p: usize,
        cfg: &LimitConfig,
        fingerprint: &str,
    ) -> Result<Option<ControlLimit>> {
        Ok(self
            .load()?
            .into_iter()
            .find(|l| l.matches(p, cfg, fingerprint)))
    }

    pub fn append(&self, limit: &ControlLimit) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        if !text.is_empty() && !text.ends_with("\n\n") {
            text.push('\n');
        }
        text.push_str(&format_record(limit));
        fs::write(&self.path, text)?;
        Ok(())
    }

    /// Returns the cached limit for this reference and config, computing and
    /// storing it on a miss.
    pub fn get_or_compute(
        &self,
        reference: MatrixView<'_>,
        cfg: LimitConfig,
    ) -> Result<ControlLimit> {
        let fp = fingerprint(reference);
        if let Some(hit) = self.find(reference.p(), &cfg, &fp)? {
            return Ok(hit);
        }
        let limit = bootstrap_control_limit(reference, cfg)?;
        self.append(&limit)?;
        Ok(limit)
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_record(l: &ControlLimit) -> String {
    let mut s = String::from("[limit]\n");
    let c = &l.config;
    let _ = writeln!(s, "p = {}", l.p);
    let _ = writeln!(s, "window = {}", c.window);
    let _ = writeln!(s, "step = {}", c.step);
    let _ = writeln!(s, "horizon = {}", c.horizon_n);
    let _ = writeln!(s, "alpha = {}", fmt_f64(c.alpha));
    let _ = writeln!(s, "bootstrap = {}", c.bootstrap_b);
    let _ = writeln!(s, "seed = {}", c.seed);
    let _ = writeln!(s, "source = {}", l.source_fingerprint);
    let _ = writeln!(s, "quantile_level = {}", fmt_f64(l.quantile_level));
    let _ = writeln!(s, "h = {}", fmt_f64(l.h));
    s
}

#[derive(Default)]
struct PartialRecord {
    p: Option<usize>,
    window: Option<usize>,
    step: Option<usize>,
    horizon: Option<usize>,
    alpha: Option<f64>,
    bootstrap: Option<usize>,
    seed: Option<u64>,
    source: Option<String>,
    quantile_level: Option<f64>,
    h: Option<f64>,
}

impl PartialRecord {
    fn finish(self, line: usize) -> Result<ControlLimit> {
        let missing =
            |k: &str| Error::Parse(format!("limit record ending at line {line}: missing `{k}`"));
        let config = LimitConfig {
            alpha: self.alpha.ok_or_else(|| missing("alpha"))?,
            bootstrap_b: self.bootstrap.ok_or_else(|| missing("bootstrap"))?,
            horizon_n: self.horizon.ok_or_else(|| missing("horizon"))?,
            window: self.window.ok_or_else(|| missing("window"))?,
            step: self.step.ok_or_else(|| missing("step"))?,
            seed: self.seed.ok_or_else(|| missing("seed"))?,
        };
        Ok(ControlLimit {
            h: self.h.ok_or_else(|| missing("h"))?,
            p: self.p.ok_or_else(|| missing("p"))?,
            quantile_level: self
                .quantile_level
                .unwrap_or_else(|| config.quantile_level()),
            config,
            source_fingerprint: self.source.unwrap_or_default(),
        })
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad value `{value}` for `{key}`")))
}

pub fn parse_records(text: &str) -> Result<Vec<ControlLimit>> {
    let mut out = Vec::new();
    let mut current: Option<PartialRecord> = None;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[limit]" {
            if let Some(rec) = current.take() {
                out.push(rec.finish(line_no)?);
            }
            current = Some(PartialRecord::default());
            continue;
        }
        let rec = current.as_mut().ok_or_else(|| {
            Error::Parse(format!("line {line_no}: entry outside a [limit] record"))
        })?;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {line_no}: expected `key = value`")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "p" => rec.p = Some(parse_num(key, value, line_no)?),
            "window" => rec.window = Some(parse_num(key, value, line_no)?),
            "step" => rec.step = Some(parse_num(key, value, line_no)?),
            "horizon" => rec.horizon = Some(parse_num(key, value, line_no)?),
            "alpha" => rec.alpha = Some(parse_num(key, value, line_no)?),
            "bootstrap" => rec.bootstrap = Some(parse_num(key, value, line_no)?),
            "seed" => rec.seed = Some(parse_num(key, value, line_no)?),
            "source" => rec.source = Some(value.to_string()),
            "quantile_level" => rec.quantile_level = Some(parse_num(key, value, line_no)?),
            "h" => rec.h = Some(parse_num(key, value, line_no)?),
            other => {
                return Err(Error::Parse(format!(
                    "line {line_no}: unknown key `{other}`"
                )))
            }
        }
    }
    if let Some(rec) = current.take() {
        out.push(rec.finish(last_line)?);
    }
    Ok(out)
}

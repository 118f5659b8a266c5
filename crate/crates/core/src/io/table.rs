// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::ObservationMatrix;
use crate::sim::{MetricsSummary, Model, ScenarioSpec};

/// Matrix as read from disk; missing entries are `NaN`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMatrix {
    data: Vec<f64>,
    n: usize,
    p: usize,
    pub header: Option<Vec<String>>,
}

impl RawMatrix {
    pub fn new(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::precondition(format!(
                "data length {} does not match {n} x {p}",
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_infinite()) {
            return Err(Error::Parse("infinite values are not allowed".into()));
        }
        Ok(Self {
            data,
            n,
            p,
            header: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, r: usize) -> f64 {
        self.data[i * self.p + r]
    }

    pub fn set(&mut self, i: usize, r: usize, v: f64) {
        self.data[i * self.p + r] = v;
    }

    /// Non-missing values of column `r`.
    pub fn observed(&self, r: usize) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.get(i, r))
            .filter(|v| !v.is_nan())
            .collect()
    }

    pub fn missing_count(&self) -> usize {
        self.data.iter().filter(|v| v.is_nan()).count()
    }

    /// Converts to an [`ObservationMatrix`], failing on any missing value.
    pub fn into_observations(self) -> Result<ObservationMatrix> {
        ObservationMatrix::from_row_major(self.n, self.p, self.data)
    }
}

impl From<ObservationMatrix> for RawMatrix {
    fn from(m: ObservationMatrix) -> Self {
        let (n, p) = (m.n(), m.p());
        Self {
            data: m.into_vec(),
            n,
            p,
            header: None,
        }
    }
}

fn is_missing_token(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na")
}

fn detect_delimiter(text: &str) -> u8 {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.contains(',') {
        b','
    } else if first.contains('\t') {
        b'\t'
    } else {
        b' '
    }
}

/// Parses delimited text: comma, tab or single-space separated, optional
/// header row, missing values as empty fields, `NaN` or `NA`.
pub fn parse_raw_csv(text: &str) -> Result<RawMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(detect_delimiter(text))
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut data = Vec::new();
    let mut p = None;
    let mut n = 0;
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let width = *p.get_or_insert(rec.len());
        if rec.len() != width {
            return Err(Error::Schema(format!(
                "record {} has {} fields, expected {width}",
                idx + 1,
                rec.len()
            )));
        }
        let parsed: std::result::Result<Vec<f64>, usize> = rec
            .iter()
            .enumerate()
            .map(|(c, f)| {
                if is_missing_token(f) {
                    Ok(f64::NAN)
                } else {
                    f.parse::<f64>().map_err(|_| c)
                }
            })
            .collect();
        match parsed {
            Ok(row) => {
                data.extend(row);
                n += 1;
            }
            Err(_) if n == 0 && header.is_none() => {
                header = Some(rec.iter().map(str::to_string).collect());
            }
            Err(c) => {
                return Err(Error::Parse(format!(
                    "record {}, field {}: `{}` is not a number",
                    idx + 1,
                    c + 1,
                    &rec[c]
                )))
            }
        }
    }
    let p = p.ok_or_else(|| Error::Parse("input has no records".into()))?;
    if n == 0 {
        return Err(Error::Parse("input has a header but no data rows".into()));
    }
    let mut m = RawMatrix::new(n, p, data)?;
    m.header = header;
    Ok(m)
}

pub fn read_raw_csv(path: impl AsRef<Path>) -> Result<RawMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_raw_csv(&text)
}

/// Reads a complete matrix; missing values are an error.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<(ObservationMatrix, Option<Vec<String>>)> {
    let mut raw = read_raw_csv(path)?;
    let header = raw.header.take();
    if raw.missing_count() > 0 {
        return Err(Error::Parse(format!(
            "{} missing values; run preprocessing first",
            raw.missing_count()
        )));
    }
    Ok((raw.into_observations()?, header))
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    crate::limits::fmt_f64(v)
}

pub fn write_matrix_csv<W: Write>(
    out: W,
    m: &ObservationMatrix,
    header: Option<&[String]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(h) = header {
        if h.len() != m.p() {
            return Err(Error::Schema(format!(
                "header has {} names for {} columns",
                h.len(),
                m.p()
            )));
        }
        w.write_record(h)?;
    }
    for row in m.rows() {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub const METRICS_HEADER: [&str; 13] = [
    "model", "p", "W", "tau", "delta", "v", "DR", "CED", "CPE", "DRV", "FAP", "R", "seed",
];

/// One line of a metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub spec: ScenarioSpec,
    pub metrics: MetricsSummary,
}

impl MetricsRow {
    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let s = &self.spec;
        let m = &self.metrics;
        vec![
            s.model.to_string(),
            s.p.to_string(),
            s.window.to_string(),
            s.tau.to_string(),
            fmt_f64(s.delta),
            fmt_f64(s.sparsity_v),
            fmt_f64(m.dr),
            opt(m.ced),
            opt(m.cpe),
            opt(m.drv),
            opt(m.fap),
            m.replications.to_string(),
            s.seed.to_string(),
        ]
    }
}

pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// One scenario line of a simulation grid file.
pub type GridRow = ScenarioSpec;

/// Reads a scenario grid.
///
/// Required columns: `model, p, W, tau, delta, v`. Optional: `horizon`
/// (default 100), `R` (default 1000), `seed` (default 1).
pub fn read_grid(text: &str) -> Result<Vec<GridRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let required = |name: &str| {
        col(name).ok_or_else(|| Error::Schema(format!("grid is missing column `{name}`")))
    };
    let (c_model, c_p, c_w, c_tau, c_delta, c_v) = (
        required("model")?,
        required("p")?,
        required("W")?,
        required("tau")?,
        required("delta")?,
        required("v")?,
    );
    let (c_n, c_r, c_seed) = (col("horizon"), col("R"), col("seed"));
    let mut out = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = idx + 2;
        let field = |c: usize| rec.get(c).unwrap_or("");
        fn num<T: std::str::FromStr>(v: &str, name: &str, line: usize) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Parse(format!("grid line {line}: bad {name} `{v}`")))
        }
        let opt = |c: Option<usize>| c.map(field).filter(|v| !v.is_empty());
        let spec = ScenarioSpec {
            model: field(c_model).parse::<Model>()?,
            p: num(field(c_p), "p", line)?,
            window: num(field(c_w), "W", line)?,
            tau: num(field(c_tau), "tau", line)?,
            delta: num(field(c_delta), "delta", line)?,
            sparsity_v: num(field(c_v), "v", line)?,
            horizon_n: opt(c_n)
                .map(|v| num(v, "horizon", line))
                .transpose()?
                .unwrap_or(100),
            replications: opt(c_r)
                .map(|v| num(v, "R", line))
                .transpose()?
                .unwrap_or(1000),
            seed: opt(c_seed)
                .map(|v| num(v, "seed", line))
                .transpose()?
                .unwrap_or(1),
        };
        spec.validate()
            .map_err(|e| Error::Config(format!("grid line {line}: {e}")))?;
        out.push(spec);
    }
    Ok(out)
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Replay of a recorded case: IC rows up to the change, OC rows after it.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{MatrixView, ObservationMatrix};
use crate::monitor::{self, MonitorConfig};
use crate::rng::{self, Rng};
use crate::sim::{summarize, MetricsSummary, Truth};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub metrics: MetricsSummary,
    /// Stream length per replication.
    pub horizon: usize,
    /// The IC pool has fewer rows than `tau`.
    pub ic_pool_short: bool,
    /// The OC pool has fewer rows than `horizon - tau`.
    pub oc_pool_short: bool,
}

fn draw_rows(pool: MatrixView<'_>, count: usize, rng: &mut Rng, out: &mut Vec<f64>) {
    for _ in 0..count {
        let i = rng.random_range(0..pool.n());
        out.extend_from_slice(pool.row(i));
    }
}

/// Monitors `replications` streams, each built from `tau` rows drawn with
/// replacement from `ic` followed by rows drawn with replacement from `oc`
/// up to the horizon.
///
/// The horizon is `cfg.horizon_n`, or `tau + oc.n()` when unset. Replication
/// `j` draws from `substream(seed, j)`.
pub fn replay_case(
    ic: &ObservationMatrix,
    oc: &ObservationMatrix,
    tau: usize,
    cfg: &MonitorConfig,
    replications: usize,
    seed: u64,
) -> Result<ReplayOutcome> {
    cfg.validate()?;
    if ic.p() != cfg.p || oc.p() != cfg.p {
        return Err(Error::Schema(format!(
            "pools have p={} (IC) and p={} (OC), monitor expects p={}",
            ic.p(),
            oc.p(),
            cfg.p
        )));
    }
    if replications == 0 {
        return Err(Error::config("replications must be positive"));
    }
    let horizon = cfg.horizon_n.unwrap_or(tau + oc.n());
    if horizon < cfg.window || horizon < tau {
        return Err(Error::config(format!(
            "horizon {horizon} must be at least W={} and tau={tau}",
            cfg.window
        )));
    }
    if (tau > 0 && ic.n() == 0) || (horizon > tau && oc.n() == 0) {
        return Err(Error::precondition("replay pool is empty"));
    }
    let ic_pool_short = ic.n() < tau;
    let oc_pool_short = oc.n() < horizon - tau;
    if ic_pool_short || oc_pool_short {
        log::info!("replay pools are smaller than the stream; rows repeat within a replication");
    }

    let mut run_cfg = cfg.clone();
    run_cfg.horizon_n = Some(horizon);
    run_cfg.continue_after_signal = false;
    let results = (0..replications as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::substream(seed, j);
            let mut data = Vec::with_capacity(horizon * cfg.p);
            draw_rows(ic.view(), tau, &mut rng, &mut data);
            draw_rows(oc.view(), horizon - tau, &mut rng, &mut data);
            let stream = MatrixView::new(&data, cfg.p)?;
            monitor::run_offline(stream, &run_cfg).map(|o| o.signal)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplayOutcome {
        metrics: summarize(&results, tau, Truth::Unknown),
        horizon,
        ic_pool_short,
        oc_pool_short,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::{ControlLimit, LimitConfig};

    fn cfg(p: usize, h: f64) -> MonitorConfig {
        let lc = LimitConfig {
            alpha: 0.01,
            bootstrap_b: 100,
            horizon_n: 60,
            window: 10,
            step: 5,
            seed: 1,
        };
        MonitorConfig::new(p, 10, 5, ControlLimit::fixed(h, p, lc))
            .unwrap()
            .with_horizon(60)
    }

    fn pool(n: usize, p: usize, level: f64) -> ObservationMatrix {
        let data = (0..n * p)
            .map(|i| level + ((i * 7919) % 13) as f64 / 13.0)
            .collect();
        ObservationMatrix::from_row_major(n, p, data).unwrap()
    }

    #[test]
    fn large_shift_is_detected_after_tau() {
        let ic = pool(50, 2, 0.0);
        let oc = pool(50, 2, 20.0);
        let out = replay_case(&ic, &oc, 25, &cfg(2, 5.0), 20, 9).unwrap();
        assert_eq!(out.metrics.dr, 1.0);
        assert!(out.metrics.ced.unwrap() > 0.0);
        assert!(out.metrics.fap.is_none() && out.metrics.drv.is_none());
        assert!(!out.ic_pool_short && !out.oc_pool_short);
    }

    #[test]
    fn replay_is_reproducible() {
        let ic = pool(30, 3, 0.0);
        let oc = pool(5, 3, 1.0);
        let a = replay_case(&ic, &oc, 25, &cfg(3, 2.0), 10, 4).unwrap();
        let b = replay_case(&ic, &oc, 25, &cfg(3, 2.0), 10, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.oc_pool_short);
    }

    #[test]
    fn mismatched_pool_is_rejected() {
        let ic = pool(30, 3, 0.0);
        let oc = pool(30, 2, 0.0);
        assert!(replay_case(&ic, &oc, 25, &cfg(3, 2.0), 10, 4).is_err());
    }
}

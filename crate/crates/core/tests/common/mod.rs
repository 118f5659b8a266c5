// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent oracles and randomized properties shared by the property and
//! acceptance test targets.

#![allow(dead_code)]

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use nswchart::dfewma::{self, Centering, DfewmaConfig};
use nswchart::limits::{self, LimitConfig};
use nswchart::monitor::{self, Monitor, MonitorConfig};
use nswchart::{ControlLimit, ObservationMatrix};

/// Brute-force chart statistic: `(value, k, r)` with `r` 0-based.
///
/// Plain double loop over splits and variables, means summed directly, ties
/// resolved to the smallest `k` then the smallest `r`.
pub fn brute_force(x: &ObservationMatrix) -> (f64, usize, usize) {
    let (n, p) = (x.n(), x.p());
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for k in 3..=n - 3 {
        let w = ((k * (n - k)) as f64 / n as f64).sqrt();
        for r in 0..p {
            let pre: f64 = (0..k).map(|i| x.get(i, r)).sum::<f64>() / k as f64;
            let post: f64 = (k..n).map(|i| x.get(i, r)).sum::<f64>() / (n - k) as f64;
            let t = w * (pre - post).abs();
            if t > best.0 {
                best = (t, k, r);
            }
        }
    }
    best
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn matrix(n: usize, p: usize, lo: f64, hi: f64) -> impl Strategy<Value = ObservationMatrix> {
    vec(lo..hi, n * p).prop_map(move |d| ObservationMatrix::from_row_major(n, p, d).unwrap())
}

fn small_matrix() -> impl Strategy<Value = ObservationMatrix> {
    (6usize..=12, 1usize..=4).prop_flat_map(|(n, p)| matrix(n, p, -10.0, 10.0))
}

/// Deterministic runner: fixed ChaCha seed, no failure persistence.
pub fn runner(seed: u8, cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(
        config,
        TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]),
    )
}

fn check<S: Strategy>(
    seed: u8,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(seed, cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn fixed_limit(p: usize, window: usize, step: usize, h: f64) -> ControlLimit {
    let lc = LimitConfig {
        alpha: 0.01,
        bootstrap_b: 1,
        horizon_n: window.max(100),
        window,
        step,
        seed: 0,
    };
    ControlLimit::fixed(h, p, lc)
}

/// The fast statistic agrees with the brute-force loop.
pub fn oracle_equivalence(cases: u32) -> Result<(), String> {
    check(1, cases, small_matrix(), |x| {
        let (v, k, r) = brute_force(&x);
        let cp = nswchart::full_sample_chart_statistic(x.view()).unwrap();
        prop_assert!(rel_close(cp.value, v, 1e-12), "{} vs {v}", cp.value);
        prop_assert_eq!(
            (cp.best_split.split_k, cp.best_split.argmax_variable),
            (k, r)
        );
        Ok(())
    })
}

/// `T(c X) = |c| T(X)`.
pub fn scale_equivariance(cases: u32) -> Result<(), String> {
    let strat = (small_matrix(), prop_oneof![-50.0..-0.01f64, 0.01..50.0f64]);
    check(2, cases, strat, |(x, c)| {
        let base = nswchart::full_sample_chart_statistic(x.view())
            .unwrap()
            .value;
        let scaled = nswchart::full_sample_chart_statistic(x.map(|v| c * v).unwrap().view())
            .unwrap()
            .value;
        prop_assert!(
            rel_close(scaled, c.abs() * base, 1e-10),
            "{scaled} vs {}",
            c.abs() * base
        );
        Ok(())
    })
}

/// Adding a constant to each column leaves the statistic unchanged.
pub fn shift_invariance(cases: u32) -> Result<(), String> {
    let strat = small_matrix().prop_flat_map(|x| {
        let p = x.p();
        (Just(x), vec(-1e3..1e3f64, p))
    });
    check(3, cases, strat, |(x, offsets)| {
        let p = x.p();
        let shifted: Vec<f64> = x
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, v)| v + offsets[i % p])
            .collect();
        let y = ObservationMatrix::from_row_major(x.n(), p, shifted).unwrap();
        let a = nswchart::full_sample_chart_statistic(x.view())
            .unwrap()
            .value;
        let b = nswchart::full_sample_chart_statistic(y.view())
            .unwrap()
            .value;
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a), "{a} vs {b}");
        Ok(())
    })
}

/// Reordering columns permutes the argmax variable and keeps the value.
pub fn permutation_invariance(cases: u32) -> Result<(), String> {
    let strat = small_matrix().prop_flat_map(|x| {
        let p = x.p();
        (Just(x), Just((0..p).collect::<Vec<usize>>()).prop_shuffle())
    });
    check(4, cases, strat, |(x, perm)| {
        let y = x.select_columns(&perm).unwrap();
        let a = nswchart::full_sample_chart_statistic(x.view()).unwrap();
        let b = nswchart::full_sample_chart_statistic(y.view()).unwrap();
        prop_assert!(rel_close(a.value, b.value, 1e-12));
        prop_assert_eq!(
            perm[b.best_split.argmax_variable],
            a.best_split.argmax_variable
        );
        Ok(())
    })
}

/// Feeding rows one at a time gives exactly the offline chart points.
pub fn streaming_offline_equivalence(cases: u32) -> Result<(), String> {
    let strat = (6usize..=12, 1usize..=5, 1usize..=4).prop_flat_map(|(w, s, p)| {
        (
            Just(w),
            Just(s),
            (w..=w + 40).prop_flat_map(move |n| matrix(n, p, -3.0, 3.0)),
        )
    });
    check(5, cases, strat, |(w, s, x)| {
        let cfg = MonitorConfig::new(x.p(), w, s, fixed_limit(x.p(), w, s, f64::INFINITY))
            .unwrap()
            .continuing();
        let mut mon = Monitor::new(cfg.clone()).unwrap();
        let mut streamed = Vec::new();
        for row in x.rows() {
            streamed.extend(mon.observe(row).unwrap());
        }
        let offline = monitor::run_offline(x.view(), &cfg).unwrap();
        prop_assert_eq!(streamed, offline.points);
        Ok(())
    })
}

/// Raising `alpha` never raises `h`; `h` lies within the bootstrap range.
pub fn quantile_monotonicity(cases: u32) -> Result<(), String> {
    let strat = (
        (20usize..=50, 1usize..=3).prop_flat_map(|(m, p)| matrix(m, p, -2.0, 2.0)),
        6usize..=10,
        0.001..0.2f64,
        0.001..0.2f64,
        any::<u64>(),
    );
    check(6, cases, strat, |(x, w, a1, a2, seed)| {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let cfg = |alpha| LimitConfig {
            alpha,
            bootstrap_b: 200,
            horizon_n: 60,
            window: w,
            step: 5,
            seed,
        };
        let h_lo = limits::bootstrap_control_limit(x.view(), cfg(lo))
            .unwrap()
            .h;
        let h_hi = limits::bootstrap_control_limit(x.view(), cfg(hi))
            .unwrap()
            .h;
        prop_assert!(h_lo >= h_hi, "h({lo}) = {h_lo} < h({hi}) = {h_hi}");
        let stats = limits::bootstrap_statistics(x.view(), w, 200, seed).unwrap();
        let min = stats.iter().copied().fold(f64::INFINITY, f64::min);
        let max = stats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= h_hi && h_lo <= max);
        Ok(())
    })
}

/// The DFEWMA statistic depends on the data only through ranks.
pub fn rank_invariance(cases: u32) -> Result<(), String> {
    let strat =
        (1usize..=3, 5usize..=15, 3usize..=8, 0.05..1.0f64).prop_flat_map(|(p, m0, w, lambda)| {
            (
                matrix(m0, p, -3.0, 3.0),
                (w..=w + 10).prop_flat_map(move |n| matrix(n, p, -3.0, 3.0)),
                Just(w),
                Just(lambda),
                prop_oneof![Just(Centering::PerRank), Just(Centering::AsPublished)],
            )
        });
    check(
        7,
        cases,
        strat,
        |(reference, stream, w, lambda, centering)| {
            let mut cfg = DfewmaConfig::new(reference.p(), reference.n(), w);
            cfg.lambda = lambda;
            cfg.centering = centering;
            // strictly increasing on the reals
            let f = |v: f64| v * v * v + 2.0 * v + 7.0;
            let a = dfewma::dfewma_statistic(reference.view(), stream.view(), &cfg).unwrap();
            let b = dfewma::dfewma_statistic(
                reference.map(f).unwrap().view(),
                stream.map(f).unwrap().view(),
                &cfg,
            )
            .unwrap();
            prop_assert_eq!(a, b);
            Ok(())
        },
    )
}

/// Named property checks, each run with a fixed seed.
pub type Property = fn(u32) -> Result<(), String>;

pub const PROPERTIES: &[(&str, Property)] = &[
    ("oracle equivalence", oracle_equivalence),
    ("scale equivariance", scale_equivariance),
    ("shift invariance", shift_invariance),
    ("column permutation invariance", permutation_invariance),
    (
        "streaming/offline equivalence",
        streaming_offline_equivalence,
    ),
    ("quantile monotonicity", quantile_monotonicity),
    ("rank invariance", rank_invariance),
];

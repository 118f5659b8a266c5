// SPDX-License-Identifier: MIT OR Apache-2.0

//! Moment checks on the scenario generators, 10^5 post-change rows each,
//! at three standard errors.

use nswchart::sim::{Model, ModelParams, RunGenerator, ScenarioSpec};

const RUNS: u64 = 1000;
const ROWS: usize = 100;
const P: usize = 4;

/// Post-change rows of `RUNS` runs with the change before the first row.
fn post_change_rows(model: Model, delta: f64) -> Vec<Vec<f64>> {
    let spec = ScenarioSpec {
        model,
        p: P,
        window: 20,
        tau: 0,
        delta,
        sparsity_v: 0.5,
        horizon_n: ROWS,
        replications: RUNS as usize,
        seed: 20_240_601,
    };
    let g = RunGenerator::new(spec, ModelParams::default()).unwrap();
    (0..RUNS)
        .flat_map(|j| {
            let run = g.generate(j);
            run.rows().map(<[f64]>::to_vec).collect::<Vec<_>>()
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn column(rows: &[Vec<f64>], r: usize) -> Vec<f64> {
    rows.iter().map(|row| row[r]).collect()
}

fn assert_within(name: &str, got: f64, want: f64, se: f64) {
    assert!(
        (got - want).abs() <= 3.0 * se,
        "{name}: got {got}, want {want} +- {}",
        3.0 * se
    );
}

#[test]
fn model_one_mean_and_variance() {
    let rows = post_change_rows(Model::I, 2.0);
    let n = rows.len() as f64;
    for r in 0..P {
        let c = column(&rows, r);
        let want = if r < P / 2 { 2.0 } else { 0.0 };
        assert_within(&format!("mean[{r}]"), mean(&c), want, 1.0 / n.sqrt());
        assert_within(&format!("var[{r}]"), var(&c), 1.0, (2.0 / n).sqrt());
    }
}

#[test]
fn model_two_variance_follows_cycle() {
    let rows = post_change_rows(Model::II, 1.0);
    let params = ModelParams::default();
    let c = column(&rows, P - 1);
    let cycle_mean = mean(&params.lambda_sequence);
    // pooled rows are a scale mixture: Var(X^2) = 3 E[lambda^2] - E[lambda]^2
    let second = params.lambda_sequence.iter().map(|l| l * l).sum::<f64>()
        / params.lambda_sequence.len() as f64;
    let se = ((3.0 * second - cycle_mean * cycle_mean) / c.len() as f64).sqrt();
    assert_within("pooled var", var(&c), cycle_mean, se);
    // row i (0-based) of a run is post-change time t = i + 1
    for t in [1usize, 6] {
        let at_t: Vec<f64> = c
            .iter()
            .enumerate()
            .filter(|(i, _)| (i % ROWS) % 10 == t - 1)
            .map(|(_, &v)| v)
            .collect();
        let lambda = params.lambda(t);
        let se = lambda * (2.0 / at_t.len() as f64).sqrt();
        assert_within(&format!("var at t={t}"), var(&at_t), lambda, se);
    }
    assert_eq!(params.lambda(1), 0.5);
    assert_eq!(params.lambda(6), 1.0);
}

#[test]
fn model_three_adjacent_correlation() {
    let rows = post_change_rows(Model::III, 0.0);
    let n = rows.len() as f64;
    let (a, b) = (column(&rows, 0), column(&rows, 1));
    let (ma, mb) = (mean(&a), mean(&b));
    let cov = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n - 1.0);
    let rho = cov / (var(&a) * var(&b)).sqrt();
    let se = (1.0 - 0.995f64 * 0.995) / n.sqrt();
    assert_within("rho(0,1)", rho, 0.995, se);
    assert_within("var[3]", var(&column(&rows, 3)), 1.0, (2.0 / n).sqrt());
}

#[test]
fn model_four_has_t_variance() {
    let rows = post_change_rows(Model::IV, 0.0);
    let n = rows.len() as f64;
    let nu = 30.0;
    let want = nu / (nu - 2.0);
    // Var(X^2) for t_nu: E X^4 - (E X^2)^2 with E X^4 = 3 nu^2 / ((nu - 2)(nu - 4))
    let fourth = 3.0 * nu * nu / ((nu - 2.0) * (nu - 4.0));
    let se = ((fourth - want * want) / n).sqrt();
    for r in 0..P {
        assert_within(&format!("var[{r}]"), var(&column(&rows, r)), want, se);
    }
}

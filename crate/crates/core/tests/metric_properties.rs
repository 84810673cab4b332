use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsbench_core::baselines::{naive, seasonal_naive};
use tsbench_core::metrics::{mase, quantile_loss, seasonal_error, sql, wape, wql};
use tsbench_core::synthetic::seasonal_series;

#[derive(Debug)]
struct Case {
    histories: Vec<Vec<f64>>,
    actuals: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
    quantiles: Vec<Vec<Vec<f64>>>,
    levels: Vec<f64>,
    m: usize,
}

fn case() -> impl Strategy<Value = Case> {
    (
        1usize..=25,
        1usize..=5,
        1usize..=3,
        prop::sample::subsequence(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], 1..=9),
    )
        .prop_flat_map(|(rows, h, m, levels)| {
            let q = levels.len();
            (
                prop::collection::vec(prop::collection::vec(0.5f64..20.0, m + 2..m + 15), rows),
                prop::collection::vec(prop::collection::vec(0.5f64..20.0, h), rows),
                prop::collection::vec(prop::collection::vec(0.0f64..25.0, h), rows),
                prop::collection::vec(
                    prop::collection::vec(prop::collection::vec(0.0f64..25.0, h), q),
                    rows,
                ),
                Just(levels),
                Just(m),
            )
        })
        .prop_map(|(histories, actuals, points, quantiles, levels, m)| Case {
            histories,
            actuals,
            points,
            quantiles,
            levels,
            m,
        })
}

/// MASE, SQL, WAPE and WQL from a flat list of per-cell terms.
fn oracle(c: &Case) -> (f64, f64, f64, f64) {
    let mut cells = Vec::new();
    for (r, hist) in c.histories.iter().enumerate() {
        let pairs: Vec<f64> = (c.m..hist.len())
            .map(|t| (hist[t] - hist[t - c.m]).abs())
            .collect();
        let a = pairs.iter().sum::<f64>() / pairs.len() as f64;
        for t in 0..c.actuals[r].len() {
            let y = c.actuals[r][t];
            let e = (y - c.points[r][t]).abs();
            let losses: Vec<f64> = c
                .levels
                .iter()
                .enumerate()
                .map(|(i, &q)| {
                    let f = c.quantiles[r][i][t];
                    2.0 * (if y >= f {
                        q * (y - f)
                    } else {
                        (1.0 - q) * (f - y)
                    })
                })
                .collect();
            let total: f64 = losses.iter().sum();
            cells.push((e / a, total / a, e, y.abs(), total / losses.len() as f64));
        }
    }
    let n = cells.len() as f64;
    let sum = |f: fn(&(f64, f64, f64, f64, f64)) -> f64| cells.iter().map(f).sum::<f64>();
    let abs_y = sum(|c| c.3);
    (
        sum(|c| c.0) / n,
        sum(|c| c.1) / n,
        sum(|c| c.2) / abs_y,
        sum(|c| c.4) / abs_y,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn metrics_match_the_cellwise_oracle(c in case()) {
        let scales: Vec<f64> = c.histories.iter().map(|h| seasonal_error(h, c.m).unwrap().value).collect();
        let (o_mase, o_sql, o_wape, o_wql) = oracle(&c);
        prop_assert!((mase(&c.actuals, &c.points, &scales).unwrap() - o_mase).abs() <= 1e-10);
        prop_assert!((sql(&c.actuals, &c.quantiles, &scales, &c.levels).unwrap() - o_sql).abs() <= 1e-10);
        prop_assert!((wape(&c.actuals, &c.points).unwrap() - o_wape).abs() <= 1e-10);
        prop_assert!((wql(&c.actuals, &c.quantiles, &c.levels).unwrap() - o_wql).abs() <= 1e-10);
    }

    #[test]
    fn median_only_sql_is_mase(c in case()) {
        let scales: Vec<f64> = c.histories.iter().map(|h| seasonal_error(h, c.m).unwrap().value).collect();
        let medians: Vec<Vec<Vec<f64>>> = c.points.iter().map(|p| vec![p.clone()]).collect();
        let a = mase(&c.actuals, &c.points, &scales).unwrap();
        let b = sql(&c.actuals, &medians, &scales, &[0.5]).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn quantile_loss_is_zero_only_on_target(y in -100.0f64..100.0, f in -100.0f64..100.0, q in 0.01f64..0.99) {
        let rho = quantile_loss(y, f, q);
        prop_assert!(rho >= 0.0);
        prop_assert_eq!(rho == 0.0, y == f);
    }
}

/// With `H = m`, each seasonal-naive error is an out-of-sample seasonal
/// difference, so MASE is the ratio of out- to in-sample seasonal error.
#[test]
fn seasonal_naive_mase_is_a_seasonal_error_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let levels = [0.5];
    for _ in 0..50 {
        let full = seasonal_series(&mut rng, 24 * 10, 24, 10.0, 0.0);
        let (history, future) = full.split_at(24 * 9);
        let f = seasonal_naive(history, 24, 24, &levels).unwrap();
        let got = mase(
            &[future],
            &[f.point.as_ref().unwrap()],
            &[seasonal_error(history, 24).unwrap().value],
        )
        .unwrap();
        let out_of_sample: f64 = (0..24)
            .map(|h| (future[h] - history[history.len() - 24 + h]).abs())
            .sum::<f64>()
            / 24.0;
        let in_sample = seasonal_error(history, 24).unwrap().value;
        assert!((got - out_of_sample / in_sample).abs() <= 1e-12);
    }
}

#[test]
fn seasonal_naive_beats_naive_on_noisy_cycles() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let levels = [0.1, 0.5, 0.9];
    let trials = 200;
    let mut wins = 0;
    for _ in 0..trials {
        let len = rng.random_range(24 * 4..24 * 12);
        let full = seasonal_series(&mut rng, len + 24, 24, 10.0, 0.0);
        let (history, future) = full.split_at(len);
        let scale = [seasonal_error(history, 24).unwrap().value];
        let sn = seasonal_naive(history, 24, 24, &levels).unwrap();
        let nv = naive(history, 24, &levels).unwrap();
        let a = mase(&[future], &[sn.point.unwrap()], &scale).unwrap();
        let b = mase(&[future], &[nv.point.unwrap()], &scale).unwrap();
        if a < b {
            wins += 1;
        }
    }
    assert!(
        wins * 10 >= trials * 9,
        "seasonal naive won {wins}/{trials}"
    );
}

#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use tsbench_core::aggregate::{
    average_rank, average_win_rate, bootstrap_intervals, bootstrap_marginal_intervals,
    bradley_terry, build_error_matrix, pairwise_credits, pairwise_skill, pairwise_win_rate,
    skill_scores, win_credits, BootstrapConfig, BradleyTerryConfig, ClipBounds, MarginalStatistic,
    PairwiseStatistic,
};
use tsbench_core::dataset::{DataFormat, DatasetManifest};
use tsbench_core::frequency::Frequency;
use tsbench_core::metrics::{MetricKind, WindowScores};
use tsbench_core::task::{summarize, EvaluationSummary, EvaluationWindow, SummaryFlags, Task};

/// Error matrices whose entries come from a small pool so ties are common.
fn tied_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=8, 1usize..=30).prop_flat_map(|(m, r)| {
        prop::collection::vec(
            prop::collection::vec(
                prop_oneof![(1u8..=6).prop_map(|k| k as f64 * 0.5), 0.5f64..3.0],
                m,
            ),
            r,
        )
    })
}

/// Entries in [1, 4): every ratio stays inside the default clip bounds.
fn unclipped_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=8, 1usize..=30)
        .prop_flat_map(|(m, r)| prop::collection::vec(prop::collection::vec(1.0f64..4.0, m), r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn win_rate_is_affine_in_mean_rank(e in tied_matrix()) {
        let m = e[0].len() as f64;
        let w = average_win_rate(&e).unwrap();
        let ranks = average_rank(&e).unwrap();
        for (wj, rj) in w.iter().zip(&ranks) {
            prop_assert!((wj - (1.0 - (rj - 1.0) / (m - 1.0))).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(wj));
        }
    }

    #[test]
    fn win_mass_is_conserved(e in tied_matrix()) {
        let (m, r) = (e[0].len() as u64, e.len() as u64);
        prop_assert_eq!(win_credits(&e).iter().sum::<u64>(), m * (m - 1) * r);
        let pc = pairwise_credits(&e);
        let pw = pairwise_win_rate(&e).unwrap();
        for j in 0..e[0].len() {
            prop_assert_eq!(pc[j][j], r);
            for k in 0..e[0].len() {
                prop_assert_eq!(pc[j][k] + pc[k][j], 2 * r);
                prop_assert_eq!(pw[j][k] + pw[k][j], 1.0);
            }
        }
        let total: f64 = average_win_rate(&e).unwrap().iter().sum();
        prop_assert!((total - m as f64 / 2.0).abs() <= m as f64 * f64::EPSILON);
    }

    #[test]
    fn pairwise_skill_is_reciprocal_without_clipping(e in unclipped_matrix()) {
        let s = pairwise_skill(&e, ClipBounds::default()).unwrap();
        for j in 0..e[0].len() {
            prop_assert_eq!(s[j][j], 0.0);
            for k in 0..e[0].len() {
                prop_assert!(((1.0 - s[j][k]) * (1.0 - s[k][j]) - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn skill_ordering_ignores_the_baseline(e in unclipped_matrix(), beta in 0usize..8) {
        let m = e[0].len();
        let beta = beta % m;
        let a = skill_scores(&e, 0, ClipBounds::default()).unwrap();
        let b = skill_scores(&e, beta, ClipBounds::default()).unwrap();
        // each baseline change multiplies (1 - S_j) by one common factor
        let factor = (1.0 - b[0]) / (1.0 - a[0]);
        for j in 0..m {
            prop_assert!(((1.0 - b[j]) - factor * (1.0 - a[j])).abs() <= 1e-12);
            for k in 0..m {
                if (a[j] - a[k]).abs() > 1e-9 {
                    prop_assert_eq!(a[j] > a[k], b[j] > b[k]);
                }
            }
        }
        prop_assert_eq!(b[beta], 0.0);
    }

    #[test]
    fn bradley_terry_agrees_with_win_rate(e in prop::collection::vec(prop::collection::vec(0.1f64..10.0, 5), 12)) {
        let w = win_credits(&e);
        let pw = pairwise_win_rate(&e).unwrap();
        match bradley_terry(&pw, &BradleyTerryConfig::default()) {
            Ok(fit) => {
                for j in 0..5 {
                    for k in 0..5 {
                        let dt = fit.theta[j] - fit.theta[k];
                        match w[j].cmp(&w[k]) {
                            std::cmp::Ordering::Equal => prop_assert!(dt.abs() <= 1e-6),
                            std::cmp::Ordering::Greater => prop_assert!(dt > 0.0),
                            std::cmp::Ordering::Less => prop_assert!(dt < 0.0),
                        }
                    }
                }
            }
            // a model that wins or loses every comparison has no finite rating
            Err(_) => {
                let sweeps = pw.iter().enumerate().any(|(j, row)| {
                    row.iter().enumerate().all(|(k, v)| j == k || *v == 1.0)
                        || row.iter().enumerate().all(|(k, v)| j == k || *v == 0.0)
                });
                prop_assert!(sweeps);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn intervals_are_ordered_bounded_and_reproducible(e in tied_matrix(), seed in any::<u64>()) {
        let cfg = BootstrapConfig { samples: 200, alpha: 0.1, seed };
        let clip = ClipBounds::default();
        let w1 = bootstrap_intervals(&e, PairwiseStatistic::WinRate, &cfg, clip).unwrap();
        let w2 = bootstrap_intervals(&e, PairwiseStatistic::WinRate, &cfg, clip).unwrap();
        prop_assert_eq!(&w1, &w2);
        for ci in w1.iter().flatten() {
            prop_assert!(ci.lower <= ci.upper);
            prop_assert!(ci.lower >= 0.0 && ci.upper <= 1.0);
        }
        let s = bootstrap_intervals(&e, PairwiseStatistic::Skill, &cfg, clip).unwrap();
        for (j, row) in s.iter().enumerate() {
            for (k, ci) in row.iter().enumerate() {
                prop_assert!(ci.lower <= ci.upper);
                prop_assert!(ci.upper <= 1.0 - clip.lower && ci.lower >= 1.0 - clip.upper);
                if j == k {
                    prop_assert_eq!((ci.lower, ci.upper), (0.0, 0.0));
                }
            }
        }
        let marginal = bootstrap_marginal_intervals(&e, MarginalStatistic::WinRate, &cfg, clip).unwrap();
        prop_assert!(marginal.iter().all(|ci| ci.lower <= ci.upper && ci.lower >= 0.0 && ci.upper <= 1.0));
    }
}

fn task(name: &str) -> Task {
    let manifest = DatasetManifest {
        data_path: format!("{name}.csv").into(),
        format: DataFormat::Csv,
        id_column: "id".into(),
        timestamp_column: "ts".into(),
        frequency: Frequency::Hourly,
        target_columns: vec!["y".into()],
        past_dynamic_columns: vec![],
        known_dynamic_columns: vec![],
        static_columns: vec![],
    };
    Task::new(name, manifest, 24, 1)
}

fn scored(task: &Task, model: &str, v: f64, leaked: bool) -> EvaluationSummary {
    let scores = WindowScores {
        mase: v,
        sql: v,
        wql: v,
        wape: v,
    };
    summarize(
        task,
        model,
        &[EvaluationWindow {
            index: 1,
            cutoff: 200,
        }],
        vec![scores],
        Some(0.5),
        SummaryFlags {
            trained_on_this_dataset: leaked,
        },
    )
    .unwrap()
}

#[test]
fn imputation_is_idempotent_and_isolated() {
    let tasks: Vec<Task> = (0..4).map(|r| task(&format!("t{r}"))).collect();
    let mut summaries = Vec::new();
    for (r, t) in tasks.iter().enumerate() {
        summaries.push(scored(t, "seasonal_naive", 1.0 + r as f64, false));
        summaries.push(scored(t, "reference", 0.9 + r as f64, false));
        summaries.push(match r {
            0 => EvaluationSummary::failure(t, "model", "crashed", None, SummaryFlags::default()),
            2 => scored(t, "model", 0.1, true),
            _ => scored(t, "model", 0.7 + r as f64, false),
        });
    }
    let a = build_error_matrix(
        &summaries,
        MetricKind::Mase,
        "seasonal_naive",
        Some("reference"),
    )
    .unwrap();
    let b = build_error_matrix(
        &summaries,
        MetricKind::Mase,
        "seasonal_naive",
        Some("reference"),
    )
    .unwrap();
    assert_eq!(a, b);

    let j = a.model_index("model").unwrap();
    assert_eq!(a.values[0][j], 1.0);
    assert_eq!(a.values[2][j], 2.9);
    // untouched tasks keep the submitted scores
    assert_eq!(a.values[1][j], 1.7);
    assert_eq!(a.values[3][j], 3.7);

    // a failure elsewhere does not change this task's row
    let mut healthy = summaries.clone();
    healthy[2] = scored(&tasks[0], "model", 5.0, false);
    let c = build_error_matrix(
        &healthy,
        MetricKind::Mase,
        "seasonal_naive",
        Some("reference"),
    )
    .unwrap();
    assert_eq!(a.values[1..], c.values[1..]);
}

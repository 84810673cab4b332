use std::collections::BTreeMap;

use proptest::prelude::*;
use tempfile::TempDir;
use tsbench_core::baselines::{BaselineKind, BaselineSpec};
use tsbench_core::dataset::{
    load_dataset, slice_window, write_dataset, ColumnRoles, DataFormat, DatasetManifest, Series,
    StaticValue, TimeSeriesDataset,
};
use tsbench_core::frequency::Frequency;
use tsbench_core::task::{generate_windows, Task};

fn manifest(
    path: std::path::PathBuf,
    format: DataFormat,
    dims: usize,
    known: bool,
) -> DatasetManifest {
    DatasetManifest {
        data_path: path,
        format,
        id_column: "item".into(),
        timestamp_column: "date".into(),
        frequency: Frequency::Daily,
        target_columns: (0..dims).map(|d| format!("y{d}")).collect(),
        past_dynamic_columns: vec!["temp".into()],
        known_dynamic_columns: if known { vec!["promo".into()] } else { vec![] },
        static_columns: vec!["region".into()],
    }
}

/// Values with awkward decimal expansions, integers, negatives and gaps.
fn value() -> impl Strategy<Value = f64> {
    prop_oneof![
        3 => -1e6f64..1e6,
        1 => (-1000i64..1000).prop_map(|i| i as f64),
        1 => Just(f64::NAN),
        1 => prop::num::f64::NORMAL.prop_filter("finite", |v| v.is_finite()),
    ]
}

fn dataset_strategy() -> impl Strategy<Value = (TimeSeriesDataset, bool)> {
    (1usize..4, 1usize..3, 3usize..12, any::<bool>()).prop_flat_map(|(n, dims, len, known)| {
        let series = prop::collection::vec(
            (
                prop::collection::vec(prop::collection::vec(value(), len), dims),
                prop::collection::vec(value(), len),
                prop::collection::vec(0.0f64..1.0, len),
                0i64..400,
            ),
            n,
        );
        series.prop_map(move |raw| {
            let series = raw
                .into_iter()
                .enumerate()
                .map(|(i, (targets, temp, promo, start))| {
                    let first = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
                        + chrono::Duration::days(start);
                    Series {
                        item_id: format!("item-{i}"),
                        timestamps: (0..len)
                            .map(|t| {
                                (first + chrono::Duration::days(t as i64))
                                    .format("%Y-%m-%d")
                                    .to_string()
                            })
                            .collect(),
                        start_index: 0,
                        targets,
                        past_dynamic: vec![temp],
                        known_dynamic: if known { vec![promo] } else { vec![] },
                        statics: BTreeMap::from([(
                            "region".to_string(),
                            StaticValue::Text(format!("r{}", i % 2)),
                        )]),
                    }
                })
                .collect();
            let m = manifest("unused".into(), DataFormat::Csv, dims, known);
            (
                TimeSeriesDataset {
                    series,
                    frequency: Frequency::Daily,
                    roles: m.roles(),
                },
                known,
            )
        })
    })
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()))
}

fn assert_same(a: &TimeSeriesDataset, b: &TimeSeriesDataset) {
    assert_eq!(a.series.len(), b.series.len());
    for (x, y) in a.series.iter().zip(&b.series) {
        assert_eq!(x.item_id, y.item_id);
        assert_eq!(x.timestamps, y.timestamps);
        assert_eq!(x.statics, y.statics);
        for (p, q) in x
            .targets
            .iter()
            .chain(&x.past_dynamic)
            .chain(&x.known_dynamic)
            .zip(
                y.targets
                    .iter()
                    .chain(&y.past_dynamic)
                    .chain(&y.known_dynamic),
            )
        {
            assert!(same_bits(p, q), "{p:?} != {q:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_load_round_trips((ds, known) in dataset_strategy(), jsonl in any::<bool>()) {
        let dir = TempDir::new().unwrap();
        let format = if jsonl { DataFormat::Jsonl } else { DataFormat::Csv };
        let path = dir.path().join(if jsonl { "data.jsonl" } else { "data.csv" });
        write_dataset(&ds, &path, format).unwrap();
        let loaded = load_dataset(&manifest(path.clone(), format, ds.num_targets(), known)).unwrap();
        assert_same(&ds, &loaded);

        // and writing the reloaded copy reproduces the file byte for byte
        let again = dir.path().join("again");
        write_dataset(&loaded, &again, format).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
}

fn hygiene_dataset(len: usize, values: &[f64]) -> TimeSeriesDataset {
    let roles = ColumnRoles {
        id_column: "id".into(),
        timestamp_column: "ts".into(),
        target_columns: vec!["y".into()],
        past_dynamic_columns: vec!["x".into()],
        known_dynamic_columns: vec!["k".into()],
        static_columns: vec![],
    };
    let series = (0..2)
        .map(|s| Series {
            item_id: format!("s{s}"),
            timestamps: (0..len).map(|t| t.to_string()).collect(),
            start_index: 0,
            targets: vec![values.iter().map(|v| v + s as f64).collect()],
            past_dynamic: vec![values.iter().map(|v| v * 2.0).collect()],
            known_dynamic: vec![(0..len).map(|t| t as f64).collect()],
            statics: BTreeMap::new(),
        })
        .collect();
    TimeSeriesDataset {
        series,
        frequency: Frequency::Daily,
        roles,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Poisoning every value after a cutoff changes neither the input view
    /// nor any baseline forecast made from it.
    #[test]
    fn inputs_never_see_the_future(
        values in prop::collection::vec(-50.0f64..50.0, 30..80),
        h in 1usize..6,
        w in 1usize..4,
    ) {
        let len = values.len();
        let task = Task::new("t", manifest("x.csv".into(), DataFormat::Csv, 1, true), h, w).with_seasonality(3);
        let Ok(windows) = generate_windows(&task, len) else { return Ok(()) };
        let clean = hygiene_dataset(len, &values);
        for window in &windows {
            let mut poisoned_values = values.clone();
            for v in &mut poisoned_values[window.cutoff..] {
                *v = 1e9;
            }
            let poisoned = hygiene_dataset(len, &poisoned_values);
            let a = slice_window(&clean, window, &task).unwrap();
            let b = slice_window(&poisoned, window, &task).unwrap();
            for (x, y) in a.inputs().zip(b.inputs()) {
                prop_assert_eq!(x.past_target(0).len(), window.cutoff);
                prop_assert_eq!(x.past_target(0), y.past_target(0));
                prop_assert_eq!(x.past_dynamic(0), y.past_dynamic(0));
                prop_assert_eq!(x.known_future(0).len(), h);
                prop_assert!(x.past_target(0).iter().all(|v| v.abs() < 1e8));
            }
            for kind in BaselineKind::ALL {
                let spec = BaselineSpec { kind, seasonality: 3 };
                let fa = spec.forecast_window(&a, &task.quantile_levels).unwrap();
                let fb = spec.forecast_window(&b, &task.quantile_levels).unwrap();
                prop_assert_eq!(fa, fb);
            }
        }
    }
}

#[test]
fn slices_of_one_dataset_are_independent() {
    let values: Vec<f64> = (0..60).map(|t| (t as f64 * 0.7).sin() * 10.0).collect();
    let ds = hygiene_dataset(60, &values);
    let task = Task::new(
        "t",
        manifest("x.csv".into(), DataFormat::Csv, 1, true),
        5,
        3,
    );
    let windows = generate_windows(&task, 60).unwrap();
    let slices: Vec<_> = windows
        .iter()
        .map(|w| slice_window(&ds, w, &task).unwrap())
        .collect();
    for (w, s) in windows.iter().zip(&slices) {
        assert_eq!(s.input(0).past_target(0), &values[..w.cutoff]);
        assert_eq!(s.future_actuals(0, 0), &values[w.cutoff..w.cutoff + 5]);
    }
    let before: Vec<Vec<f64>> = slices
        .iter()
        .map(|s| s.input(1).past_target(0).to_vec())
        .collect();
    let again: Vec<Vec<f64>> = slices
        .iter()
        .rev()
        .map(|s| s.input(1).past_target(0).to_vec())
        .collect();
    assert_eq!(before, again.into_iter().rev().collect::<Vec<_>>());
}

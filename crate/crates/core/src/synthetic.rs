//! Deterministic synthetic benchmarks for smoke tests, demos and the
//! acceptance suite.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{Duration, Months, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::frequency::Frequency;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Rotates through hourly, hourly-with-covariate, daily multivariate and
    /// monthly trending tasks.
    Mixed,
    /// Hourly univariate tasks with a 24-step cycle only.
    Seasonal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub num_tasks: usize,
    pub seed: u64,
    /// Signal-to-noise power ratio of the seasonal component.
    pub snr: f64,
    pub profile: Profile,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_tasks: 20,
            seed: 42,
            snr: 10.0,
            profile: Profile::Mixed,
        }
    }
}

struct Shape {
    frequency: Frequency,
    period: usize,
    length: usize,
    horizon: usize,
    windows: usize,
    num_series: usize,
    dims: usize,
    trend: f64,
    known_covariate: bool,
}

fn shape_for(profile: Profile, index: usize) -> Shape {
    let hourly = Shape {
        frequency: Frequency::Hourly,
        period: 24,
        length: 24 * 14,
        horizon: 24,
        windows: 3,
        num_series: 3,
        dims: 1,
        trend: 0.0,
        known_covariate: false,
    };
    if profile == Profile::Seasonal {
        return hourly;
    }
    match index % 4 {
        0 => hourly,
        1 => Shape {
            trend: 0.01,
            known_covariate: true,
            num_series: 2,
            ..hourly
        },
        2 => Shape {
            frequency: Frequency::Daily,
            period: 7,
            length: 7 * 30,
            horizon: 14,
            windows: 2,
            num_series: 2,
            dims: 2,
            trend: 0.0,
            known_covariate: false,
        },
        _ => Shape {
            frequency: Frequency::Monthly,
            period: 12,
            length: 12 * 12,
            horizon: 12,
            windows: 2,
            num_series: 2,
            dims: 1,
            trend: 0.3,
            known_covariate: false,
        },
    }
}

fn timestamp(frequency: Frequency, start: NaiveDateTime, step: usize) -> NaiveDateTime {
    match frequency {
        Frequency::Minutes(k) => start + Duration::minutes(i64::from(k) * step as i64),
        Frequency::Hourly => start + Duration::hours(step as i64),
        Frequency::Daily => start + Duration::days(step as i64),
        Frequency::Weekly => start + Duration::weeks(step as i64),
        Frequency::Monthly => start + Months::new(step as u32),
        Frequency::Quarterly => start + Months::new(3 * step as u32),
        Frequency::Yearly => start + Months::new(12 * step as u32),
    }
}

/// A noisy sinusoid with an optional linear trend, kept positive.
pub fn seasonal_series<R: Rng>(
    rng: &mut R,
    length: usize,
    period: usize,
    snr: f64,
    trend: f64,
) -> Vec<f64> {
    let amplitude = rng.random_range(1.0..5.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    // sine power is amplitude^2 / 2
    let noise_sd = amplitude / (2.0 * snr).sqrt();
    let noise = Normal::new(0.0, noise_sd).expect("finite sd");
    let level = 10.0 + 3.0 * amplitude;
    (0..length)
        .map(|t| {
            let angle = std::f64::consts::TAU * t as f64 / period as f64 + phase;
            level + trend * amplitude * t as f64 + amplitude * angle.sin() + noise.sample(rng)
        })
        .collect()
}

/// Writes `num_tasks` CSV datasets and a benchmark YAML referencing them
/// into `dir`; returns the YAML path. Output is a pure function of `cfg`.
pub fn write_synthetic_benchmark(dir: &Path, cfg: &SyntheticConfig) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = NaiveDate::from_ymd_opt(2020, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");

    let mut yaml = String::from("name: synthetic\ntasks:\n");
    for i in 0..cfg.num_tasks {
        let shape = shape_for(cfg.profile, i);
        let file = format!("task_{i:03}.csv");
        let targets: Vec<String> = (0..shape.dims).map(|d| format!("y{d}")).collect();

        let mut csv = format!("item_id,timestamp,{}", targets.join(","));
        if shape.known_covariate {
            csv.push_str(",promo");
        }
        csv.push('\n');
        for s in 0..shape.num_series {
            let columns: Vec<Vec<f64>> = (0..shape.dims)
                .map(|_| {
                    seasonal_series(&mut rng, shape.length, shape.period, cfg.snr, shape.trend)
                })
                .collect();
            let promo: Vec<u8> = (0..shape.length)
                .map(|_| u8::from(rng.random_bool(0.1)))
                .collect();
            for t in 0..shape.length {
                let ts = timestamp(shape.frequency, start, t).format("%Y-%m-%dT%H:%M:%S");
                let _ = write!(csv, "s{s},{ts}");
                for col in &columns {
                    let _ = write!(csv, ",{}", col[t]);
                }
                if shape.known_covariate {
                    let _ = write!(csv, ",{}", promo[t]);
                }
                csv.push('\n');
            }
        }
        std::fs::write(dir.join(&file), csv)?;

        let _ = writeln!(yaml, "  - task_name: task_{i:03}");
        let _ = writeln!(yaml, "    dataset:");
        let _ = writeln!(yaml, "      data_path: {file}");
        let _ = writeln!(yaml, "      format: csv");
        let _ = writeln!(yaml, "      id_column: item_id");
        let _ = writeln!(yaml, "      timestamp_column: timestamp");
        let _ = writeln!(yaml, "      frequency: {}", shape.frequency);
        let _ = writeln!(yaml, "      target_columns: [{}]", targets.join(", "));
        if shape.known_covariate {
            let _ = writeln!(yaml, "      known_dynamic_columns: [promo]");
        }
        let _ = writeln!(yaml, "    horizon: {}", shape.horizon);
        let _ = writeln!(yaml, "    num_windows: {}", shape.windows);
        let _ = writeln!(yaml, "    seasonality: {}", shape.period);
    }
    let path = dir.join("benchmark.yaml");
    std::fs::write(&path, yaml)?;
    Ok(path)
}

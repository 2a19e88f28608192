//! Parallel vs. forced-sequential execution of the two hot paths: batch
//! gradient accumulation and full-split evaluation.
//!
//! Both paths produce bit-identical numbers by construction (fixed-size
//! chunks merged in order); this benchmark measures what the parallel path
//! buys in wall time on the current machine. On a single-core host the two
//! should be on par, with the parallel path paying a small scheduling tax.

use std::sync::Arc;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timelinear::data::WindowSet;
use timelinear::exec;
use timelinear::forecaster::{DecoderVariant, ModelConfig, TimeLinear};
use timelinear::timefeat::{build_feature_matrix, CalendarStamp, FeatureSpec};
use timelinear::train::{batch_gradients, evaluate};

fn hourly_stamps(n: usize) -> Vec<CalendarStamp> {
    let (mut year, mut month, mut day, mut hour) = (2021i32, 1u8, 1u8, 0u8);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(CalendarStamp::from_ymd_hm(year, month, day, hour, 0).unwrap());
        hour += 1;
        if hour == 24 {
            hour = 0;
            day += 1;
            let dim = match month {
                1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
                4 | 6 | 9 | 11 => 30,
                _ => 28,
            };
            if day > dim {
                day = 1;
                month += 1;
                if month > 12 {
                    month = 1;
                    year += 1;
                }
            }
        }
    }
    out
}

struct Setup {
    model: TimeLinear,
    windows: WindowSet,
    batch: Vec<usize>,
}

fn setup() -> Setup {
    let (l, t, v) = (96, 96, 7);
    let n_rows = 600;
    let spec = FeatureSpec::parse("H_D").unwrap();
    let stamps = hourly_stamps(n_rows);
    let feats = Arc::new(build_feature_matrix(&stamps, &spec).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let values: Vec<f64> = (0..n_rows * v).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let windows = WindowSet::new(Arc::new(values), feats, 0..n_rows, v, l, t).unwrap();
    let cfg = ModelConfig::new(spec, l, t, v, 0.7);
    let model = TimeLinear::new(cfg, 7).unwrap();
    let batch: Vec<usize> = (0..256.min(windows.len())).collect();
    Setup {
        model,
        windows,
        batch,
    }
}

fn bench_paths(c: &mut Criterion) {
    let s = setup();
    let mut group = c.benchmark_group("hot_paths");
    group.sample_size(10).measurement_time(Duration::from_secs(8));

    for (label, sequential) in [("parallel", false), ("sequential", true)] {
        group.bench_function(format!("batch_gradients/{label}"), |b| {
            exec::set_sequential(sequential);
            b.iter(|| {
                batch_gradients(&s.model, &s.windows, &s.batch, DecoderVariant::Full).unwrap()
            });
            exec::set_sequential(false);
        });
        group.bench_function(format!("evaluate/{label}"), |b| {
            exec::set_sequential(sequential);
            b.iter(|| evaluate(&s.model, &s.windows, DecoderVariant::Full).unwrap());
            exec::set_sequential(false);
        });
    }
    group.finish();
}

criterion_group!(benches, bench_paths);
criterion_main!(benches);

//! Single-threaded throughput of the kernel paths.
//!
//! Each op runs `bench_warmup` untimed iterations, then `bench_samples` timed
//! batches; the median batch gives ops/sec. O(n^2) ops use `trials / n`
//! iterations per batch so that large `n` stays affordable.

use std::hint::black_box;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use serde_json::json;

use rollpe::{
    classic_schedule, roll_continuous, roll_discrete, rope_apply, shift_matrix, FftRoller,
    SpectralBranch, Wavelength,
};

use crate::report::{Report, TrialRow};
use crate::{trial_rng, Result, RunConfig};

pub const ROLL_DISCRETE: &str = "roll_discrete";
pub const SHIFT_MATRIX_DENSE: &str = "shift_matrix_dense";
pub const ROLL_CONTINUOUS_DENSE: &str = "roll_continuous_dense";
pub const ROLL_CONTINUOUS_FFT: &str = "roll_continuous_fft";
pub const ROPE_APPLY: &str = "rope_apply";

/// Median ops/sec of `f` over `samples` batches of `iters` calls.
fn measure(
    samples: usize,
    warmup: usize,
    iters: usize,
    mut f: impl FnMut(usize),
) -> (f64, Vec<f64>) {
    for i in 0..warmup {
        f(i);
    }
    let mut rates: Vec<f64> = (0..samples)
        .map(|_| {
            let start = Instant::now();
            for i in 0..iters {
                f(i);
            }
            iters as f64 / start.elapsed().as_secs_f64().max(1e-12)
        })
        .collect();
    let raw = rates.clone();
    rates.sort_by(f64::total_cmp);
    (rates[rates.len() / 2], raw)
}

pub fn run_bench(cfg: &RunConfig) -> Result<Report> {
    let n = cfg.n;
    let lambda = Wavelength::new(cfg.lambda)?;
    let mut rng = trial_rng(cfg.seed, 0);
    let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let shifts: Vec<i64> = (0..64)
        .map(|_| rng.gen_range(-(n as i64)..n as i64))
        .collect();
    let reals: Vec<f64> = (0..64)
        .map(|_| rng.gen_range(-(n as f64)..n as f64))
        .collect();
    let pick = |i: usize| i % 64;

    let fast = cfg.trials.max(1);
    let slow = (cfg.trials / n).max(1);
    let (samples, warmup) = (cfg.bench_samples, cfg.bench_warmup);
    let slow_warmup = warmup.min(slow);

    let dense_shift = shift_matrix(n, shifts[0])?.to_f64();
    let qv = DVector::from_column_slice(&q);
    let roller = FftRoller::new(n)?;
    let schedule = classic_schedule(n)?;

    let mut results = vec![];
    results.push((
        ROLL_DISCRETE,
        fast,
        measure(samples, warmup, fast, |i| {
            black_box(roll_discrete(black_box(&q), shifts[pick(i)]));
        }),
    ));
    results.push((
        SHIFT_MATRIX_DENSE,
        slow,
        measure(samples, slow_warmup, slow, |_| {
            black_box(black_box(&dense_shift) * black_box(&qv));
        }),
    ));
    results.push((
        ROLL_CONTINUOUS_DENSE,
        slow,
        measure(samples, slow_warmup, slow, |i| {
            black_box(
                roll_continuous(
                    black_box(&q),
                    reals[pick(i)],
                    lambda,
                    SpectralBranch::Centered,
                )
                .ok(),
            );
        }),
    ));
    results.push((
        ROLL_CONTINUOUS_FFT,
        fast,
        measure(samples, warmup, fast, |i| {
            black_box(roller.roll(black_box(&q), reals[pick(i)], lambda).ok());
        }),
    ));
    results.push((
        ROPE_APPLY,
        fast,
        measure(samples, warmup, fast, |i| {
            black_box(rope_apply(black_box(&q), reals[pick(i)], &schedule).ok());
        }),
    ));

    let mut rows = vec![];
    let mut report_rates = std::collections::BTreeMap::new();
    for (name, iters, (median, raw)) in results {
        for (s, rate) in raw.into_iter().enumerate() {
            rows.push(
                TrialRow::new(rows.len(), n, cfg.lambda)
                    .extra("op", name)
                    .extra("sample", s)
                    .extra("iterations", iters)
                    .extra("ops_per_sec", rate),
            );
        }
        report_rates.insert(name.to_string(), median);
    }

    let mut agreement: f64 = 0.0;
    for &p in &reals {
        let dense = roll_continuous(&q, p, lambda, SpectralBranch::Centered)?;
        let fft = roller.roll(&q, p, lambda)?;
        agreement = dense
            .iter()
            .zip(&fft)
            .map(|(a, b)| (a - b).abs())
            .fold(agreement, f64::max);
    }

    let mut report = Report::from_rows(cfg, rows);
    let ratio = |a: &str, b: &str| report_rates[a] / report_rates[b];
    report.summary.notes.insert(
        "discrete_over_dense_shift".into(),
        json!(ratio(ROLL_DISCRETE, SHIFT_MATRIX_DENSE)),
    );
    report.summary.notes.insert(
        "fft_over_dense_continuous".into(),
        json!(ratio(ROLL_CONTINUOUS_FFT, ROLL_CONTINUOUS_DENSE)),
    );
    report
        .summary
        .notes
        .insert("fft_dense_max_gap".into(), json!(agreement));
    report.summary.ops_per_sec = report_rates;
    Ok(report)
}

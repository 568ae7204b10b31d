//! Invariant sweeps. Each trial draws from its own RNG stream, so results do
//! not depend on how rayon schedules the work.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use rollpe::multiplex::{equivariance_violation_witness_with_budget, WITNESS_GAP};
use rollpe::rope::RollInducedRope;
use rollpe::{
    attend, classic_schedule, mproll, relative_form_score, roll_discrete, rollpe_score,
    AttentionBatch, MultiplexBank, PeConfig, PeError, PeKind, Positions, SpectralBranch,
    Wavelength,
};

use crate::report::{Report, TrialRow};
use crate::{trial_rng, Result, RunConfig};

pub const EQUIVARIANCE_TOL: f64 = 1e-12;
pub const EQUIVALENCE_TOL: f64 = 1e-9;
pub const GRAD_TOL: f64 = 1e-5;
pub const GRAD_EPS: f64 = 1e-5;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn max_abs_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Relative-form agreement of the rolled score plus translation invariance of
/// a full rolled attention score matrix.
pub fn equivariance_report(cfg: &RunConfig) -> Result<Report> {
    let n = cfg.n;
    let d = cfg.scale_dim();
    let span = 3 * n as i64;
    let rows = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialRow> {
            let mut rng = trial_rng(cfg.seed, trial);
            let q = random_vec(&mut rng, n);
            let k = random_vec(&mut rng, n);
            let p_q = rng.gen_range(-span..=span);
            let p_k = rng.gen_range(-span..=span);
            let score = rollpe_score(&q, &k, p_q, p_k, d)?;
            let score_gap = (score - relative_form_score(&q, &k, p_k - p_q, d)?).abs();

            let positions =
                Positions::Integer((0..cfg.t).map(|_| rng.gen_range(-span..=span)).collect());
            let shift = rng.gen_range(-span..=span);
            let batch = AttentionBatch::new(
                random_matrix(&mut rng, cfg.t, n),
                random_matrix(&mut rng, cfg.t, n),
                random_matrix(&mut rng, cfg.t, n),
                positions.clone(),
            )?
            .with_scale_dim(d);
            let mut moved = batch.clone();
            moved.positions = positions.translated(shift, 0);
            let pe = PeConfig::new(PeKind::RollDiscrete);
            let attn_gap = max_abs_gap(&attend(&batch, &pe)?.scores, &attend(&moved, &pe)?.scores);

            Ok(TrialRow::new(trial, n, 1.0)
                .positions(p_q as f64, p_k as f64)
                .residual(score_gap.max(attn_gap))
                .extra("score_residual", score_gap)
                .extra("attention_residual", attn_gap)
                .extra("shift", shift))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Report::from_rows(cfg, rows).with_threshold(EQUIVARIANCE_TOL))
}

/// Continuous roll vs. roll-induced RoPE over random real positions.
pub fn rope_equivalence(cfg: &RunConfig) -> Result<Report> {
    let n = cfg.n;
    let rope = RollInducedRope::new(n, cfg.lambda)?;
    let span = 3.0 * n as f64;
    let rows = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialRow> {
            let mut rng = trial_rng(cfg.seed, trial);
            let q = random_vec(&mut rng, n);
            let k = random_vec(&mut rng, n);
            let p_q = rng.gen_range(-span..=span);
            let p_k = rng.gen_range(-span..=span);
            let r = rope.residual(&q, &k, p_q, p_k)?;
            Ok(TrialRow::new(trial, n, cfg.lambda)
                .positions(p_q, p_k)
                .residual(r))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = Report::from_rows(cfg, rows).with_threshold(EQUIVALENCE_TOL);
    report
        .summary
        .notes
        .insert("planes".into(), json!(rope.schedule().planes()));
    Ok(report)
}

/// Seeded search for a translation that changes the multiplexed score.
///
/// With `w >= 2` the command passes when a witness is found; with `w = 1` it
/// passes when the search is exhausted, since a single wave is equivariant.
pub fn multiplex_witness(cfg: &RunConfig) -> Result<Report> {
    let n = cfg.n;
    let mut rng = trial_rng(cfg.seed, 0);
    let single = MultiplexBank::new(vec![random_vec(&mut rng, n)])?;
    let p = rng.gen_range(-(3 * n as i64)..=3 * n as i64);
    let reduction_gap = mproll(&single, p)
        .iter()
        .zip(roll_discrete(&single.components()[0], p))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let outcome = equivariance_violation_witness_with_budget(n, cfg.waves, cfg.seed, cfg.trials);
    let mut rows = vec![];
    let found = match outcome {
        Ok(w) => {
            rows.push(
                TrialRow::new(0, n, 1.0)
                    .positions(w.p_q as f64, w.p_k as f64)
                    .residual(w.gap())
                    .extra("t", w.t)
                    .extra("attempts", w.attempts)
                    .extra("score_before", w.score_before)
                    .extra("score_after", w.score_after)
                    .extra("waves", cfg.waves),
            );
            true
        }
        Err(PeError::Inconclusive { attempts }) => {
            rows.push(
                TrialRow::new(0, n, 1.0)
                    .extra("attempts", attempts)
                    .extra("waves", cfg.waves),
            );
            false
        }
        Err(e) => return Err(e.into()),
    };
    let mut report = Report::from_rows(cfg, rows);
    let expected = cfg.waves >= 2;
    report.summary.threshold = Some(WITNESS_GAP);
    report.summary.passed = Some(found == expected && reduction_gap == 0.0);
    report
        .summary
        .notes
        .insert("witness_found".into(), json!(found));
    report
        .summary
        .notes
        .insert("single_wave_reduction_gap".into(), json!(reduction_gap));
    Ok(report)
}

/// Every encoding kind exercised by the sweeps for head dimension `n`.
pub fn pe_kinds(cfg: &RunConfig) -> Result<Vec<PeConfig>> {
    let n = cfg.n;
    let lambda = Wavelength::new(cfg.lambda)?;
    let mut kinds = vec![
        PeConfig::new(PeKind::None),
        PeConfig::new(PeKind::SinusoidalApe),
        PeConfig::new(PeKind::RollDiscrete),
        PeConfig::new(PeKind::RollContinuous {
            lambda,
            branch: SpectralBranch::Centered,
        }),
        PeConfig::new(PeKind::RollContinuous {
            lambda,
            branch: SpectralBranch::Raw,
        }),
        PeConfig::new(PeKind::Rope(classic_schedule(n)?)),
        PeConfig::new(PeKind::MultiplexedRoll { waves: cfg.waves }),
    ];
    if n.is_multiple_of(4) {
        kinds.extend([
            PeConfig::axial(PeKind::SinusoidalApe),
            PeConfig::axial(PeKind::RollDiscrete),
            PeConfig::axial(PeKind::RollContinuous {
                lambda,
                branch: SpectralBranch::Centered,
            }),
            PeConfig::axial(PeKind::Rope(classic_schedule(n / 2)?)),
            PeConfig::axial(PeKind::MultiplexedRoll { waves: cfg.waves }),
        ]);
    }
    Ok(kinds)
}

fn label(pe: &PeConfig) -> String {
    let mut name = pe.kind.name().to_string();
    if let PeKind::RollContinuous { branch, .. } = pe.kind {
        name.push_str(match branch {
            SpectralBranch::Centered => "_centered",
            SpectralBranch::Raw => "_raw",
        });
    }
    if pe.axial {
        name.push_str("_axial");
    }
    name
}

fn random_batch(
    rng: &mut ChaCha8Rng,
    pe: &PeConfig,
    t: usize,
    n: usize,
    positions: Positions,
) -> Result<AttentionBatch> {
    let width = pe.input_dim(n);
    Ok(AttentionBatch::new(
        random_matrix(rng, t, width),
        random_matrix(rng, t, width),
        random_matrix(rng, t, n),
        positions,
    )?)
}

/// Analytic vs. finite-difference gradients for every encoding kind.
pub fn grad_check(cfg: &RunConfig) -> Result<Report> {
    let kinds = pe_kinds(cfg)?;
    let span = 3 * cfg.n as i64;
    let jobs: Vec<(usize, usize)> = (0..kinds.len())
        .flat_map(|k| (0..cfg.trials).map(move |t| (k, t)))
        .collect();
    let rows = jobs
        .into_par_iter()
        .enumerate()
        .map(|(row, (kind_idx, trial))| -> Result<TrialRow> {
            let pe = &kinds[kind_idx];
            let mut rng = trial_rng(cfg.seed, row);
            let positions = if pe.axial {
                Positions::Axial(
                    (0..cfg.t)
                        .map(|_| {
                            [
                                rng.gen_range(-span..=span) as f64,
                                rng.gen_range(-span..=span) as f64,
                            ]
                        })
                        .collect(),
                )
            } else {
                Positions::Integer((0..cfg.t).map(|_| rng.gen_range(-span..=span)).collect())
            };
            let mut batch = random_batch(&mut rng, pe, cfg.t, cfg.n, positions)?;
            batch.scale_dim = cfg.d_override;
            let err = rollpe::grad_check(pe, &batch, GRAD_EPS)?;
            Ok(TrialRow::new(row, cfg.n, cfg.lambda)
                .residual(err)
                .extra("kind", label(pe))
                .extra("kind_trial", trial))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Report::from_rows(cfg, rows).with_threshold(GRAD_TOL))
}

/// Score matrices for every 1D kind on one shared batch, at positions
/// `0..t` and again shifted by +5.
///
/// Roll (discrete and continuous) and RoPE scores must be unchanged by the
/// shift, with the discrete roll bit-identical; the sinusoidal and
/// multiplexed gaps are reported but not checked.
pub fn attention_demo(cfg: &RunConfig) -> Result<Report> {
    const SHIFT: i64 = 5;
    let (t, n) = (cfg.t, cfg.n);
    let mut rng = trial_rng(cfg.seed, 0);
    let q = random_matrix(&mut rng, t, n);
    let k = random_matrix(&mut rng, t, n);
    let v = random_matrix(&mut rng, t, n);
    let wide_q = random_matrix(&mut rng, t, cfg.waves * n);
    let wide_k = random_matrix(&mut rng, t, cfg.waves * n);
    let base = Positions::Integer((0..t as i64).collect());
    let moved = base.translated(SHIFT, 0);

    let lambda = Wavelength::new(cfg.lambda)?;
    let kinds = [
        (PeKind::None, Some(0.0)),
        (PeKind::SinusoidalApe, None),
        (PeKind::RollDiscrete, Some(0.0)),
        (
            PeKind::RollContinuous {
                lambda,
                branch: SpectralBranch::Centered,
            },
            Some(EQUIVARIANCE_TOL),
        ),
        (PeKind::Rope(classic_schedule(n)?), Some(EQUIVARIANCE_TOL)),
        (PeKind::MultiplexedRoll { waves: cfg.waves }, None),
    ];

    let mut rows = Vec::new();
    let mut passed = true;
    let mut gaps = serde_json::Map::new();
    for (kind, tolerance) in kinds {
        let pe = PeConfig::new(kind);
        let (bq, bk) = match pe.kind {
            PeKind::MultiplexedRoll { .. } => (wide_q.clone(), wide_k.clone()),
            _ => (q.clone(), k.clone()),
        };
        let mut batch = AttentionBatch::new(bq, bk, v.clone(), base.clone())?;
        batch.scale_dim = cfg.d_override;
        let before = attend(&batch, &pe)?.scores;
        batch.positions = moved.clone();
        let after = attend(&batch, &pe)?.scores;
        let gap = max_abs_gap(&before, &after);
        if let Some(tol) = tolerance {
            passed &= gap <= tol;
        }
        gaps.insert(label(&pe), json!(gap));
        for i in 0..t {
            for j in 0..t {
                rows.push(
                    TrialRow::new(rows.len(), n, cfg.lambda)
                        .positions(i as f64, j as f64)
                        .residual((before[(i, j)] - after[(i, j)]).abs())
                        .extra("kind", label(&pe))
                        .extra("checked", tolerance.is_some())
                        .extra("score", before[(i, j)])
                        .extra("score_shifted", after[(i, j)]),
                );
            }
        }
    }
    let mut report = Report::from_rows(cfg, rows);
    report.summary.threshold = Some(EQUIVARIANCE_TOL);
    report.summary.passed = Some(passed);
    report
        .summary
        .notes
        .insert("max_gap_by_kind".into(), gaps.into());
    report.summary.notes.insert("shift".into(), json!(SHIFT));
    Ok(report)
}

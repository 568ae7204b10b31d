//! Scaled dot-product attention with pluggable positional encodings.
//!
//! Encodings act on query and key rows only. Every encoding except the
//! sinusoidal table is a linear map of the row at a fixed position, so its
//! gradient is the transpose map, which for rolls and rotations is the same
//! map at the negated position.
//!
//! Layout for [`PeKind::MultiplexedRoll`]: query and key rows hold the `W`
//! component projections side by side (`W * n` columns) and the encoded row
//! has the head dimension `n` taken from `V`.

use nalgebra::DMatrix;

use crate::error::{PeError, Result};
use crate::multiplex::{mproll, speed_shift, MultiplexBank};
use crate::roll::{dot, inv_sqrt, relative_dot, roll_discrete, wrap_shift};
use crate::rope::{rope_apply, FrequencySchedule, CLASSIC_BASE};
use crate::spectral::{roll_continuous, roll_continuous_fft, SpectralBranch, Wavelength};

/// Denominator floor for the relative error reported by [`grad_check`].
pub const GRAD_ABS_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum PeKind {
    None,
    SinusoidalApe,
    RollDiscrete,
    RollContinuous {
        lambda: Wavelength,
        branch: SpectralBranch,
    },
    Rope(FrequencySchedule),
    MultiplexedRoll {
        waves: usize,
    },
}

impl PeKind {
    pub fn name(&self) -> &'static str {
        match self {
            PeKind::None => "none",
            PeKind::SinusoidalApe => "sinusoidal_ape",
            PeKind::RollDiscrete => "roll_discrete",
            PeKind::RollContinuous { .. } => "roll_continuous",
            PeKind::Rope(_) => "rope",
            PeKind::MultiplexedRoll { .. } => "multiplexed_roll",
        }
    }

    fn needs_integer_positions(&self) -> bool {
        matches!(self, PeKind::RollDiscrete | PeKind::MultiplexedRoll { .. })
    }
}

/// Which encoding to apply, and whether the head is split per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct PeConfig {
    pub kind: PeKind,
    pub axial: bool,
}

impl PeConfig {
    pub fn new(kind: PeKind) -> Self {
        Self { kind, axial: false }
    }

    pub fn axial(kind: PeKind) -> Self {
        Self { kind, axial: true }
    }

    /// Columns expected in query/key rows for a given head dimension.
    pub fn input_dim(&self, head_dim: usize) -> usize {
        match self.kind {
            PeKind::MultiplexedRoll { waves } => waves * head_dim,
            _ => head_dim,
        }
    }

    /// Checks divisibility and schedule constraints for `head_dim`.
    pub fn validate(&self, head_dim: usize) -> Result<()> {
        if head_dim == 0 {
            return Err(PeError::DimensionTooSmall { min: 1, actual: 0 });
        }
        let sub = if self.axial {
            if !head_dim.is_multiple_of(2) {
                return Err(PeError::OddDimension(head_dim));
            }
            head_dim / 2
        } else {
            head_dim
        };
        let even_sub = || {
            if sub % 2 != 0 {
                let divisor = if self.axial { 4 } else { 2 };
                Err(PeError::Indivisible {
                    dim: head_dim,
                    divisor,
                })
            } else {
                Ok(())
            }
        };
        match &self.kind {
            PeKind::SinusoidalApe => even_sub(),
            PeKind::Rope(s) => {
                even_sub()?;
                if s.planes() != sub / 2 {
                    return Err(PeError::ScheduleMismatch {
                        planes: s.planes(),
                        needed: sub / 2,
                    });
                }
                Ok(())
            }
            PeKind::MultiplexedRoll { waves: 0 } => Err(PeError::EmptyBank),
            _ => Ok(()),
        }
    }
}

/// Token positions: scalar integer, scalar real, or an axial pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Positions {
    Integer(Vec<i64>),
    Real(Vec<f64>),
    Axial(Vec<[f64; 2]>),
}

impl Positions {
    pub fn len(&self) -> usize {
        match self {
            Positions::Integer(p) => p.len(),
            Positions::Real(p) => p.len(),
            Positions::Axial(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_axial(&self) -> bool {
        matches!(self, Positions::Axial(_))
    }

    /// Every position moved by `dx` (and `dy` on the second axis).
    pub fn translated(&self, dx: i64, dy: i64) -> Positions {
        match self {
            Positions::Integer(p) => Positions::Integer(p.iter().map(|x| x + dx).collect()),
            Positions::Real(p) => Positions::Real(p.iter().map(|x| x + dx as f64).collect()),
            Positions::Axial(p) => Positions::Axial(
                p.iter()
                    .map(|[x, y]| [x + dx as f64, y + dy as f64])
                    .collect(),
            ),
        }
    }

    fn coords(&self) -> Vec<[f64; 2]> {
        match self {
            Positions::Integer(p) => p.iter().map(|&x| [x as f64, 0.0]).collect(),
            Positions::Real(p) => p.iter().map(|&x| [x, 0.0]).collect(),
            Positions::Axial(p) => p.clone(),
        }
    }
}

/// Queries, keys and values for `t` tokens plus their positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBatch {
    pub q: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub positions: Positions,
    /// Overrides the `d` in `sqrt(d)`; defaults to the head dimension.
    pub scale_dim: Option<f64>,
}

impl AttentionBatch {
    pub fn new(
        q: DMatrix<f64>,
        k: DMatrix<f64>,
        v: DMatrix<f64>,
        positions: Positions,
    ) -> Result<Self> {
        let t = q.nrows();
        if t == 0 {
            return Err(PeError::RowMismatch("batch has no tokens".into()));
        }
        if k.nrows() != t || v.nrows() != t || positions.len() != t {
            return Err(PeError::RowMismatch(format!(
                "q has {t} rows, k {}, v {}, positions {}",
                k.nrows(),
                v.nrows(),
                positions.len()
            )));
        }
        if k.ncols() != q.ncols() {
            return Err(PeError::LengthMismatch {
                expected: q.ncols(),
                actual: k.ncols(),
            });
        }
        Ok(Self {
            q,
            k,
            v,
            positions,
            scale_dim: None,
        })
    }

    pub fn with_scale_dim(mut self, d: f64) -> Self {
        self.scale_dim = Some(d);
        self
    }

    pub fn tokens(&self) -> usize {
        self.q.nrows()
    }

    pub fn head_dim(&self) -> usize {
        self.v.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: DMatrix<f64>,
    /// Row-stochastic attention weights.
    pub scores: DMatrix<f64>,
    /// Pre-softmax logits.
    pub logits: DMatrix<f64>,
}

/// Sinusoidal table row: `(sin(p w_i), cos(p w_i))` with `w_i = 10000^(-2i/n)`.
fn ape_row(pos: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n / 2 {
        let w = CLASSIC_BASE.powf(-2.0 * i as f64 / n as f64);
        let (s, c) = (pos * w).sin_cos();
        out.push(s);
        out.push(c);
    }
    out
}

/// Absolute sinusoidal embedding table, one row per position.
pub fn sinusoidal_ape(positions: &[i64], n: usize) -> Result<DMatrix<f64>> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(PeError::OddDimension(n));
    }
    let rows: Vec<Vec<f64>> = positions.iter().map(|&p| ape_row(p as f64, n)).collect();
    Ok(DMatrix::from_fn(positions.len(), n, |i, j| rows[i][j]))
}

fn as_integer(x: f64) -> Result<i64> {
    if x.fract() == 0.0 && x.abs() < 9.0e15 {
        Ok(x as i64)
    } else {
        Err(PeError::NonIntegerPosition(x))
    }
}

fn neg_shift(p: i64, n: usize) -> i64 {
    -(wrap_shift(p, n) as i64)
}

/// One-coordinate encoding of `row`. With `transpose`, applies the adjoint of
/// the linear part instead (used for gradients).
fn encode_1d(kind: &PeKind, row: &[f64], pos: f64, transpose: bool) -> Result<Vec<f64>> {
    let signed = if transpose { -pos } else { pos };
    match kind {
        PeKind::None => Ok(row.to_vec()),
        PeKind::SinusoidalApe => {
            if transpose {
                Ok(row.to_vec())
            } else {
                Ok(row
                    .iter()
                    .zip(ape_row(pos, row.len()))
                    .map(|(a, b)| a + b)
                    .collect())
            }
        }
        PeKind::RollDiscrete => {
            let p = as_integer(pos)?;
            let p = if transpose {
                neg_shift(p, row.len())
            } else {
                p
            };
            Ok(roll_discrete(row, p))
        }
        PeKind::RollContinuous { lambda, branch } => match branch {
            SpectralBranch::Centered => roll_continuous_fft(row, signed, *lambda),
            SpectralBranch::Raw => roll_continuous(row, signed, *lambda, SpectralBranch::Raw),
        },
        PeKind::Rope(s) => rope_apply(row, signed, s),
        PeKind::MultiplexedRoll { waves } => {
            let p = as_integer(pos)?;
            if transpose {
                let n = row.len();
                let mut out = Vec::with_capacity(waves * n);
                for w in 1..=*waves {
                    out.extend(roll_discrete(row, -speed_shift(w, p, n)));
                }
                Ok(out)
            } else {
                Ok(mproll(&MultiplexBank::from_flat(row, *waves)?, p))
            }
        }
    }
}

/// Encodes one row. Forward maps `input_dim -> head_dim`; transpose maps back.
fn encode_row(
    cfg: &PeConfig,
    row: &[f64],
    pos: [f64; 2],
    head_dim: usize,
    transpose: bool,
) -> Result<Vec<f64>> {
    if !cfg.axial {
        return encode_1d(&cfg.kind, row, pos[0], transpose);
    }
    let h = head_dim / 2;
    match cfg.kind {
        PeKind::MultiplexedRoll { waves } => {
            if transpose {
                let mut out = vec![0.0; waves * head_dim];
                for (axis, &p) in pos.iter().enumerate() {
                    let g = encode_1d(&cfg.kind, &row[axis * h..(axis + 1) * h], p, true)?;
                    for (w, chunk) in g.chunks_exact(h).enumerate() {
                        let start = w * head_dim + axis * h;
                        out[start..start + h].copy_from_slice(chunk);
                    }
                }
                Ok(out)
            } else {
                let mut out = Vec::with_capacity(head_dim);
                for (axis, &p) in pos.iter().enumerate() {
                    let sub: Vec<f64> = (0..waves)
                        .flat_map(|w| {
                            let start = w * head_dim + axis * h;
                            row[start..start + h].iter().copied()
                        })
                        .collect();
                    out.extend(encode_1d(&cfg.kind, &sub, p, false)?);
                }
                Ok(out)
            }
        }
        _ => {
            let mut out = encode_1d(&cfg.kind, &row[..h], pos[0], transpose)?;
            out.extend(encode_1d(&cfg.kind, &row[h..], pos[1], transpose)?);
            Ok(out)
        }
    }
}

/// Encodes `v` at the axial position `(p_x, p_y)`: the first half of the head
/// follows `p_x`, the second half `p_y`.
pub fn axial_encode(v: &[f64], pos: (f64, f64), pe: &PeConfig) -> Result<Vec<f64>> {
    if !pe.axial {
        return Err(PeError::PositionArity("axial_encode needs an axial config"));
    }
    let head_dim = match pe.kind {
        PeKind::MultiplexedRoll { waves } if waves > 0 => {
            if !v.len().is_multiple_of(waves) {
                return Err(PeError::Indivisible {
                    dim: v.len(),
                    divisor: waves,
                });
            }
            v.len() / waves
        }
        _ => v.len(),
    };
    pe.validate(head_dim)?;
    for p in [pos.0, pos.1] {
        if !p.is_finite() {
            return Err(PeError::NonFinitePosition(p));
        }
    }
    encode_row(pe, v, [pos.0, pos.1], head_dim, false)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Validated view of a batch under a config.
struct Prepared<'a> {
    cfg: &'a PeConfig,
    head_dim: usize,
    scale: f64,
    coords: Vec<[f64; 2]>,
    values: &'a DMatrix<f64>,
}

impl<'a> Prepared<'a> {
    fn new(batch: &'a AttentionBatch, cfg: &'a PeConfig) -> Result<Self> {
        let head_dim = batch.head_dim();
        cfg.validate(head_dim)?;
        let expected = cfg.input_dim(head_dim);
        if batch.q.ncols() != expected {
            return Err(PeError::LengthMismatch {
                expected,
                actual: batch.q.ncols(),
            });
        }
        if cfg.axial != batch.positions.is_axial() {
            return Err(PeError::PositionArity(if cfg.axial {
                "axial config needs axial positions"
            } else {
                "scalar config got axial positions"
            }));
        }
        let coords = batch.positions.coords();
        for c in &coords {
            for &x in c {
                if !x.is_finite() {
                    return Err(PeError::NonFinitePosition(x));
                }
                if cfg.kind.needs_integer_positions() {
                    as_integer(x)?;
                }
            }
        }
        let scale = inv_sqrt(batch.scale_dim.unwrap_or(head_dim as f64))?;
        Ok(Self {
            cfg,
            head_dim,
            scale,
            coords,
            values: &batch.v,
        })
    }

    fn encode_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter()
            .zip(&self.coords)
            .map(|(r, &p)| encode_row(self.cfg, r, p, self.head_dim, false))
            .collect()
    }

    fn logits(&self, q: &[Vec<f64>], k: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let t = q.len();
        let mut out = DMatrix::zeros(t, t);
        if self.cfg.kind == PeKind::RollDiscrete {
            // Relative form: the summation order depends only on the offset,
            // so global translations reproduce the logits bit for bit.
            let h = if self.cfg.axial {
                self.head_dim / 2
            } else {
                self.head_dim
            };
            let axes = if self.cfg.axial { 2 } else { 1 };
            for i in 0..t {
                for j in 0..t {
                    let mut acc = 0.0;
                    for a in 0..axes {
                        let delta = as_integer(self.coords[j][a])? - as_integer(self.coords[i][a])?;
                        let span = a * h..(a + 1) * h;
                        acc += relative_dot(&q[i][span.clone()], &k[j][span], delta)?;
                    }
                    out[(i, j)] = acc * self.scale;
                }
            }
        } else {
            let qe = self.encode_all(q)?;
            let ke = self.encode_all(k)?;
            for i in 0..t {
                for j in 0..t {
                    out[(i, j)] = dot(&qe[i], &ke[j]) * self.scale;
                }
            }
        }
        Ok(out)
    }

    fn forward(&self, q: &[Vec<f64>], k: &[Vec<f64>]) -> Result<AttentionOutput> {
        let logits = self.logits(q, k)?;
        let scores = softmax_rows(&logits);
        let output = &scores * self.values;
        Ok(AttentionOutput {
            output,
            scores,
            logits,
        })
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|x| *x = (*x - max).exp());
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= sum);
    }
    out
}

/// `softmax(PE(Q) PE(K)^T / sqrt(d)) V`.
pub fn attend(batch: &AttentionBatch, pe: &PeConfig) -> Result<AttentionOutput> {
    let prep = Prepared::new(batch, pe)?;
    prep.forward(&rows(&batch.q), &rows(&batch.k))
}

/// Largest relative error between the analytic gradient of `sum(output)` with
/// respect to `Q` and central finite differences with step `eps`.
///
/// Per entry the error is `|a - f| / max(|a|, |f|, GRAD_ABS_FLOOR)`.
pub fn grad_check(pe: &PeConfig, batch: &AttentionBatch, eps: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(PeError::InvalidStep(eps));
    }
    let prep = Prepared::new(batch, pe)?;
    let q = rows(&batch.q);
    let k = rows(&batch.k);
    let t = q.len();

    let qe = prep.encode_all(&q)?;
    let ke = prep.encode_all(&k)?;
    let scores = prep.forward(&q, &k)?.scores;
    let value_sums: Vec<f64> = batch.v.row_iter().map(|r| r.sum()).collect();
    let mut analytic = Vec::with_capacity(t);
    for i in 0..t {
        let mean: f64 = (0..t).map(|j| scores[(i, j)] * value_sums[j]).sum();
        let mut g = vec![0.0; prep.head_dim];
        for j in 0..t {
            let coef = scores[(i, j)] * (value_sums[j] - mean) * prep.scale;
            for (gc, kc) in g.iter_mut().zip(&ke[j]) {
                *gc += coef * kc;
            }
        }
        debug_assert_eq!(qe[i].len(), g.len());
        analytic.push(encode_row(pe, &g, prep.coords[i], prep.head_dim, true)?);
    }

    let loss = |q: &[Vec<f64>]| -> Result<f64> { Ok(prep.forward(q, &k)?.output.sum()) };
    let mut worst = 0.0f64;
    let mut probe = q.clone();
    for i in 0..t {
        for c in 0..q[i].len() {
            let base = q[i][c];
            probe[i][c] = base + eps;
            let plus = loss(&probe)?;
            probe[i][c] = base - eps;
            let minus = loss(&probe)?;
            probe[i][c] = base;
            let fd = (plus - minus) / (2.0 * eps);
            let a = analytic[i][c];
            if !fd.is_finite() || !a.is_finite() {
                return Err(PeError::NonFinite);
            }
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_ABS_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rope::classic_schedule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn batch(seed: u64, t: usize, n: usize, in_dim: usize, positions: Positions) -> AttentionBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_matrix(&mut rng, t, in_dim);
        let k = random_matrix(&mut rng, t, in_dim);
        let v = random_matrix(&mut rng, t, n);
        AttentionBatch::new(q, k, v, positions).unwrap()
    }

    fn max_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    fn kinds(n: usize) -> Vec<PeKind> {
        vec![
            PeKind::None,
            PeKind::SinusoidalApe,
            PeKind::RollDiscrete,
            PeKind::RollContinuous {
                lambda: Wavelength::new(1.5).unwrap(),
                branch: SpectralBranch::Centered,
            },
            PeKind::RollContinuous {
                lambda: Wavelength::UNIT,
                branch: SpectralBranch::Raw,
            },
            PeKind::Rope(classic_schedule(n).unwrap()),
            PeKind::MultiplexedRoll { waves: 2 },
        ]
    }

    #[test]
    fn single_token_scores_one() {
        for kind in kinds(4) {
            let cfg = PeConfig::new(kind);
            let b = batch(1, 1, 4, cfg.input_dim(4), Positions::Integer(vec![3]));
            let out = attend(&b, &cfg).unwrap();
            assert_eq!(out.scores[(0, 0)], 1.0);
        }
    }

    #[test]
    fn shared_roll_matches_plain_attention() {
        let b = batch(2, 5, 6, 6, Positions::Integer(vec![4; 5]));
        let plain = attend(&b, &PeConfig::new(PeKind::None)).unwrap();
        let rolled = attend(&b, &PeConfig::new(PeKind::RollDiscrete)).unwrap();
        assert!(max_gap(&plain.output, &rolled.output) <= 1e-12);
        assert!(max_gap(&plain.scores, &rolled.scores) <= 1e-12);
    }

    #[test]
    fn roll_discrete_translation_is_bit_exact() {
        let pos = Positions::Integer(vec![0, 1, 2, 5, 9, 3]);
        let b = batch(3, 6, 8, 8, pos.clone());
        let mut shifted = b.clone();
        shifted.positions = pos.translated(3, 0);
        let cfg = PeConfig::new(PeKind::RollDiscrete);
        let a = attend(&b, &cfg).unwrap();
        let s = attend(&shifted, &cfg).unwrap();
        assert_eq!(a.scores, s.scores);
    }

    #[test]
    fn rows_are_stochastic_and_shift_invariant() {
        let b = batch(4, 7, 8, 8, Positions::Integer((0..7).collect()));
        let out = attend(&b, &PeConfig::new(PeKind::RollDiscrete)).unwrap();
        for r in out.scores.row_iter() {
            assert!((r.sum() - 1.0).abs() <= 1e-10);
            assert!(r.iter().all(|&x| x >= 0.0));
        }
        let shifted = out.logits.map(|x| x + 42.0);
        assert!(max_gap(&softmax_rows(&shifted), &out.scores) <= 1e-12);
    }

    #[test]
    fn scale_override() {
        let b = batch(5, 3, 4, 4, Positions::Integer(vec![0, 1, 2]));
        let base = attend(&b, &PeConfig::new(PeKind::None)).unwrap();
        let over = attend(&b.clone().with_scale_dim(1.0), &PeConfig::new(PeKind::None)).unwrap();
        assert!(max_gap(&(base.logits * 2.0), &over.logits) <= 1e-12);
        assert!(attend(&b.with_scale_dim(0.0), &PeConfig::new(PeKind::None)).is_err());
    }

    #[test]
    fn ape_table() {
        let t = sinusoidal_ape(&[0, 5, 6], 6).unwrap();
        assert_eq!(
            t.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]
        );
        assert_eq!(t[(1, 0)], 5f64.sin());
        assert_eq!(t[(1, 1)], 5f64.cos());
        assert!((t.row(1) - t.row(2)).norm() > 0.0);
        assert_eq!(sinusoidal_ape(&[0], 3), Err(PeError::OddDimension(3)));
    }

    #[test]
    fn axial_examples() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        for kind in [
            PeKind::RollDiscrete,
            PeKind::Rope(FrequencySchedule::custom(vec![0.7]).unwrap()),
        ] {
            let cfg = PeConfig::axial(kind);
            if cfg.validate(6).is_ok() {
                assert_eq!(axial_encode(&v, (0.0, 0.0), &cfg).unwrap(), v.to_vec());
            }
        }
        let cfg = PeConfig::axial(PeKind::RollDiscrete);
        let out = axial_encode(&v, (1.0, -1.0), &cfg).unwrap();
        let mut expected = roll_discrete(&v[..3], 1);
        expected.extend(roll_discrete(&v[3..], -1));
        assert_eq!(out, expected);

        let rope = PeConfig::axial(PeKind::Rope(FrequencySchedule::custom(vec![0.7]).unwrap()));
        let v4 = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(axial_encode(&v4, (0.0, 0.0), &rope).unwrap(), v4.to_vec());
        assert!(axial_encode(&v, (0.0, 0.0), &rope).is_err());
        assert!(axial_encode(&[1.0, 2.0, 3.0], (0.0, 0.0), &cfg).is_err());
        assert!(axial_encode(&v, (0.0, 0.0), &PeConfig::new(PeKind::RollDiscrete)).is_err());
    }

    #[test]
    fn axial_translation_invariance() {
        let coords: Vec<[f64; 2]> = (0..6).map(|i| [(i % 3) as f64, (i / 3) as f64]).collect();
        let pos = Positions::Axial(coords);
        for kind in [
            PeKind::RollDiscrete,
            PeKind::RollContinuous {
                lambda: Wavelength::UNIT,
                branch: SpectralBranch::Centered,
            },
            PeKind::Rope(classic_schedule(4).unwrap()),
        ] {
            let cfg = PeConfig::axial(kind);
            let b = batch(6, 6, 8, 8, pos.clone());
            let mut shifted = b.clone();
            shifted.positions = pos.translated(4, -7);
            let gap = max_gap(
                &attend(&b, &cfg).unwrap().scores,
                &attend(&shifted, &cfg).unwrap().scores,
            );
            assert!(gap <= 1e-12, "{} gap={gap}", cfg.kind.name());
        }
    }

    #[test]
    fn multiplex_layout_and_violation() {
        let cfg = PeConfig::new(PeKind::MultiplexedRoll { waves: 2 });
        let pos = Positions::Integer(vec![0, 1, 2, 3, 4]);
        let b = batch(7, 5, 8, 16, pos.clone());
        let mut shifted = b.clone();
        shifted.positions = pos.translated(3, 0);
        let gap = max_gap(
            &attend(&b, &cfg).unwrap().scores,
            &attend(&shifted, &cfg).unwrap().scores,
        );
        assert!(gap > 1e-6);
        let narrow = batch(7, 5, 8, 8, pos);
        assert!(matches!(
            attend(&narrow, &cfg),
            Err(PeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn config_errors() {
        let b = batch(8, 3, 6, 6, Positions::Real(vec![0.5, 1.0, 2.0]));
        assert!(matches!(
            attend(&b, &PeConfig::new(PeKind::RollDiscrete)),
            Err(PeError::NonIntegerPosition(_))
        ));
        assert!(matches!(
            attend(&b, &PeConfig::axial(PeKind::None)),
            Err(PeError::PositionArity(_))
        ));
        assert!(matches!(
            attend(&b, &PeConfig::axial(PeKind::SinusoidalApe)),
            Err(PeError::PositionArity(_)) | Err(PeError::Indivisible { .. })
        ));
        assert!(attend(
            &b,
            &PeConfig::new(PeKind::Rope(classic_schedule(4).unwrap()))
        )
        .is_err());
        assert!(PeConfig::axial(PeKind::Rope(classic_schedule(2).unwrap()))
            .validate(6)
            .is_err());
        assert!(PeConfig::new(PeKind::MultiplexedRoll { waves: 0 })
            .validate(4)
            .is_err());
        let q = DMatrix::zeros(2, 4);
        assert!(AttentionBatch::new(
            q.clone(),
            q.clone(),
            DMatrix::zeros(3, 4),
            Positions::Integer(vec![0, 1])
        )
        .is_err());
        assert!(
            AttentionBatch::new(q.clone(), q.clone(), q.clone(), Positions::Integer(vec![0]))
                .is_err()
        );
        assert!(grad_check(
            &PeConfig::new(PeKind::None),
            &batch(9, 2, 4, 4, Positions::Integer(vec![0, 1])),
            1.0
        )
        .is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for kind in kinds(4) {
            for axial in [false, true] {
                let mut cfg = PeConfig::new(kind.clone());
                cfg.axial = axial;
                if axial {
                    if let PeKind::Rope(_) = kind {
                        cfg.kind = PeKind::Rope(classic_schedule(2).unwrap());
                    }
                }
                if cfg.validate(4).is_err() {
                    continue;
                }
                let pos = if axial {
                    Positions::Axial(vec![[0.0, 1.0], [2.0, -1.0], [3.0, 3.0]])
                } else {
                    Positions::Integer(vec![0, 2, 5])
                };
                let b = batch(10, 3, 4, cfg.input_dim(4), pos);
                let err = grad_check(&cfg, &b, 1e-5).unwrap();
                assert!(err < 1e-5, "{} axial={axial} err={err}", cfg.kind.name());
            }
        }
    }
}

//! Rotary embeddings and the roll-induced frequency schedule.
//!
//! Realifying the Fourier basis of the centered shift generator turns the
//! continuous roll into a block rotation: every conjugate pair `(k, -k)`
//! becomes a 2D plane spinning at `omega_k = 2 pi k / (lambda n)`, the DC
//! coordinate is fixed, and for even `n` the Nyquist coordinate is scaled by
//! `cos(pi p / lambda)`. [`RollInducedRope`] packages that change of basis.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{PeError, Result};
use crate::roll::{check_same_len, dot};
use crate::spectral::{dft_matrix, roll_continuous, SpectralBranch, Wavelength};

/// Base of the classic RoPE frequency ladder.
pub const CLASSIC_BASE: f64 = 10_000.0;

/// Where a frequency schedule came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSource {
    /// Eigen-frequencies of the continuous roll on `n` coordinates.
    RollInduced {
        lambda: f64,
        n: usize,
    },
    /// `10000^(-2k/n)`.
    Classic {
        n: usize,
    },
    Custom,
}

/// Per-plane rotation frequencies of a RoPE instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySchedule {
    omegas: Vec<f64>,
    source: ScheduleSource,
}

impl FrequencySchedule {
    pub fn custom(omegas: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = omegas.iter().find(|w| !w.is_finite()) {
            return Err(PeError::NonFiniteFrequency(bad));
        }
        Ok(Self {
            omegas,
            source: ScheduleSource::Custom,
        })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn source(&self) -> ScheduleSource {
        self.source
    }

    /// Number of rotation planes.
    pub fn planes(&self) -> usize {
        self.omegas.len()
    }

    /// Vector length the schedule rotates (`2 * planes`).
    pub fn dim(&self) -> usize {
        2 * self.omegas.len()
    }
}

/// Rotates each pair `(v[2k], v[2k + 1])` by `p * omega_k`.
pub fn rope_apply(v: &[f64], p: f64, sched: &FrequencySchedule) -> Result<Vec<f64>> {
    if !v.len().is_multiple_of(2) {
        return Err(PeError::OddDimension(v.len()));
    }
    if v.len() / 2 != sched.planes() {
        return Err(PeError::ScheduleMismatch {
            planes: sched.planes(),
            needed: v.len() / 2,
        });
    }
    if !p.is_finite() {
        return Err(PeError::NonFinitePosition(p));
    }
    let mut out = Vec::with_capacity(v.len());
    for (pair, &w) in v.chunks_exact(2).zip(&sched.omegas) {
        let (s, c) = (p * w).sin_cos();
        out.push(pair[0] * c - pair[1] * s);
        out.push(pair[0] * s + pair[1] * c);
    }
    Ok(out)
}

/// A schedule together with the vector length it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct RopeState {
    schedule: FrequencySchedule,
    dim: usize,
}

impl RopeState {
    pub fn new(schedule: FrequencySchedule) -> Self {
        let dim = schedule.dim();
        Self { schedule, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn schedule(&self) -> &FrequencySchedule {
        &self.schedule
    }

    pub fn apply(&self, v: &[f64], p: f64) -> Result<Vec<f64>> {
        rope_apply(v, p, &self.schedule)
    }
}

/// Number of rotation planes in the realified spectrum of an `n`-cycle.
pub fn roll_planes(n: usize) -> usize {
    n.saturating_sub(1) / 2
}

/// Frequencies `2 pi k / (lambda n)` for `k = 1..=(n - 1) / 2`.
///
/// The DC coordinate (and the Nyquist coordinate for even `n`) carry no
/// plane; see [`RollInducedRope`] for how they evolve.
pub fn roll_induced_schedule(n: usize, lambda: f64) -> Result<FrequencySchedule> {
    if n == 0 {
        return Err(PeError::DimensionTooSmall { min: 1, actual: 0 });
    }
    let lambda = Wavelength::new(lambda)?.get();
    let omegas = (1..=roll_planes(n))
        .map(|k| 2.0 * PI * k as f64 / (lambda * n as f64))
        .collect();
    Ok(FrequencySchedule {
        omegas,
        source: ScheduleSource::RollInduced { lambda, n },
    })
}

/// Classic ladder `10000^(-2k/n)`, `k = 0..n/2`.
pub fn classic_schedule(n: usize) -> Result<FrequencySchedule> {
    if n == 0 {
        return Err(PeError::DimensionTooSmall { min: 2, actual: 0 });
    }
    if !n.is_multiple_of(2) {
        return Err(PeError::OddDimension(n));
    }
    let omegas = (0..n / 2)
        .map(|k| CLASSIC_BASE.powf(-2.0 * k as f64 / n as f64))
        .collect();
    Ok(FrequencySchedule {
        omegas,
        source: ScheduleSource::Classic { n },
    })
}

/// Largest gap between the roll-induced frequencies at `lambda = pi / ln 10000`
/// and the classic ladder, over `k = 0..n/2`.
///
/// The two forms differ by an extra exponentiation, so this gap is large;
/// it quantifies how far apart they are rather than certifying a match.
pub fn lambda_alignment_gap(n: usize) -> Result<f64> {
    let classic = classic_schedule(n)?;
    let lambda = PI / CLASSIC_BASE.ln();
    Ok(classic
        .omegas()
        .iter()
        .enumerate()
        .map(|(k, w)| (2.0 * PI * k as f64 / (lambda * n as f64) - w).abs())
        .fold(0.0, f64::max))
}

/// Orthogonal change of basis from coordinates to the realified DFT spectrum.
///
/// Output layout: `[u_1, v_1, ..., u_m, v_m, dc, (nyquist)]` where
/// `u_k = sqrt(2) Re(F q)_k` and `v_k = sqrt(2) Im(F q)_k`.
#[derive(Debug, Clone)]
pub struct RealifiedBasis {
    n: usize,
    planes: usize,
    rows: DMatrix<f64>,
}

impl RealifiedBasis {
    pub fn new(n: usize) -> Result<Self> {
        let f = dft_matrix(n)?;
        let planes = roll_planes(n);
        let mut rows = DMatrix::zeros(n, n);
        let s2 = 2f64.sqrt();
        for k in 1..=planes {
            for j in 0..n {
                rows[(2 * (k - 1), j)] = s2 * f[(k, j)].re;
                rows[(2 * (k - 1) + 1, j)] = s2 * f[(k, j)].im;
            }
        }
        for j in 0..n {
            rows[(2 * planes, j)] = f[(0, j)].re;
        }
        if n.is_multiple_of(2) {
            for j in 0..n {
                rows[(n - 1, j)] = f[(n / 2, j)].re;
            }
        }
        Ok(Self { n, planes, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn has_nyquist(&self) -> bool {
        self.n.is_multiple_of(2)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn encode(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check(q)?;
        Ok((&self.rows * DVector::from_column_slice(q))
            .as_slice()
            .to_vec())
    }

    pub fn decode(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check(c)?;
        Ok((self.rows.tr_mul(&DVector::from_column_slice(c)))
            .as_slice()
            .to_vec())
    }

    /// `||B B^T - I||_F`.
    pub fn orthogonality_residual(&self) -> f64 {
        (&self.rows * self.rows.transpose() - DMatrix::identity(self.n, self.n)).norm()
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.n {
            Ok(())
        } else {
            Err(PeError::LengthMismatch {
                expected: self.n,
                actual: v.len(),
            })
        }
    }
}

/// The continuous roll expressed as RoPE in the realified spectral basis.
#[derive(Debug, Clone)]
pub struct RollInducedRope {
    basis: RealifiedBasis,
    schedule: FrequencySchedule,
    lambda: Wavelength,
}

impl RollInducedRope {
    pub fn new(n: usize, lambda: f64) -> Result<Self> {
        Ok(Self {
            basis: RealifiedBasis::new(n)?,
            schedule: roll_induced_schedule(n, lambda)?,
            lambda: Wavelength::new(lambda)?,
        })
    }

    pub fn basis(&self) -> &RealifiedBasis {
        &self.basis
    }

    pub fn schedule(&self) -> &FrequencySchedule {
        &self.schedule
    }

    /// Spectral coordinates of `q` positioned at `p`.
    pub fn encode(&self, q: &[f64], p: f64) -> Result<Vec<f64>> {
        let c = self.basis.encode(q)?;
        let planes = 2 * self.basis.planes;
        let mut out = rope_apply(&c[..planes], p, &self.schedule)?;
        out.push(c[planes]);
        if self.basis.has_nyquist() {
            let s = p / self.lambda.get();
            out.push(c[planes + 1] * (PI * s.rem_euclid(2.0)).cos());
        }
        Ok(out)
    }

    /// `|roll score - rope score|` for one query/key pair.
    pub fn residual(&self, q: &[f64], k: &[f64], p_q: f64, p_k: f64) -> Result<f64> {
        check_same_len(q, k)?;
        let br = SpectralBranch::Centered;
        let rolled = dot(
            &roll_continuous(q, p_q, self.lambda, br)?,
            &roll_continuous(k, p_k, self.lambda, br)?,
        );
        let rotated = dot(&self.encode(q, p_q)?, &self.encode(k, p_k)?);
        Ok((rolled - rotated).abs())
    }
}

/// Gap between the continuous-roll score and the roll-induced RoPE score.
pub fn equivalence_residual(q: &[f64], k: &[f64], p_q: f64, p_k: f64, lambda: f64) -> Result<f64> {
    check_same_len(q, k)?;
    RollInducedRope::new(q.len(), lambda)?.residual(q, k, p_q, p_k)
}

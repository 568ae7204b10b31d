//! Continuous roll through the Fourier diagonalization of the shift.
//!
//! The one-step shift is circulant, so with the unitary DFT `F`
//! (`F[j, k] = exp(-2 pi i j k / n) / sqrt(n)`) it factors as
//! `S = F^H diag(exp(i theta_k)) F` and its logarithm is
//! `A = F^H diag(i theta_k) F`. The continuous roll by `p` at wavelength
//! `lambda` is `exp((p / lambda) A)`.
//!
//! Two choices of `theta_k` are provided:
//!
//! * [`SpectralBranch::Raw`]: `theta_k = 2 pi k / n` for `k = 0..n`.
//! * [`SpectralBranch::Centered`]: the same angles wrapped into `(-pi, pi]`.
//!   Conjugate pairs stay conjugate, so the operator is real. For even `n`
//!   the Nyquist coefficient is evolved with `cos(pi s)`, which agrees with
//!   `exp(i pi s)` at integer `s`.
//!
//! Both branches coincide at integer `p / lambda`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{PeError, Result};
use crate::roll::shift_matrix;

/// Largest imaginary magnitude tolerated before a real-valued result is returned.
pub const IMAG_TOLERANCE: f64 = 1e-10;

/// Choice of eigenvalue logarithms for the shift generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SpectralBranch {
    /// `2 pi k / n`, `k = 0..n`.
    Raw,
    /// Angles wrapped into `(-pi, pi]`.
    #[default]
    Centered,
}

impl SpectralBranch {
    /// Integer frequency used for Fourier index `k` of an `n`-point signal.
    pub fn frequency_index(self, k: usize, n: usize) -> i64 {
        match self {
            SpectralBranch::Raw => k as i64,
            SpectralBranch::Centered => {
                if 2 * k <= n {
                    k as i64
                } else {
                    k as i64 - n as i64
                }
            }
        }
    }

    /// Generator eigenvalue angle `theta_k` (the eigenvalue is `i theta_k`).
    pub fn angle(self, k: usize, n: usize) -> f64 {
        2.0 * PI * self.frequency_index(k, n) as f64 / n as f64
    }

    fn is_nyquist(self, k: usize, n: usize) -> bool {
        self == SpectralBranch::Centered && n.is_multiple_of(2) && 2 * k == n
    }

    /// Multiplier applied to Fourier coefficient `k` for a shift of `s` steps.
    fn phase(self, k: usize, n: usize, s: f64) -> Complex64 {
        if self.is_nyquist(k, n) {
            return Complex64::new((PI * s.rem_euclid(2.0)).cos(), 0.0);
        }
        exp_i_steps(self.frequency_index(k, n), n, s)
    }
}

/// `exp(2 pi i m s / n)` with the phase reduced modulo one period first.
fn exp_i_steps(m: i64, n: usize, s: f64) -> Complex64 {
    let nf = n as f64;
    let x = (m as f64 * s).rem_euclid(nf);
    Complex64::from_polar(1.0, 2.0 * PI * x / nf)
}

/// Positive, finite period stretch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wavelength(f64);

impl Wavelength {
    pub const UNIT: Wavelength = Wavelength(1.0);

    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self(lambda))
        } else {
            Err(PeError::InvalidWavelength(lambda))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Wavelength {
    fn default() -> Self {
        Self::UNIT
    }
}

/// Unitary DFT matrix, `F[j, k] = exp(-2 pi i j k / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> Result<DMatrix<Complex64>> {
    if n == 0 {
        return Err(PeError::DimensionTooSmall { min: 1, actual: 0 });
    }
    let norm = 1.0 / (n as f64).sqrt();
    Ok(DMatrix::from_fn(n, n, |j, k| {
        let jk = ((j * k) % n) as i64;
        exp_i_steps(-jk, n, 1.0) * norm
    }))
}

/// The logarithm of the one-step shift in a fixed branch.
#[derive(Debug, Clone)]
pub struct ShiftGenerator {
    n: usize,
    branch: SpectralBranch,
    matrix: DMatrix<Complex64>,
}

/// `A = F^H diag(i theta_k) F`.
pub fn log_shift_generator(n: usize, branch: SpectralBranch) -> Result<ShiftGenerator> {
    let f = dft_matrix(n)?;
    let diag = DVector::from_fn(n, |k, _| Complex64::new(0.0, branch.angle(k, n)));
    let matrix = f.adjoint() * DMatrix::from_diagonal(&diag) * &f;
    Ok(ShiftGenerator { n, branch, matrix })
}

impl ShiftGenerator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn branch(&self) -> SpectralBranch {
        self.branch
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// `exp(s A)` through the diagonalization.
    pub fn exp_scaled(&self, s: f64) -> DMatrix<Complex64> {
        let n = self.n;
        let f = dft_matrix(n).expect("n >= 1 by construction");
        let diag = DVector::from_fn(n, |k, _| {
            exp_i_steps(self.branch.frequency_index(k, n), n, s)
        });
        f.adjoint() * DMatrix::from_diagonal(&diag) * f
    }

    /// Largest imaginary magnitude among the entries.
    pub fn max_imag(&self) -> f64 {
        self.matrix.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Real part of the generator.
    pub fn real_part(&self) -> DMatrix<f64> {
        self.matrix.map(|z| z.re)
    }
}

/// Frobenius residuals of the generator invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorResiduals {
    /// `||A + A^H||_F`
    pub skew: f64,
    /// `||exp(A) - S||_F`
    pub exp_vs_shift: f64,
    /// Distance from the circulant matrix generated by the first row.
    pub circulant: f64,
}

pub fn generator_residuals(g: &ShiftGenerator) -> GeneratorResiduals {
    let n = g.n;
    let a = &g.matrix;
    let skew = (a + a.adjoint()).norm();

    let shift = shift_matrix(n, 1)
        .expect("n >= 1 by construction")
        .to_f64()
        .map(|x| Complex64::new(x, 0.0));
    let exp_vs_shift = (g.exp_scaled(1.0) - shift).norm();

    let mut circ = 0.0;
    for j in 0..n {
        for l in 0..n {
            circ += (a[(j, l)] - a[(0, (l + n - j) % n)]).norm_sqr();
        }
    }
    GeneratorResiduals {
        skew,
        exp_vs_shift,
        circulant: circ.sqrt(),
    }
}

fn validate(q: &[f64], p: f64, lambda: Wavelength) -> Result<f64> {
    if q.is_empty() {
        return Err(PeError::DimensionTooSmall { min: 1, actual: 0 });
    }
    if !p.is_finite() {
        return Err(PeError::NonFinitePosition(p));
    }
    let s = p / lambda.get();
    if !s.is_finite() {
        return Err(PeError::NonFinitePosition(s));
    }
    Ok(s)
}

fn take_real(out: impl Iterator<Item = Complex64>, q: &[f64], check: bool) -> Result<Vec<f64>> {
    let mut leak = 0.0f64;
    let real: Vec<f64> = out
        .map(|z| {
            leak = leak.max(z.im.abs());
            z.re
        })
        .collect();
    let scale = q.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tolerance = IMAG_TOLERANCE * scale;
    if check && leak > tolerance {
        return Err(PeError::ImaginaryLeak {
            residue: leak,
            tolerance,
        });
    }
    Ok(real)
}

/// Continuous roll `exp((p / lambda) A) q` through dense DFT matrices.
///
/// Returns the real part. For the centered branch the discarded imaginary
/// part is checked against [`IMAG_TOLERANCE`] (scaled by `max(1, |q|_inf)`).
pub fn roll_continuous(
    q: &[f64],
    p: f64,
    lambda: Wavelength,
    branch: SpectralBranch,
) -> Result<Vec<f64>> {
    let s = validate(q, p, lambda)?;
    let n = q.len();
    let f = dft_matrix(n)?;
    let x = DVector::from_iterator(n, q.iter().map(|&v| Complex64::new(v, 0.0)));
    let mut spec = &f * x;
    for (k, c) in spec.iter_mut().enumerate() {
        *c *= branch.phase(k, n, s);
    }
    let out = f.adjoint() * spec;
    take_real(out.iter().copied(), q, branch == SpectralBranch::Centered)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Centered-branch continuous roll with cached FFT plans for one length.
#[derive(Clone)]
pub struct FftRoller {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftRoller {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftRoller").field("n", &self.n).finish()
    }
}

impl FftRoller {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(PeError::DimensionTooSmall { min: 1, actual: 0 });
        }
        let (forward, inverse) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(n), p.plan_fft_inverse(n))
        });
        Ok(Self {
            n,
            forward,
            inverse,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn roll(&self, q: &[f64], p: f64, lambda: Wavelength) -> Result<Vec<f64>> {
        let s = validate(q, p, lambda)?;
        if q.len() != self.n {
            return Err(PeError::LengthMismatch {
                expected: self.n,
                actual: q.len(),
            });
        }
        let n = self.n;
        let mut buf: Vec<Complex64> = q.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            *c *= SpectralBranch::Centered.phase(k, n, s);
        }
        self.inverse.process(&mut buf);
        let norm = 1.0 / n as f64;
        take_real(buf.into_iter().map(|z| z * norm), q, true)
    }
}

/// Centered-branch continuous roll in `O(n log n)`.
pub fn roll_continuous_fft(q: &[f64], p: f64, lambda: Wavelength) -> Result<Vec<f64>> {
    validate(q, p, lambda)?;
    FftRoller::new(q.len())?.roll(q, p, lambda)
}

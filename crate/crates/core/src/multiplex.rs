//! Multiplexed roll: a superposition of `W` components, component `w`
//! (1-based) rolled at speed `w * p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PeError, Result};
use crate::roll::{check_same_len, dot, inv_sqrt, roll_discrete};

/// Search budget used by [`equivariance_violation_witness`].
pub const WITNESS_BUDGET: usize = 10_000;

/// Gap a witness must exceed.
pub const WITNESS_GAP: f64 = 1e-3;

/// `W` precomputed component vectors of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplexBank {
    components: Vec<Vec<f64>>,
}

impl MultiplexBank {
    pub fn new(components: Vec<Vec<f64>>) -> Result<Self> {
        let first = components.first().ok_or(PeError::EmptyBank)?;
        let n = first.len();
        if n == 0 {
            return Err(PeError::DimensionTooSmall { min: 1, actual: 0 });
        }
        for c in &components[1..] {
            if c.len() != n {
                return Err(PeError::LengthMismatch {
                    expected: n,
                    actual: c.len(),
                });
            }
        }
        Ok(Self { components })
    }

    /// Splits a flat row `[c_1 | c_2 | ... | c_W]` into `waves` components.
    pub fn from_flat(data: &[f64], waves: usize) -> Result<Self> {
        if waves == 0 {
            return Err(PeError::EmptyBank);
        }
        if !data.len().is_multiple_of(waves) {
            return Err(PeError::Indivisible {
                dim: data.len(),
                divisor: waves,
            });
        }
        let n = data.len() / waves;
        Self::new(data.chunks(n.max(1)).map(<[f64]>::to_vec).collect())
    }

    pub fn waves(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].len()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Componentwise sum of two banks with the same shape.
    pub fn add(&self, other: &MultiplexBank) -> Result<MultiplexBank> {
        if self.waves() != other.waves() {
            return Err(PeError::LengthMismatch {
                expected: self.waves(),
                actual: other.waves(),
            });
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| {
                check_same_len(a, b)?;
                Ok(a.iter().zip(b).map(|(x, y)| x + y).collect())
            })
            .collect::<Result<_>>()?;
        Ok(MultiplexBank { components })
    }
}

/// Shift for speed `w` at position `p`, reduced mod `n` without overflow.
pub(crate) fn speed_shift(w: usize, p: i64, n: usize) -> i64 {
    ((w as i128 * p as i128).rem_euclid(n as i128)) as i64
}

/// `sum_w Roll_{w p}(c_w)`.
pub fn mproll(bank: &MultiplexBank, p: i64) -> Vec<f64> {
    let n = bank.dim();
    let mut out = vec![0.0; n];
    for (i, c) in bank.components.iter().enumerate() {
        for (o, x) in out
            .iter_mut()
            .zip(roll_discrete(c, speed_shift(i + 1, p, n)))
        {
            *o += x;
        }
    }
    out
}

pub fn mproll_score(
    bank_q: &MultiplexBank,
    bank_k: &MultiplexBank,
    p_q: i64,
    p_k: i64,
    d: f64,
) -> Result<f64> {
    if bank_q.dim() != bank_k.dim() {
        return Err(PeError::LengthMismatch {
            expected: bank_q.dim(),
            actual: bank_k.dim(),
        });
    }
    let scale = inv_sqrt(d)?;
    Ok(dot(&mproll(bank_q, p_q), &mproll(bank_k, p_k)) * scale)
}

/// Banks and offsets whose score changes under a global translation `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationWitness {
    pub bank_q: MultiplexBank,
    pub bank_k: MultiplexBank,
    pub p_q: i64,
    pub p_k: i64,
    pub t: i64,
    pub score_before: f64,
    pub score_after: f64,
    /// 1-based attempt index at which the witness was found.
    pub attempts: usize,
}

impl ViolationWitness {
    pub fn gap(&self) -> f64 {
        (self.score_before - self.score_after).abs()
    }
}

/// Seeded search for a translation that changes the multiplexed score by more
/// than [`WITNESS_GAP`]. Uses [`WITNESS_BUDGET`] attempts.
pub fn equivariance_violation_witness(
    n: usize,
    waves: usize,
    seed: u64,
) -> Result<ViolationWitness> {
    equivariance_violation_witness_with_budget(n, waves, seed, WITNESS_BUDGET)
}

pub fn equivariance_violation_witness_with_budget(
    n: usize,
    waves: usize,
    seed: u64,
    budget: usize,
) -> Result<ViolationWitness> {
    if n < 3 {
        return Err(PeError::DimensionTooSmall { min: 3, actual: n });
    }
    if waves == 0 {
        return Err(PeError::EmptyBank);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = n as f64;
    let ni = n as i64;
    for attempt in 1..=budget {
        let mut bank = || {
            let comps = (0..waves)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            MultiplexBank::new(comps)
        };
        let bank_q = bank()?;
        let bank_k = bank()?;
        let p_q = rng.gen_range(0..ni);
        let p_k = rng.gen_range(0..ni);
        let t = rng.gen_range(1..ni);
        let score_before = mproll_score(&bank_q, &bank_k, p_q, p_k, d)?;
        let score_after = mproll_score(&bank_q, &bank_k, p_q + t, p_k + t, d)?;
        if (score_before - score_after).abs() > WITNESS_GAP {
            return Ok(ViolationWitness {
                bank_q,
                bank_k,
                p_q,
                p_k,
                t,
                score_before,
                score_after,
                attempts: attempt,
            });
        }
    }
    Err(PeError::Inconclusive { attempts: budget })
}

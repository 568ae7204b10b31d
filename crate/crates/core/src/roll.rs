//! Discrete circular roll.
//!
//! Convention: one step of the shift matrix `S` has ones on the superdiagonal
//! and in the bottom-left corner, so `(S q)[i] = q[(i + 1) mod n]` and
//! `(S^p q)[i] = q[(i + p) mod n]`. Under this convention the rolled score
//! `(S^a q) . (S^b k)` equals `q^T S^(b - a) k`.

use crate::error::{PeError, Result};

/// Reduces `p` into `0..n` with a non-negative modulus.
#[inline]
pub fn wrap_shift(p: i64, n: usize) -> usize {
    debug_assert!(n > 0);
    p.rem_euclid(n as i64) as usize
}

/// Rolls `q` by `p` steps: `out[i] = q[(i + p) mod n]`.
///
/// Implemented as an index permutation; an empty input yields an empty output.
pub fn roll_discrete(q: &[f64], p: i64) -> Vec<f64> {
    let n = q.len();
    if n == 0 {
        return Vec::new();
    }
    let s = wrap_shift(p, n);
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&q[s..]);
    out.extend_from_slice(&q[..s]);
    out
}

/// `sum_i q[i] * k[(i + delta) mod n]`, i.e. `q^T S^delta k` without scaling.
///
/// The summation order depends only on `delta`, never on absolute positions.
pub fn relative_dot(q: &[f64], k: &[f64], delta: i64) -> Result<f64> {
    check_same_len(q, k)?;
    let n = q.len();
    if n == 0 {
        return Ok(0.0);
    }
    let s = wrap_shift(delta, n);
    let head: f64 = q[..n - s].iter().zip(&k[s..]).map(|(a, b)| a * b).sum();
    let tail: f64 = q[n - s..].iter().zip(&k[..s]).map(|(a, b)| a * b).sum();
    Ok(head + tail)
}

/// Rolled attention logit `Roll_{p_q}(q) . Roll_{p_k}(k) / sqrt(d)`.
pub fn rollpe_score(q: &[f64], k: &[f64], p_q: i64, p_k: i64, d: f64) -> Result<f64> {
    check_same_len(q, k)?;
    let scale = inv_sqrt(d)?;
    let rq = roll_discrete(q, p_q);
    let rk = roll_discrete(k, p_k);
    Ok(dot(&rq, &rk) * scale)
}

/// Closed relative form `q^T S^delta k / sqrt(d)` with `delta = p_k - p_q`.
pub fn relative_form_score(q: &[f64], k: &[f64], delta: i64, d: f64) -> Result<f64> {
    let scale = inv_sqrt(d)?;
    Ok(relative_dot(q, k, delta)? * scale)
}

pub(crate) fn inv_sqrt(d: f64) -> Result<f64> {
    if d.is_finite() && d > 0.0 {
        Ok(1.0 / d.sqrt())
    } else {
        Err(PeError::InvalidScale(d))
    }
}

pub(crate) fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(PeError::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A non-empty real vector that can be rolled.
#[derive(Debug, Clone, PartialEq)]
pub struct RollVector(Vec<f64>);

impl RollVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(PeError::DimensionTooSmall { min: 1, actual: 0 });
        }
        Ok(Self(data))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn roll(&self, p: i64) -> Self {
        Self(roll_discrete(&self.0, p))
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        check_same_len(&self.0, &other.0)?;
        Ok(dot(&self.0, &other.0))
    }
}

/// Dense `S^p` as a 0/1 matrix. Only used as a reference for the permutation path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftMatrix {
    n: usize,
    p: usize,
    entries: Vec<u8>,
}

/// Builds `S^p` for an `n x n` shift. `S^0` is the identity.
pub fn shift_matrix(n: usize, p: i64) -> Result<ShiftMatrix> {
    if n == 0 {
        return Err(PeError::DimensionTooSmall { min: 1, actual: 0 });
    }
    let p = wrap_shift(p, n);
    let mut entries = vec![0u8; n * n];
    for i in 0..n {
        entries[i * n + (i + p) % n] = 1;
    }
    Ok(ShiftMatrix { n, p, entries })
}

impl ShiftMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Exponent reduced into `0..n`.
    pub fn exponent(&self) -> usize {
        self.p
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.entries[row * self.n + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.entries.chunks_exact(self.n)
    }

    /// Dense matrix-vector product.
    pub fn apply(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.n {
            return Err(PeError::LengthMismatch {
                expected: self.n,
                actual: q.len(),
            });
        }
        Ok(self
            .rows()
            .map(|row| row.iter().zip(q).map(|(&s, x)| f64::from(s) * x).sum())
            .collect())
    }

    /// Integer product `self * other`.
    pub fn mul_int(&self, other: &ShiftMatrix) -> Result<Vec<u32>> {
        if self.n != other.n {
            return Err(PeError::LengthMismatch {
                expected: self.n,
                actual: other.n,
            });
        }
        let n = self.n;
        let mut out = vec![0u32; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n)
                    .map(|l| u32::from(self.get(i, l)) * u32::from(other.get(l, j)))
                    .sum();
            }
        }
        Ok(out)
    }

    /// Integer Gram matrix `S^T S`.
    pub fn gram(&self) -> Vec<u32> {
        let n = self.n;
        let mut out = vec![0u32; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n)
                    .map(|l| u32::from(self.get(l, i)) * u32::from(self.get(l, j)))
                    .sum();
            }
        }
        out
    }

    pub fn is_permutation(&self) -> bool {
        let n = self.n;
        let rows_ok = self
            .rows()
            .all(|r| r.iter().map(|&x| x as usize).sum::<usize>() == 1);
        let cols_ok = (0..n).all(|j| (0..n).map(|i| self.get(i, j) as usize).sum::<usize>() == 1);
        rows_ok && cols_ok
    }

    pub fn to_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| f64::from(self.get(i, j)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_u32(n: usize) -> Vec<u32> {
        let mut out = vec![0u32; n * n];
        for i in 0..n {
            out[i * n + i] = 1;
        }
        out
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn roll_small_cases() {
        let q = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(roll_discrete(&q, 0), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(roll_discrete(&q, 1), vec![2.0, 3.0, 4.0, 1.0]);
        assert_eq!(roll_discrete(&q, 4), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(roll_discrete(&q, -1), vec![4.0, 1.0, 2.0, 3.0]);
        assert!(roll_discrete(&[], 3).is_empty());
    }

    #[test]
    fn roll_matches_dense_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = random_vec(&mut rng, 8);
        let dense = shift_matrix(8, 5).unwrap().apply(&q).unwrap();
        assert_eq!(roll_discrete(&q, 5), dense);
    }

    #[test]
    fn shift_matrix_small() {
        let s0 = shift_matrix(3, 0).unwrap();
        let s1 = shift_matrix(3, 1).unwrap();
        let s3 = shift_matrix(3, 3).unwrap();
        let rows = |s: &ShiftMatrix| s.rows().map(|r| r.to_vec()).collect::<Vec<_>>();
        assert_eq!(rows(&s0), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(rows(&s1), vec![vec![0, 1, 0], vec![0, 0, 1], vec![1, 0, 0]]);
        assert_eq!(rows(&s3), rows(&s0));
        assert_eq!(
            shift_matrix(0, 1),
            Err(PeError::DimensionTooSmall { min: 1, actual: 0 })
        );
    }

    #[test]
    fn shift_matrix_period_and_gram() {
        for n in 1..=9usize {
            let s = shift_matrix(n, 1).unwrap();
            let mut acc = shift_matrix(n, 0).unwrap();
            for _ in 0..n {
                let prod = acc.mul_int(&s).unwrap();
                acc = ShiftMatrix {
                    n,
                    p: (acc.p + 1) % n,
                    entries: prod.iter().map(|&x| x as u8).collect(),
                };
            }
            assert_eq!(acc, shift_matrix(n, 0).unwrap(), "S^n != I for n={n}");
            for p in -3..=3 {
                let sp = shift_matrix(n, p).unwrap();
                assert!(sp.is_permutation());
                assert_eq!(sp.gram(), identity_u32(n));
            }
        }
    }

    #[test]
    fn score_examples() {
        assert_eq!(
            rollpe_score(&[1.0, 0.0], &[1.0, 0.0], 0, 0, 1.0).unwrap(),
            1.0
        );
        assert_eq!(
            rollpe_score(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 0, 0, 1.0).unwrap(),
            0.0
        );
        assert_eq!(
            relative_form_score(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 0, 1.0).unwrap(),
            1.0
        );

        // q^T S^1 k through the explicit matrix
        let q = [1.0, 0.0];
        let k = [0.0, 1.0];
        let sk = shift_matrix(2, 1).unwrap().apply(&k).unwrap();
        let oracle = dot(&q, &sk);
        assert_eq!(relative_form_score(&q, &k, 1, 1.0).unwrap(), oracle);
        assert_eq!(oracle, 1.0);
    }

    #[test]
    fn score_matches_relative_form_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = random_vec(&mut rng, 16);
        let k = random_vec(&mut rng, 16);
        let a = rollpe_score(&q, &k, 3, 7, 16.0).unwrap();
        let b = relative_form_score(&q, &k, 4, 16.0).unwrap();
        assert!((a - b).abs() <= 1e-12);

        let q = random_vec(&mut rng, 12);
        let k = random_vec(&mut rng, 12);
        let reference = rollpe_score(&q, &k, 2, 7, 12.0).unwrap();
        let rel = relative_form_score(&q, &k, 5, 12.0).unwrap();
        assert!((reference - rel).abs() <= 1e-12);
        for p_q in 0..12 {
            let s = rollpe_score(&q, &k, p_q, p_q + 5, 12.0).unwrap();
            assert!((s - rel).abs() <= 1e-12, "p_q={p_q}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            rollpe_score(&[1.0], &[1.0, 2.0], 0, 0, 1.0),
            Err(PeError::LengthMismatch { .. })
        ));
        assert!(matches!(
            relative_form_score(&[1.0], &[1.0], 0, 0.0),
            Err(PeError::InvalidScale(_))
        ));
        assert!(RollVector::new(vec![]).is_err());
        let v = RollVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(v.roll(1).as_slice(), &[2.0, 3.0, 1.0]);
        assert!(v.dot(&RollVector::new(vec![1.0]).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn translation_equivariance(
            q in prop::collection::vec(-10.0f64..10.0, 1..24),
            seed in any::<u64>(),
            p_q in -50i64..50, p_k in -50i64..50, t in -100i64..100,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_vec(&mut rng, q.len());
            let d = q.len() as f64;
            let a = rollpe_score(&q, &k, p_q, p_k, d).unwrap();
            let b = rollpe_score(&q, &k, p_q + t, p_k + t, d).unwrap();
            let r = relative_form_score(&q, &k, p_k - p_q, d).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((a - r).abs() <= 1e-12);
        }

        #[test]
        fn periodicity_and_composition(
            q in prop::collection::vec(-10.0f64..10.0, 1..24),
            a in -1000i64..1000, b in -1000i64..1000,
        ) {
            let n = q.len() as i64;
            prop_assert_eq!(roll_discrete(&q, a), roll_discrete(&q, a.rem_euclid(n)));
            prop_assert_eq!(roll_discrete(&roll_discrete(&q, a), b), roll_discrete(&q, a + b));
        }
    }
}

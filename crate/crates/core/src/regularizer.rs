//! Shift-smoothness diagnostics and the cyclic Laplacian penalty.

use crate::error::{PeError, Result};
use crate::roll::dot;
use crate::spectral::{roll_continuous, SpectralBranch, Wavelength};

/// Self-correlation and displacement of a vector under a small shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessReport {
    /// `q . Roll_dp(q) / |q|^2`
    pub correlation: f64,
    /// `|q - Roll_dp(q)|`
    pub distance: f64,
    /// `1 - correlation`
    pub epsilon_bound: f64,
}

/// Measures how much `q` moves under a continuous roll of `delta_p`.
///
/// Uses the centered branch. When the roll is an exact isometry (integer
/// `delta_p / lambda`, or odd length) `distance^2 == 2 |q|^2 (1 - correlation)`.
pub fn lipschitz_gap(q: &[f64], delta_p: f64, lambda: f64) -> Result<SmoothnessReport> {
    let energy = dot(q, q);
    if energy == 0.0 {
        return Err(PeError::ZeroVector);
    }
    let rolled = roll_continuous(
        q,
        delta_p,
        Wavelength::new(lambda)?,
        SpectralBranch::Centered,
    )?;
    let correlation = dot(q, &rolled) / energy;
    let distance = q
        .iter()
        .zip(&rolled)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(SmoothnessReport {
        correlation,
        distance,
        epsilon_bound: 1.0 - correlation,
    })
}

/// `sum_i (q_i - q_{(i+1) mod n})^2`, the quadratic form of the cycle-graph Laplacian.
pub fn circular_laplacian_loss(q: &[f64]) -> Result<f64> {
    let n = q.len();
    if n < 2 {
        return Err(PeError::DimensionTooSmall { min: 2, actual: n });
    }
    // Summing the sorted terms makes the result independent of where the
    // cycle starts, so rolled inputs give bit-identical losses.
    let mut terms: Vec<f64> = (0..n)
        .map(|i| {
            let d = q[i] - q[(i + 1) % n];
            d * d
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum())
}

//! Traveling-wave positional encodings for attention.
//!
//! The crate implements the circular roll encoding (discrete and continuous),
//! rotary embeddings (RoPE) with both the classic and the roll-induced
//! frequency schedules, a multiplexed roll encoding, a small scaled
//! dot-product attention kernel with pluggable encodings, and a cyclic
//! smoothness regularizer.
//!
//! All kernels work on `f64` slices and are pure functions of their inputs.

pub mod attention;
pub mod error;
pub mod multiplex;
pub mod regularizer;
pub mod roll;
pub mod rope;
pub mod spectral;

pub use attention::{
    attend, axial_encode, grad_check, sinusoidal_ape, AttentionBatch, AttentionOutput, PeConfig,
    PeKind, Positions,
};
pub use error::{PeError, Result};
pub use multiplex::{
    equivariance_violation_witness, mproll, mproll_score, MultiplexBank, ViolationWitness,
};
pub use regularizer::{circular_laplacian_loss, lipschitz_gap, SmoothnessReport};
pub use roll::{
    relative_form_score, roll_discrete, rollpe_score, shift_matrix, RollVector, ShiftMatrix,
};
pub use rope::{
    classic_schedule, equivalence_residual, roll_induced_schedule, rope_apply, FrequencySchedule,
    RealifiedBasis, RopeState, ScheduleSource,
};
pub use spectral::{
    dft_matrix, generator_residuals, log_shift_generator, roll_continuous, roll_continuous_fft,
    FftRoller, GeneratorResiduals, ShiftGenerator, SpectralBranch, Wavelength,
};

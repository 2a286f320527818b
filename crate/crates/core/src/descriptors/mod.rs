//! Per-vertex descriptor fields: wavelet energy decomposition signatures and
//! the heat/wave kernel baselines.

mod energy;
mod field;
mod kernels;
mod weds;

pub use energy::{dirichlet_energy, energy_decomposition, EnergyDecomposition, EnergyWeighting};
pub use field::{read_descriptor, write_descriptor, DescriptorField, DescriptorFileError, DescriptorKind, DescriptorMeta};
pub use kernels::{hks, hks_times, wks, wks_energies};
pub use weds::{weds, weds_from_energy, MAX_WEDS_DIM};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("descriptor dimension must be in 1..={max}, got {got}")]
    InvalidDimension { got: usize, max: usize },
    #[error("basis needs at least {needed} eigenpairs, has {got}")]
    BasisTooSmall { needed: usize, got: usize },
    #[error("descriptor contains a non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error(transparent)]
    Wavelet(#[from] crate::wavelet::WaveletError),
}

/// Indices `floor(i * len / num)` for `i < num`: a uniform stride through `len`
/// columns down to `num`.
pub fn uniform_subsample(len: usize, num: usize) -> Vec<usize> {
    assert!(num >= 1 && num <= len, "cannot sample {num} of {len}");
    (0..num).map(|i| i * len / num).collect()
}

/// Largest entrywise difference between two fields, relative to the largest
/// magnitude in `a`.
pub fn value_drift(a: &DescriptorField, b: &DescriptorField) -> Result<f64, DescriptorError> {
    if a.values.shape() != b.values.shape() {
        return Err(DescriptorError::DimensionMismatch {
            expected: a.values.len(),
            got: b.values.len(),
        });
    }
    Ok((&a.values - &b.values).amax() / a.values.amax().max(f64::MIN_POSITIVE))
}

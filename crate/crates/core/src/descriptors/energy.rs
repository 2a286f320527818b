use nalgebra::DMatrix;

use super::DescriptorError;
use crate::sparse::SparseSymMatrix;
use crate::spectral::SpectralBasis;
use crate::wavelet::{coeffs_from_spectrum, filter_table, FilterBank};

/// Dirichlet energy of a vector-valued function: `sum_i f_i^T L f_i`.
pub fn dirichlet_energy(l: &SparseSymMatrix, f: &DMatrix<f64>) -> Result<f64, DescriptorError> {
    if f.nrows() != l.dim() {
        return Err(DescriptorError::DimensionMismatch {
            expected: l.dim(),
            got: f.nrows(),
        });
    }
    Ok(f.column_iter()
        .map(|c| l.quad_form(c.as_slice()))
        .sum())
}

/// Eigenvalue exponent applied inside the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyWeighting {
    /// `lambda_j`: sums to the Dirichlet energy.
    Linear,
    /// `lambda_j^2`: unchanged under global scaling of the mesh.
    Squared,
}

impl EnergyWeighting {
    fn exponent(self) -> i32 {
        match self {
            EnergyWeighting::Linear => 1,
            EnergyWeighting::Squared => 2,
        }
    }
}

/// `(K + 1) x N` per-scale, per-vertex energy.
#[derive(Debug, Clone)]
pub struct EnergyDecomposition {
    pub weighting: EnergyWeighting,
    pub values: DMatrix<f64>,
}

impl EnergyDecomposition {
    pub fn total(&self) -> f64 {
        self.values.sum()
    }
}

/// Distributes the energy of the columns of `x` over scales and vertices:
///
/// `eps_m(v) = sum_{j >= 1} lambda_j^p sum_i gamma_ij(m, v) omega_ij` with
/// `gamma_ij(m, v) = W_i(m, v) g_m(lambda_j) phi_j(v)` and
/// `omega_ij = sum_{m, v} gamma_ij(m, v) = G(lambda_j) sigma_ij`. The `j = 0`
/// term is dropped throughout, which is the same as centering `x` at its
/// area-weighted centroid.
pub fn energy_decomposition(
    basis: &SpectralBasis,
    bank: &FilterBank,
    x: &DMatrix<f64>,
    weighting: EnergyWeighting,
) -> Result<EnergyDecomposition, DescriptorError> {
    let n = basis.num_vertices();
    if x.nrows() != n {
        return Err(DescriptorError::DimensionMismatch {
            expected: n,
            got: x.nrows(),
        });
    }
    let g = filter_table(basis, bank);
    let lambdas = basis.eigenvalues();
    let p = weighting.exponent();
    let mut values = DMatrix::zeros(bank.num_filters(), n);
    for col in x.column_iter() {
        let f: Vec<f64> = col.iter().copied().collect();
        let mut sigma = basis.project(&f).expect("row count checked");
        // The constant component carries position only; keeping it would
        // make eps depend on where the shape sits in space.
        sigma[0] = 0.0;
        let w = coeffs_from_spectrum(basis, bank, &sigma);
        let omega: Vec<f64> = (0..basis.k()).map(|j| frame_gain(&g, j) * sigma[j]).collect();
        // weights(m, j) = lambda_j^p g_m(lambda_j) omega_j, with the j = 0 term dropped.
        let weights = DMatrix::from_fn(bank.num_filters(), basis.k(), |m, j| {
            if j == 0 {
                0.0
            } else {
                lambdas[j].powi(p) * g[(m, j)] * omega[j]
            }
        });
        let q = weights * basis.eigenvectors().transpose();
        values += w.component_mul(&q);
    }
    Ok(EnergyDecomposition { weighting, values })
}

/// `G(lambda_j)` from a filter table.
fn frame_gain(g: &DMatrix<f64>, j: usize) -> f64 {
    g.column(j).iter().map(|v| v * v).sum()
}

//! The generalized eigenproblem `L phi = lambda A phi` and A-weighted
//! analysis/synthesis in the resulting basis.

mod cache;
mod cholesky;
mod lanczos;

pub use cache::{read_basis, write_basis, BasisFileError};
pub use cholesky::{reverse_cuthill_mckee, EnvelopeCholesky};

use log::debug;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::mesh::MassDiagonal;
use crate::sparse::SparseSymMatrix;
use lanczos::{largest_eigenpairs, LanczosParams, RitzPairs};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("requested {k} eigenpairs but the matrix has dimension {n}")]
    TooManyEigenpairs { k: usize, n: usize },
    #[error("basis size must be at least 1")]
    ZeroEigenpairs,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("eigensolver did not converge within a Krylov dimension of {dim} (worst residual {residual:e})")]
    NonConvergence { dim: usize, residual: f64 },
    #[error("shifted operator is not positive definite; is the Laplacian positive semidefinite?")]
    Factorization,
}

#[derive(Debug, Clone)]
pub struct EigOptions {
    /// Relative eigen-residual tolerance.
    pub tol: f64,
    /// Use a dense solve up to this dimension.
    pub dense_threshold: usize,
    /// Krylov dimension budget per requested eigenpair.
    pub budget_per_pair: usize,
    pub block: usize,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            dense_threshold: 512,
            budget_per_pair: 50,
            block: 8,
            seed: 0x5eed,
        }
    }
}

/// The `k` smallest generalized eigenpairs with A-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    eigenvalues: DVector<f64>,
    /// `N x k`, column `j` is `phi_j`.
    eigenvectors: DMatrix<f64>,
    mass: MassDiagonal,
}

impl SpectralBasis {
    /// Assembles a basis from precomputed parts (e.g. a cache file).
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: DMatrix<f64>, mass: MassDiagonal) -> Result<Self, SpectralError> {
        if eigenvectors.ncols() != eigenvalues.len() {
            return Err(SpectralError::DimensionMismatch {
                expected: eigenvalues.len(),
                got: eigenvectors.ncols(),
            });
        }
        if eigenvectors.nrows() != mass.len() {
            return Err(SpectralError::DimensionMismatch {
                expected: mass.len(),
                got: eigenvectors.nrows(),
            });
        }
        Ok(Self {
            eigenvalues: DVector::from_vec(eigenvalues),
            eigenvectors,
            mass,
        })
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.as_slice()
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, j: usize) -> &[f64] {
        let n = self.num_vertices();
        &self.eigenvectors.as_slice()[j * n..(j + 1) * n]
    }

    pub fn mass(&self) -> &MassDiagonal {
        &self.mass
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.k() - 1]
    }

    /// `sigma_j = f^T A phi_j`.
    pub fn project(&self, f: &[f64]) -> Result<Vec<f64>, SpectralError> {
        let n = self.num_vertices();
        if f.len() != n {
            return Err(SpectralError::DimensionMismatch { expected: n, got: f.len() });
        }
        let af: Vec<f64> = f.iter().zip(self.mass.areas()).map(|(x, a)| x * a).collect();
        Ok((0..self.k())
            .map(|j| self.eigenvector(j).iter().zip(&af).map(|(p, x)| p * x).sum())
            .collect())
    }

    /// `Phi sigma`.
    pub fn synthesize(&self, sigma: &[f64]) -> Result<Vec<f64>, SpectralError> {
        if sigma.len() != self.k() {
            return Err(SpectralError::DimensionMismatch {
                expected: self.k(),
                got: sigma.len(),
            });
        }
        let mut out = vec![0.0; self.num_vertices()];
        for (j, &s) in sigma.iter().enumerate() {
            if s != 0.0 {
                for (o, p) in out.iter_mut().zip(self.eigenvector(j)) {
                    *o += s * p;
                }
            }
        }
        Ok(out)
    }
}

/// Smallest `k` eigenpairs of the pencil `(L, A)`.
///
/// Dense solve up to `opts.dense_threshold`, otherwise shift-invert block
/// Lanczos with a profile Cholesky of `L - shift A`. The first eigenvalue is
/// clamped to zero (the kernel of a connected mesh's Laplacian), and each
/// eigenvector's largest-magnitude entry is made positive.
pub fn eig_generalized(l: &SparseSymMatrix, mass: &MassDiagonal, k: usize, opts: &EigOptions) -> Result<SpectralBasis, SpectralError> {
    let n = l.dim();
    if k == 0 {
        return Err(SpectralError::ZeroEigenpairs);
    }
    if k > n {
        return Err(SpectralError::TooManyEigenpairs { k, n });
    }
    if mass.len() != n {
        return Err(SpectralError::DimensionMismatch { expected: n, got: mass.len() });
    }
    let (mut values, mut vectors) = if n <= opts.dense_threshold {
        dense_eig(l, mass, k)
    } else {
        sparse_eig(l, mass, k, opts)?
    };
    values[0] = 0.0;
    for j in 0..k {
        let col = vectors.column(j);
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            vectors.column_mut(j).neg_mut();
        }
    }
    SpectralBasis::from_parts(values, vectors, mass.clone())
}

fn dense_eig(l: &SparseSymMatrix, mass: &MassDiagonal, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = l.dim();
    let inv_sqrt: Vec<f64> = mass.areas().iter().map(|a| 1.0 / a.sqrt()).collect();
    let mut m = l.to_dense();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vectors = DMatrix::zeros(n, k);
    let mut values = Vec::with_capacity(k);
    for (j, &c) in order.iter().take(k).enumerate() {
        values.push(eig.eigenvalues[c]);
        for i in 0..n {
            vectors[(i, j)] = eig.eigenvectors[(i, c)] * inv_sqrt[i];
        }
    }
    (values, vectors)
}

fn generalized_residual(l: &SparseSymMatrix, mass: &MassDiagonal, lambda: f64, phi: &[f64]) -> (f64, f64) {
    let lphi = l.mul_vec(phi);
    let mut r2 = 0.0;
    let mut a2 = 0.0;
    for ((lp, p), a) in lphi.iter().zip(phi).zip(mass.areas()) {
        r2 += (lp - lambda * a * p).powi(2);
        a2 += (a * p).powi(2);
    }
    (r2.sqrt(), a2.sqrt())
}

fn sparse_eig(l: &SparseSymMatrix, mass: &MassDiagonal, k: usize, opts: &EigOptions) -> Result<(Vec<f64>, DMatrix<f64>), SpectralError> {
    let n = l.dim();
    let areas = mass.areas();
    let scale = (0..n).map(|i| l.get(i, i) / areas[i]).sum::<f64>() / n as f64;
    // Slightly negative shift: L - shift A is positive definite and the wanted
    // low end of the spectrum maps to the top of the inverted operator.
    let shift = -1e-3 * scale;
    let chol = EnvelopeCholesky::factor(&l.shifted_by_diagonal(shift, areas)).ok_or(SpectralError::Factorization)?;
    let sqrt_a: Vec<f64> = areas.iter().map(|a| a.sqrt()).collect();

    let to_phi = |y: &[f64]| -> Vec<f64> { y.iter().zip(&sqrt_a).map(|(v, s)| v / s).collect() };
    let mut worst = f64::INFINITY;
    let params = LanczosParams {
        count: k,
        block: opts.block,
        max_dim: opts.budget_per_pair.saturating_mul(k).max(k + 2 * opts.block),
        seed: opts.seed,
    };
    let check = |pairs: &RitzPairs| {
        let lambdas: Vec<f64> = pairs.values.iter().map(|t| shift + 1.0 / t).collect();
        let top = lambdas.iter().cloned().fold(shift.abs(), f64::max);
        worst = 0.0;
        let mut ok = true;
        for (lam, y) in lambdas.iter().zip(&pairs.vectors) {
            let (r, an) = generalized_residual(l, mass, *lam, &to_phi(y));
            let rel = r / (top * an);
            worst = f64::max(worst, rel);
            ok &= rel <= opts.tol;
        }
        debug!("lanczos check: worst relative residual {worst:e}");
        ok
    };
    let op = |y: &[f64]| -> Vec<f64> {
        let rhs: Vec<f64> = y.iter().zip(&sqrt_a).map(|(v, s)| v * s).collect();
        chol.solve(&rhs).iter().zip(&sqrt_a).map(|(v, s)| v * s).collect()
    };
    let pairs = match largest_eigenpairs(n, &params, op, check) {
        Ok(p) => p,
        Err(_) => {
            return Err(SpectralError::NonConvergence {
                dim: params.max_dim.min(n),
                residual: worst,
            })
        }
    };
    // Inverted values are descending, so eigenvalues come out ascending.
    let values: Vec<f64> = pairs.values.iter().map(|t| shift + 1.0 / t).collect();
    let mut vectors = DMatrix::zeros(n, k);
    for (j, y) in pairs.vectors.iter().enumerate() {
        vectors.column_mut(j).copy_from_slice(&to_phi(y));
    }
    Ok((values, vectors))
}

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;

use weds_core::spectral::SpectralBasis;
use weds_core::wavelet::{wavelet_matrix, FilterBank};
use weds_core::{SparseSymMatrix, TriMesh};

use crate::MgcnError;

/// Largest scale count a layer may request; beyond it the uniform pick over
/// 32 filters starts repeating indices.
pub const MAX_LAYER_SCALES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OperatorKind {
    Wavelet,
    Chebyshev,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::Wavelet => "wavelet",
            OperatorKind::Chebyshev => "chebyshev",
        })
    }
}

/// Filter indices for a layer with `n` scales: filter numbers
/// `floor(linspace(32, 1, n + 2))` without the ends, shifted to 0-based.
/// For `n >= 3` this is `select_scales(32 n)`.
pub fn layer_scales(n: usize) -> Option<Vec<usize>> {
    if n == 0 || n > MAX_LAYER_SCALES {
        return None;
    }
    let step = 31.0 / (n + 1) as f64;
    Some((1..=n).map(|i| (32.0 - step * i as f64).floor() as usize - 1).collect())
}

/// Divides every column by its absolute sum.
pub fn normalize_wavelet_columns(psi: &DMatrix<f64>) -> Result<DMatrix<f64>, MgcnError> {
    let mut out = psi.clone();
    for (c, mut col) in out.column_iter_mut().enumerate() {
        let s = col.lp_norm(1);
        if s == 0.0 {
            return Err(MgcnError::ZeroColumn(c));
        }
        col /= s;
    }
    Ok(out)
}

/// `-D^(-1/2) Adj D^(-1/2)`: the symmetric normalized graph Laplacian shifted
/// by `-I`, so its spectrum lies in `[-1, 1]`.
pub fn rescaled_graph_laplacian(mesh: &TriMesh) -> SparseSymMatrix {
    let adj = mesh.adjacency();
    let inv_sqrt: Vec<f64> = adj.iter().map(|a| 1.0 / (a.len().max(1) as f64).sqrt()).collect();
    let mut upper = BTreeMap::new();
    for (i, nbrs) in adj.iter().enumerate() {
        for &j in nbrs {
            if i < j {
                upper.insert((i, j), -inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    SparseSymMatrix::from_upper(mesh.num_vertices(), &upper)
}

/// Dense `T_0(L~) .. T_{order-1}(L~)` by the three-term recurrence.
pub fn chebyshev_operators(mesh: &TriMesh, order: usize) -> Vec<DMatrix<f64>> {
    let l = rescaled_graph_laplacian(mesh);
    let n = mesh.num_vertices();
    let apply = |m: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(n, n);
        for (src, mut dst) in m.column_iter().zip(out.column_iter_mut()) {
            l.mul_vec_into(src.as_slice(), dst.as_mut_slice());
        }
        out
    };
    let mut ts: Vec<DMatrix<f64>> = Vec::with_capacity(order);
    for m in 0..order {
        let t = match m {
            0 => DMatrix::identity(n, n),
            1 => apply(&ts[0]),
            _ => apply(&ts[m - 1]) * 2.0 - &ts[m - 2],
        };
        ts.push(t);
    }
    ts
}

/// The per-shape `N x N` operators a model reads, keyed by kind and index.
/// Wavelet entries hold the transposed normalized wavelet matrix.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    n: usize,
    ops: BTreeMap<(OperatorKind, usize), DMatrix<f64>>,
}

impl OperatorSet {
    pub fn new(num_vertices: usize) -> Self {
        Self {
            n: num_vertices,
            ops: BTreeMap::new(),
        }
    }

    /// Builds every operator in `required`.
    pub fn build(required: &[(OperatorKind, usize)], mesh: &TriMesh, basis: &SpectralBasis, bank: &FilterBank) -> Result<Self, MgcnError> {
        let mut set = Self::new(mesh.num_vertices());
        let wavelets: Vec<usize> = required.iter().filter(|r| r.0 == OperatorKind::Wavelet).map(|r| r.1).collect();
        set.add_wavelets(basis, bank, &wavelets)?;
        if let Some(order) = required.iter().filter(|r| r.0 == OperatorKind::Chebyshev).map(|r| r.1 + 1).max() {
            set.add_chebyshev(mesh, order);
        }
        Ok(set)
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn insert(&mut self, kind: OperatorKind, index: usize, op: DMatrix<f64>) -> Result<(), MgcnError> {
        if op.shape() != (self.n, self.n) {
            return Err(MgcnError::DimensionMismatch {
                context: "operator",
                expected: self.n,
                got: op.nrows(),
            });
        }
        self.ops.insert((kind, index), op);
        Ok(())
    }

    pub fn get(&self, kind: OperatorKind, index: usize) -> Result<&DMatrix<f64>, MgcnError> {
        self.ops.get(&(kind, index)).ok_or(MgcnError::MissingOperator { kind, index })
    }

    pub fn add_wavelets(&mut self, basis: &SpectralBasis, bank: &FilterBank, indices: &[usize]) -> Result<(), MgcnError> {
        let mut todo: Vec<usize> = indices.iter().copied().filter(|&m| !self.ops.contains_key(&(OperatorKind::Wavelet, m))).collect();
        todo.sort_unstable();
        todo.dedup();
        let built: Result<Vec<_>, MgcnError> = todo
            .par_iter()
            .map(|&m| {
                let psi = wavelet_matrix(basis, bank, m, None)?;
                Ok((m, normalize_wavelet_columns(&psi.values)?.transpose()))
            })
            .collect();
        for (m, op) in built? {
            self.insert(OperatorKind::Wavelet, m, op)?;
        }
        Ok(())
    }

    pub fn add_chebyshev(&mut self, mesh: &TriMesh, order: usize) {
        for (m, t) in chebyshev_operators(mesh, order).into_iter().enumerate() {
            self.ops.insert((OperatorKind::Chebyshev, m), t);
        }
    }

    /// Operators of the mesh relabeled so that new vertex `i` is old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let ops = self
            .ops
            .iter()
            .map(|(&key, a)| (key, DMatrix::from_fn(self.n, self.n, |i, j| a[(perm[i], perm[j])])))
            .collect();
        Self { n: self.n, ops }
    }
}

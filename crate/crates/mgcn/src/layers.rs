//! Layer primitives with hand-written backward passes.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::operators::{OperatorKind, OperatorSet};
use crate::MgcnError;

/// Columns whose spread is below this fraction of their magnitude are treated
/// as constant by [`minmax_columns`].
pub const FLAT_TOLERANCE: f64 = 1e-12;

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Per-column `(min, max)` used by the normalization, or `None` for a flat
/// column.
pub type ColumnRange = Option<(f64, f64)>;

pub fn column_ranges(e: &DMatrix<f64>) -> Vec<ColumnRange> {
    e.column_iter()
        .map(|c| {
            let (lo, hi) = (c.min(), c.max());
            if hi - lo > FLAT_TOLERANCE * lo.abs().max(hi.abs()) {
                Some((lo, hi))
            } else {
                None
            }
        })
        .collect()
}

/// Minmax with fixed references; flat columns map to 0.5.
pub fn minmax_with(e: &DMatrix<f64>, ranges: &[ColumnRange]) -> DMatrix<f64> {
    let mut z = e.clone();
    for (mut col, r) in z.column_iter_mut().zip(ranges) {
        match *r {
            Some((lo, hi)) => col.apply(|x| *x = (*x - lo) / (hi - lo)),
            None => col.fill(0.5),
        }
    }
    z
}

/// Rescales every column to `[0, 1]`.
pub fn minmax_columns(e: &DMatrix<f64>) -> (DMatrix<f64>, Vec<ColumnRange>) {
    let ranges = column_ranges(e);
    (minmax_with(e, &ranges), ranges)
}

/// Gradient with the references held fixed; flat columns pass nothing.
pub fn minmax_backward(dz: &DMatrix<f64>, ranges: &[ColumnRange]) -> DMatrix<f64> {
    let mut de = dz.clone();
    for (mut col, r) in de.column_iter_mut().zip(ranges) {
        match *r {
            Some((lo, hi)) => col /= hi - lo,
            None => col.fill(0.0),
        }
    }
    de
}

/// Initial weight gains over the Glorot normal scale. Under the column
/// normalization a convolution's output ignores its weight scale except
/// through the ELU; at unit gain the pre-activations stay small and the
/// layer is close to linear. The larger dense gain speeds up the affine
/// tail under short training budgets.
pub const CONV_INIT_GAIN: f64 = 30.0;
pub const DENSE_INIT_GAIN: f64 = 10.0;

fn glorot<R: Rng>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, gain: f64, rng: &mut R) -> DMatrix<f64> {
    let std = gain * (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

fn check_rows(context: &'static str, x: &DMatrix<f64>, expected: usize) -> Result<(), MgcnError> {
    if x.nrows() != expected {
        return Err(MgcnError::DimensionMismatch {
            context,
            expected,
            got: x.nrows(),
        });
    }
    Ok(())
}

fn check_cols(context: &'static str, x: &DMatrix<f64>, expected: usize) -> Result<(), MgcnError> {
    if x.ncols() != expected {
        return Err(MgcnError::DimensionMismatch {
            context,
            expected,
            got: x.ncols(),
        });
    }
    Ok(())
}

/// `Z = Norm(ELU(sum_s A_s X W_s))` over a list of shape operators.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConv {
    pub kind: OperatorKind,
    pub indices: Vec<usize>,
    /// One `C x O` matrix per index.
    pub weights: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    pub x: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub ranges: Vec<ColumnRange>,
}

impl GraphConv {
    pub fn zeros(kind: OperatorKind, indices: Vec<usize>, c: usize, o: usize) -> Self {
        let weights = vec![DMatrix::zeros(c, o); indices.len()];
        Self { kind, indices, weights }
    }

    pub fn random<R: Rng>(kind: OperatorKind, indices: Vec<usize>, c: usize, o: usize, rng: &mut R) -> Self {
        let fan_in = c * indices.len();
        let weights = (0..indices.len()).map(|_| glorot(c, o, fan_in, o, CONV_INIT_GAIN, rng)).collect();
        Self { kind, indices, weights }
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    /// `S = sum_s A_s (X W_s)`.
    pub fn pre_activation(&self, ops: &OperatorSet, x: &DMatrix<f64>) -> Result<DMatrix<f64>, MgcnError> {
        check_rows("graph conv input rows", x, ops.num_vertices())?;
        check_cols("graph conv input width", x, self.in_dim())?;
        let mats: Vec<&DMatrix<f64>> = self.indices.iter().map(|&i| ops.get(self.kind, i)).collect::<Result<_, _>>()?;
        let terms: Vec<DMatrix<f64>> = mats.par_iter().zip(&self.weights).map(|(a, w)| *a * (x * w)).collect();
        let mut s = DMatrix::zeros(x.nrows(), self.out_dim());
        for t in &terms {
            s += t;
        }
        Ok(s)
    }

    pub fn forward(&self, ops: &OperatorSet, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ConvCache), MgcnError> {
        let s = self.pre_activation(ops, x)?;
        let (z, ranges) = minmax_columns(&s.map(elu));
        Ok((z, ConvCache { x: x.clone(), s, ranges }))
    }

    /// Forward pass with the normalization references taken from `ranges`
    /// instead of the current activations.
    pub fn forward_frozen(&self, ops: &OperatorSet, x: &DMatrix<f64>, ranges: &[ColumnRange]) -> Result<DMatrix<f64>, MgcnError> {
        Ok(minmax_with(&self.pre_activation(ops, x)?.map(elu), ranges))
    }

    /// `(dX, dW_s)`: with `dS = (dZ / (max - min)) * ELU'(S)` and
    /// `P_s = A_s^T dS`, `dW_s = X^T P_s` and `dX = sum_s P_s W_s^T`.
    pub fn backward(&self, ops: &OperatorSet, cache: &ConvCache, dz: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>), MgcnError> {
        let mut ds = minmax_backward(dz, &cache.ranges);
        ds.zip_apply(&cache.s, |d, s| *d *= elu_grad(s));
        let mats: Vec<&DMatrix<f64>> = self.indices.iter().map(|&i| ops.get(self.kind, i)).collect::<Result<_, _>>()?;
        let parts: Vec<(DMatrix<f64>, DMatrix<f64>)> = mats
            .par_iter()
            .zip(&self.weights)
            .map(|(a, w)| {
                let p = a.tr_mul(&ds);
                (cache.x.tr_mul(&p), p * w.transpose())
            })
            .collect();
        let mut dx = DMatrix::zeros(cache.x.nrows(), cache.x.ncols());
        let mut dw = Vec::with_capacity(parts.len());
        for (g, d) in parts {
            dx += d;
            dw.push(g);
        }
        Ok((dx, dw))
    }
}

/// Per-vertex affine map `Y = X W + 1 b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `C x O`.
    pub weight: DMatrix<f64>,
    /// `1 x O`.
    pub bias: DMatrix<f64>,
}

impl Dense {
    pub fn zeros(c: usize, o: usize) -> Self {
        Self {
            weight: DMatrix::zeros(c, o),
            bias: DMatrix::zeros(1, o),
        }
    }

    pub fn random<R: Rng>(c: usize, o: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot(c, o, c, o, DENSE_INIT_GAIN, rng),
            bias: DMatrix::zeros(1, o),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, MgcnError> {
        check_cols("dense input width", x, self.in_dim())?;
        let mut y = x * &self.weight;
        for mut row in y.row_iter_mut() {
            row += &self.bias;
        }
        Ok(y)
    }

    /// `(dX, dW, db)`.
    pub fn backward(&self, x: &DMatrix<f64>, dy: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let db = DMatrix::from_fn(1, dy.ncols(), |_, c| dy.column(c).sum());
        (dy * self.weight.transpose(), x.tr_mul(dy), db)
    }
}

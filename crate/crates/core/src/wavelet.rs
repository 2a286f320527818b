//! Mexican-hat spectral graph wavelet frames.
//!
//! A [`FilterBank`] holds one low-pass scaling filter `h` and `K` band-pass
//! filters `g(t_m x)`. Filter index `m = 0` always denotes the scaling filter;
//! `m = 1..=K` the wavelets from the largest scale `t_1` down to the smallest
//! `t_K`. The bank is a (near) Parseval frame when
//! `G(lambda) = h(lambda)^2 + sum_m g(t_m lambda)^2` stays close to 1.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::hash::ContentHasher;
use crate::spectral::SpectralBasis;

/// Maximum allowed `|G(lambda) - 1|`.
pub const FRAME_TOLERANCE: f64 = 0.01;
/// Uniform samples on `(0, lambda_max]` added to the frame residual grid.
pub const RESIDUAL_GRID_SAMPLES: usize = 256;
pub const DEFAULT_NUM_SCALES: usize = 31;

#[derive(Debug, Error)]
pub enum WaveletError {
    #[error("lambda_max must be positive, got {0}")]
    NonPositiveLambdaMax(f64),
    #[error("at least one wavelet scale is required")]
    NoScales,
    #[error("frame residual {residual:.4} at lambda = {lambda:.6} exceeds tolerance {tolerance}")]
    FrameResidual { residual: f64, lambda: f64, tolerance: f64 },
    #[error("filter index {m} out of range 0..={max}")]
    ScaleIndex { m: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid filter bank description: {0}")]
    Parse(String),
}

/// The five Mexican-hat constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl FilterParams {
    /// Constants solved for 32 filters under tolerance 0.01.
    pub const STOCK: Self = Self {
        a: 0.443,
        b: 1.004,
        c: 38.462,
        d: 46.0,
        e: 0.2,
    };
}

impl Default for FilterParams {
    fn default() -> Self {
        Self::STOCK
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    params: FilterParams,
    lambda_max: f64,
    /// `t_1..t_K`, strictly decreasing.
    scales: Vec<f64>,
}

/// `A x^2 e^(1 - x^2)`.
fn mexican_hat(a: f64, x: f64) -> f64 {
    let x2 = x * x;
    a * x2 * (1.0 - x2).exp()
}

impl FilterBank {
    /// Builds a bank without checking the frame condition.
    pub fn new(params: FilterParams, lambda_max: f64, num_scales: usize) -> Result<Self, WaveletError> {
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(WaveletError::NonPositiveLambdaMax(lambda_max));
        }
        if num_scales == 0 {
            return Err(WaveletError::NoScales);
        }
        let lo = (params.d / lambda_max).ln();
        let hi = (params.e / lambda_max).ln();
        let scales = (0..num_scales)
            .map(|i| {
                let s = if num_scales == 1 {
                    0.0
                } else {
                    i as f64 / (num_scales - 1) as f64
                };
                (lo + (hi - lo) * s).exp()
            })
            .collect();
        Ok(Self {
            params,
            lambda_max,
            scales,
        })
    }

    /// A bank that satisfies the frame tolerance on `residual_grid(eigenvalues)`.
    pub fn checked(params: FilterParams, lambda_max: f64, num_scales: usize, eigenvalues: &[f64]) -> Result<Self, WaveletError> {
        let bank = Self::new(params, lambda_max, num_scales)?;
        let (residual, lambda) = bank.frame_residual(&bank.residual_grid(eigenvalues));
        if residual > FRAME_TOLERANCE {
            return Err(WaveletError::FrameResidual {
                residual,
                lambda,
                tolerance: FRAME_TOLERANCE,
            });
        }
        Ok(bank)
    }

    /// The stock bank for a basis: checked on its eigenvalues plus the uniform grid.
    pub fn for_basis(basis: &SpectralBasis, num_scales: usize) -> Result<Self, WaveletError> {
        Self::checked(FilterParams::STOCK, basis.lambda_max(), num_scales, basis.eigenvalues())
    }

    pub fn params(&self) -> FilterParams {
        self.params
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// `K`, the number of wavelet scales (the bank has `K + 1` filters).
    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn num_filters(&self) -> usize {
        self.scales.len() + 1
    }

    /// `h(lambda) = B exp(-(C lambda / lambda_max)^3)`.
    pub fn scaling(&self, lambda: f64) -> f64 {
        self.params.b * (-(self.params.c * lambda / self.lambda_max).powi(3)).exp()
    }

    /// Response of filter `m` at `lambda`.
    pub fn g_of(&self, m: usize, lambda: f64) -> Result<f64, WaveletError> {
        if m > self.num_scales() {
            return Err(WaveletError::ScaleIndex {
                m,
                max: self.num_scales(),
            });
        }
        Ok(self.response(m, lambda))
    }

    /// Unchecked `g_of`; panics on an invalid index.
    pub fn response(&self, m: usize, lambda: f64) -> f64 {
        if m == 0 {
            self.scaling(lambda)
        } else {
            mexican_hat(self.params.a, self.scales[m - 1] * lambda)
        }
    }

    /// `G(lambda)`.
    pub fn frame_sum(&self, lambda: f64) -> f64 {
        (0..self.num_filters()).map(|m| self.response(m, lambda).powi(2)).sum()
    }

    /// Eigenvalues plus `RESIDUAL_GRID_SAMPLES` uniform points on `(0, lambda_max]`.
    pub fn residual_grid(&self, eigenvalues: &[f64]) -> Vec<f64> {
        let mut grid = eigenvalues.to_vec();
        grid.extend((1..=RESIDUAL_GRID_SAMPLES).map(|i| self.lambda_max * i as f64 / RESIDUAL_GRID_SAMPLES as f64));
        grid
    }

    /// `max |G - 1|` over `lambdas` and where it occurs.
    pub fn frame_residual(&self, lambdas: &[f64]) -> (f64, f64) {
        lambdas
            .iter()
            .map(|&l| ((self.frame_sum(l) - 1.0).abs(), l))
            .fold((0.0, f64::NAN), |best, cur| if cur.0 > best.0 { cur } else { best })
    }

    /// Least-squares refit of `A`, `B`, `C` (with `D`, `E` and the scales fixed)
    /// minimizing `sum (G - 1)^2` over `lambdas`; fails if the result still
    /// misses the frame tolerance.
    pub fn refit(&self, lambdas: &[f64]) -> Result<Self, WaveletError> {
        let mut p = Vector3::new(self.params.a, self.params.b, self.params.c);
        let with = |p: &Vector3<f64>| Self {
            params: FilterParams {
                a: p[0],
                b: p[1],
                c: p[2],
                ..self.params
            },
            ..self.clone()
        };
        let cost = |bank: &Self| lambdas.iter().map(|&l| (bank.frame_sum(l) - 1.0).powi(2)).sum::<f64>();
        let mut damping = 1e-3;
        let mut current = cost(&with(&p));
        for _ in 0..200 {
            let bank = with(&p);
            let mut jtj = Matrix3::zeros();
            let mut jtr = Vector3::zeros();
            for &l in lambdas {
                let h2 = bank.scaling(l).powi(2);
                let g2: f64 = (1..bank.num_filters()).map(|m| bank.response(m, l).powi(2)).sum();
                let r = h2 + g2 - 1.0;
                let x = l / bank.lambda_max;
                let j = Vector3::new(2.0 * g2 / p[0], 2.0 * h2 / p[1], -6.0 * h2 * p[2] * p[2] * x * x * x);
                jtj += j * j.transpose();
                jtr += j * r;
            }
            let mut improved = false;
            for _ in 0..20 {
                let mut lhs = jtj;
                for i in 0..3 {
                    lhs[(i, i)] *= 1.0 + damping;
                }
                let Some(step) = lhs.lu().solve(&(-jtr)) else {
                    damping *= 10.0;
                    continue;
                };
                let cand = p + step;
                let c = cost(&with(&cand));
                if cand.iter().all(|v| *v > 0.0) && c < current {
                    p = cand;
                    current = c;
                    damping = (damping * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
                damping *= 10.0;
            }
            if !improved {
                break;
            }
        }
        let bank = with(&p);
        let (residual, lambda) = bank.frame_residual(lambdas);
        if residual > FRAME_TOLERANCE {
            return Err(WaveletError::FrameResidual {
                residual,
                lambda,
                tolerance: FRAME_TOLERANCE,
            });
        }
        Ok(bank)
    }

    /// `key = value` lines: `A`, `B`, `C`, `D`, `E`, `K`, `lambda_max`.
    pub fn to_kv_text(&self) -> String {
        let p = &self.params;
        format!(
            "A = {:?}\nB = {:?}\nC = {:?}\nD = {:?}\nE = {:?}\nK = {}\nlambda_max = {:?}\n",
            p.a,
            p.b,
            p.c,
            p.d,
            p.e,
            self.num_scales(),
            self.lambda_max
        )
    }

    pub fn from_kv_text(text: &str) -> Result<Self, WaveletError> {
        let mut kv = BTreeMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| WaveletError::Parse(format!("expected key = value, got '{line}'")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<f64, WaveletError> {
            kv.get(k)
                .ok_or_else(|| WaveletError::Parse(format!("missing key {k}")))?
                .parse()
                .map_err(|_| WaveletError::Parse(format!("invalid value for {k}")))
        };
        let known = ["A", "B", "C", "D", "E", "K", "lambda_max"];
        if let Some(unknown) = kv.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(WaveletError::Parse(format!("unknown key {unknown}")));
        }
        let k = get("K")?;
        if k < 1.0 || k.fract() != 0.0 {
            return Err(WaveletError::Parse("K must be a positive integer".into()));
        }
        Self::new(
            FilterParams {
                a: get("A")?,
                b: get("B")?,
                c: get("C")?,
                d: get("D")?,
                e: get("E")?,
            },
            get("lambda_max")?,
            k as usize,
        )
    }

    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new("filterbank");
        h.update_str(&self.to_kv_text());
        h.finish()
    }
}

impl fmt::Display for FilterBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv_text())
    }
}

/// Per-scale filter responses at the basis eigenvalues: `(K + 1) x k`.
pub fn filter_table(basis: &SpectralBasis, bank: &FilterBank) -> DMatrix<f64> {
    DMatrix::from_fn(bank.num_filters(), basis.k(), |m, j| bank.response(m, basis.eigenvalues()[j]))
}

/// Dense `N x N` wavelet matrix of one filter; column `v` is `psi_{t_m, v}`
/// (or the scaling function `xi_v` for `m = 0`).
#[derive(Debug, Clone)]
pub struct WaveletMatrix {
    pub scale_index: usize,
    pub values: DMatrix<f64>,
}

/// `column v = a(v) sum_j g_m(lambda_j) phi_j(v) phi_j`.
///
/// With `threshold = Some(eps)`, entries below `eps` times their column's
/// largest magnitude are zeroed.
pub fn wavelet_matrix(basis: &SpectralBasis, bank: &FilterBank, m: usize, threshold: Option<f64>) -> Result<WaveletMatrix, WaveletError> {
    bank.g_of(m, 0.0)?;
    let phi = basis.eigenvectors();
    let mut weighted = phi.clone();
    for (j, mut col) in weighted.column_iter_mut().enumerate() {
        col *= bank.response(m, basis.eigenvalues()[j]);
    }
    let mut values = weighted * phi.transpose();
    let areas = basis.mass().areas();
    let n = values.nrows();
    values.as_mut_slice().par_chunks_mut(n).zip(areas).for_each(|(col, &a)| {
        col.iter_mut().for_each(|x| *x *= a);
        if let Some(eps) = threshold {
            let cut = eps * col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            col.iter_mut().filter(|x| x.abs() < cut).for_each(|x| *x = 0.0);
        }
    });
    Ok(WaveletMatrix { scale_index: m, values })
}

/// Wavelet coefficients `W_f(t_m, v)` for all `m = 0..=K`; row `m`, column `v`.
/// Row 0 holds the scaling coefficients `S_f`.
pub fn wavelet_coeffs(basis: &SpectralBasis, bank: &FilterBank, f: &[f64]) -> Result<DMatrix<f64>, WaveletError> {
    let sigma = basis.project(f).map_err(|_| WaveletError::DimensionMismatch {
        expected: basis.num_vertices(),
        got: f.len(),
    })?;
    Ok(coeffs_from_spectrum(basis, bank, &sigma))
}

/// `W(m, v) = a(v) sum_j g_m(lambda_j) sigma_j phi_j(v)`.
pub fn coeffs_from_spectrum(basis: &SpectralBasis, bank: &FilterBank, sigma: &[f64]) -> DMatrix<f64> {
    let g = filter_table(basis, bank);
    let weighted = DMatrix::from_fn(bank.num_filters(), basis.k(), |m, j| g[(m, j)] * sigma[j]);
    let mut w = weighted * basis.eigenvectors().transpose();
    for (mut col, &a) in w.column_iter_mut().zip(basis.mass().areas()) {
        col *= a;
    }
    w
}

/// `f = sum_m sum_v a(v)^-1 W(m, v) psi_{t_m, v}`, evaluated spectrally:
/// `sum_m sum_j g_m(lambda_j) (sum_v W(m, v) phi_j(v)) phi_j`.
pub fn reconstruct(basis: &SpectralBasis, bank: &FilterBank, coeffs: &DMatrix<f64>) -> Result<Vec<f64>, WaveletError> {
    if coeffs.nrows() != bank.num_filters() {
        return Err(WaveletError::DimensionMismatch {
            expected: bank.num_filters(),
            got: coeffs.nrows(),
        });
    }
    if coeffs.ncols() != basis.num_vertices() {
        return Err(WaveletError::DimensionMismatch {
            expected: basis.num_vertices(),
            got: coeffs.ncols(),
        });
    }
    let g = filter_table(basis, bank);
    // (K+1) x k: projections of each coefficient row onto phi_j.
    let proj = coeffs * basis.eigenvectors();
    let spectrum: Vec<f64> = (0..basis.k())
        .map(|j| (0..bank.num_filters()).map(|m| g[(m, j)] * proj[(m, j)]).sum())
        .collect();
    Ok(basis.synthesize(&spectrum).expect("spectrum has basis length"))
}

/// 1-based filter numbers `floor(linspace(32, 1, n + 2))` with both ends
/// dropped, where `n = max(ceil(num / 32), 3)`.
pub fn select_filter_numbers(num: usize) -> Vec<usize> {
    let num = num.max(1);
    let points = num.div_ceil(32).max(3) + 2;
    let step = 31.0 / (points - 1) as f64;
    (1..points - 1).map(|i| (32.0 - step * i as f64).floor() as usize).collect()
}

/// Scale set for an output dimension, as filter indices `m` (filter number - 1).
pub fn select_scales(num: usize) -> Vec<usize> {
    select_filter_numbers(num).into_iter().map(|f| f - 1).collect()
}

//! Heat and wave kernel signatures.

use nalgebra::DMatrix;

use super::{DescriptorError, DescriptorField, DescriptorKind, DescriptorMeta};
use crate::spectral::SpectralBasis;

fn check(basis: &SpectralBasis, num: usize) -> Result<(), DescriptorError> {
    if num == 0 {
        return Err(DescriptorError::InvalidDimension { got: 0, max: usize::MAX });
    }
    if basis.k() < 3 {
        return Err(DescriptorError::BasisTooSmall { needed: 3, got: basis.k() });
    }
    Ok(())
}

fn meta(kind: DescriptorKind, basis: &SpectralBasis, num: usize) -> DescriptorMeta {
    DescriptorMeta {
        kind,
        k: basis.k(),
        num_scales: num,
        samples: num,
        bank_hash: String::new(),
        source_hash: String::new(),
    }
}

/// `num` diffusion times log-spaced over `[4 ln 10 / lambda_max, 4 ln 10 / lambda_1]`.
pub fn hks_times(basis: &SpectralBasis, num: usize) -> Vec<f64> {
    let c = 4.0 * 10f64.ln();
    let lo = (c / basis.lambda_max()).ln();
    let hi = (c / basis.eigenvalues()[1]).ln();
    (0..num)
        .map(|i| {
            let s = if num == 1 { 0.0 } else { i as f64 / (num - 1) as f64 };
            (lo + (hi - lo) * s).exp()
        })
        .collect()
}

/// `h_t(v) = sum_j exp(-lambda_j t) phi_j(v)^2`.
pub fn hks(basis: &SpectralBasis, num: usize) -> Result<DescriptorField, DescriptorError> {
    check(basis, num)?;
    let times = hks_times(basis, num);
    let phi2 = basis.eigenvectors().map(|x| x * x);
    let decay = DMatrix::from_fn(basis.k(), num, |j, t| (-basis.eigenvalues()[j] * times[t]).exp());
    DescriptorField::new(phi2 * decay, meta(DescriptorKind::Hks, basis, num))
}

/// Log-energies and band width: `num` centres between `log lambda_1 + 2 sigma`
/// and `log lambda_max - 2 sigma`, with `sigma = 7 delta`, `delta` the energy
/// spacing.
pub fn wks_energies(basis: &SpectralBasis, num: usize) -> (Vec<f64>, f64) {
    let lo = basis.eigenvalues()[1].ln();
    let hi = basis.lambda_max().ln();
    let sigma = 7.0 * (hi - lo) / num as f64;
    let (lo, hi) = (lo + 2.0 * sigma, hi - 2.0 * sigma);
    let e = (0..num)
        .map(|i| if num == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (num - 1) as f64 })
        .collect();
    (e, sigma)
}

/// `WKS(v, e) = sum_{j >= 1} phi_j(v)^2 w_j(e) / sum_{j >= 1} w_j(e)` with a
/// Gaussian `w_j(e)` in `log lambda_j`.
pub fn wks(basis: &SpectralBasis, num: usize) -> Result<DescriptorField, DescriptorError> {
    check(basis, num)?;
    let (energies, sigma) = wks_energies(basis, num);
    let logl: Vec<f64> = basis.eigenvalues().iter().map(|l| l.max(f64::MIN_POSITIVE).ln()).collect();
    let mut w = DMatrix::from_fn(basis.k(), num, |j, e| {
        if j == 0 {
            0.0
        } else {
            (-(energies[e] - logl[j]).powi(2) / (2.0 * sigma * sigma)).exp()
        }
    });
    for mut col in w.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    let phi2 = basis.eigenvectors().map(|x| x * x);
    DescriptorField::new(phi2 * w, meta(DescriptorKind::Wks, basis, num))
}

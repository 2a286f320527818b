//! Central finite differences for checking hand-written gradients.

use nalgebra::DMatrix;

pub const STEP: f64 = 1e-5;

/// `d f / d x` by central differences with step `h`, entry by entry.
pub fn numeric_gradient<F: FnMut(&DMatrix<f64>) -> f64>(x: &DMatrix<f64>, mut f: F, h: f64) -> DMatrix<f64> {
    let mut probe = x.clone();
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + h;
        let up = f(&probe);
        probe[k] = orig - h;
        let down = f(&probe);
        probe[k] = orig;
        g[k] = (up - down) / (2.0 * h);
    }
    g
}

/// Largest entrywise deviation, relative to the largest numeric entry.
pub fn relative_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    let scale = numeric.amax().max(analytic.amax());
    if scale == 0.0 {
        return 0.0;
    }
    (analytic - numeric).amax() / scale
}

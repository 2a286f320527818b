//! Training losses with their gradients.

use nalgebra::DMatrix;

use crate::MgcnError;

/// Added under the square root of every descriptor distance so coincident
/// pairs stay differentiable.
pub const DISTANCE_EPS: f64 = 1e-12;
pub const HARDNET_MARGIN: f64 = 1.0;

/// Mean softmax cross-entropy over rows; returns the loss and `dL/dlogits`.
pub fn cross_entropy(logits: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, DMatrix<f64>), MgcnError> {
    let (n, d) = logits.shape();
    if labels.len() != n {
        return Err(MgcnError::DimensionMismatch {
            context: "cross-entropy labels",
            expected: n,
            got: labels.len(),
        });
    }
    if let Some((vertex, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= d) {
        return Err(MgcnError::InvalidLabel { vertex, label, classes: d });
    }
    let mut grad = DMatrix::zeros(n, d);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let top = row.max();
        let z: f64 = row.iter().map(|&l| (l - top).exp()).sum();
        loss += z.ln() + top - row[y];
        for c in 0..d {
            grad[(i, c)] = (row[c] - top).exp() / z / n as f64;
        }
        grad[(i, y)] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}

/// Pairwise `D_ij = |a_i - b_j|`.
pub fn distance_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let na: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let nb: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
    let g = a * b.transpose();
    DMatrix::from_fn(na.len(), nb.len(), |i, j| ((na[i] + nb[j] - 2.0 * g[(i, j)]).max(0.0) + DISTANCE_EPS).sqrt())
}

/// Hardest-in-batch triplet margin loss.
///
/// Rows `i` of `a` and `b` are matching pairs. Each anchor's negative is the
/// closest non-matching descriptor in either direction,
/// `min_{j != i} min(D_ij, D_ji)`, and the loss is the mean over `i` of
/// `max(0, margin + D_ii - negative_i)`. Returns `(loss, dL/da, dL/db)`.
pub fn hardnet(a: &DMatrix<f64>, b: &DMatrix<f64>, margin: f64) -> Result<(f64, DMatrix<f64>, DMatrix<f64>), MgcnError> {
    let m = a.nrows();
    if b.shape() != a.shape() {
        return Err(MgcnError::DimensionMismatch {
            context: "hardnet descriptor pairs",
            expected: m,
            got: b.nrows(),
        });
    }
    if m < 2 {
        return Err(MgcnError::TooFewPairs { needed: 2, got: m });
    }
    let d = distance_matrix(a, b);
    let mut da = DMatrix::zeros(m, a.ncols());
    let mut db = DMatrix::zeros(m, a.ncols());
    let w = 1.0 / m as f64;
    // Adds `coef * dD(p, q)` for `D(p, q) = |a_p - b_q|`.
    let add = |p: usize, q: usize, coef: f64, da: &mut DMatrix<f64>, db: &mut DMatrix<f64>| {
        let diff = (a.row(p) - b.row(q)) * (coef / d[(p, q)]);
        let mut ra = da.row_mut(p);
        ra += &diff;
        let mut rb = db.row_mut(q);
        rb -= &diff;
    };
    let mut loss = 0.0;
    for i in 0..m {
        // (distance, p, q) of the hardest negative; row entries win ties.
        let mut best = (f64::INFINITY, 0, 0);
        for j in (0..m).filter(|&j| j != i) {
            if d[(i, j)] < best.0 {
                best = (d[(i, j)], i, j);
            }
        }
        for j in (0..m).filter(|&j| j != i) {
            if d[(j, i)] < best.0 {
                best = (d[(j, i)], j, i);
            }
        }
        let l = margin + d[(i, i)] - best.0;
        if l > 0.0 {
            loss += l * w;
            add(i, i, w, &mut da, &mut db);
            add(best.1, best.2, -w, &mut da, &mut db);
        }
    }
    Ok((loss, da, db))
}

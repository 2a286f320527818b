//! Block Lanczos with full reorthogonalization for the largest eigenpairs of a
//! symmetric positive definite operator.
//!
//! A block start (rather than a single vector) is what lets repeated
//! eigenvalues, such as the bands of a sphere, be recovered with their full
//! multiplicity.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug)]
pub struct RitzPairs {
    /// Descending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub struct LanczosParams {
    pub count: usize,
    pub block: usize,
    pub max_dim: usize,
    pub seed: u64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthogonalizes `v` against `basis` (two classical Gram-Schmidt passes) and
/// normalizes it. Returns `false` if nothing is left.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let before = dot(v, v).sqrt();
    if before == 0.0 {
        return false;
    }
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|q| dot(q, v)).collect();
        for (q, c) in basis.iter().zip(coeffs) {
            axpy(-c, q, v);
        }
    }
    let after = dot(v, v).sqrt();
    if after <= 1e-10 * before {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= after);
    true
}

/// Runs until `converged` accepts the current top `count` Ritz pairs, or the
/// Krylov dimension reaches `max_dim` (returns `Err` with the last pairs).
pub fn largest_eigenpairs<Op, Conv>(
    n: usize,
    params: &LanczosParams,
    mut op: Op,
    mut converged: Conv,
) -> Result<RitzPairs, RitzPairs>
where
    Op: FnMut(&[f64]) -> Vec<f64>,
    Conv: FnMut(&RitzPairs) -> bool,
{
    let k = params.count;
    let max_dim = params.max_dim.min(n).max(k);
    let block = params.block.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let random_vec = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();

    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut h = DMatrix::<f64>::zeros(0, 0);

    let mut pending: Vec<Vec<f64>> = (0..block).map(|_| random_vec(&mut rng)).collect();
    let mut next_check = (k + block).max(2 * k).min(max_dim);

    loop {
        // Admit the pending block into the basis.
        let mut admitted = 0;
        for mut v in pending.drain(..) {
            if q.len() >= max_dim {
                break;
            }
            let mut ok = orthonormalize(&mut v, &q);
            let mut attempts = 0;
            while !ok && attempts < 8 && q.len() < n {
                v = random_vec(&mut rng);
                ok = orthonormalize(&mut v, &q);
                attempts += 1;
            }
            if !ok {
                continue;
            }
            let pv = op(&v);
            q.push(v);
            p.push(pv);
            admitted += 1;
        }
        let m = q.len();
        let old = h.nrows();
        h = h.resize(m, m, 0.0);
        for j in old..m {
            for i in 0..=j {
                // Symmetrize from both sides to damp solve roundoff.
                let v = 0.5 * (dot(&q[i], &p[j]) + dot(&q[j], &p[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }

        let exhausted = m >= max_dim || admitted == 0;
        if m >= next_check || exhausted {
            let pairs = ritz(&h, &q, k.min(m));
            if pairs.values.len() == k && converged(&pairs) {
                return Ok(pairs);
            }
            if exhausted {
                return Err(pairs);
            }
            next_check = (m + block.max(m / 4)).min(max_dim);
        }
        pending = p[m - admitted..].to_vec();
    }
}

fn ritz(h: &DMatrix<f64>, q: &[Vec<f64>], k: usize) -> RitzPairs {
    let n = q[0].len();
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        values.push(eig.eigenvalues[c]);
        let mut v = vec![0.0; n];
        for (i, qi) in q.iter().enumerate() {
            axpy(eig.eigenvectors[(i, c)], qi, &mut v);
        }
        vectors.push(v);
    }
    RitzPairs { values, vectors }
}

//! Envelope (profile) Cholesky factorization with reverse Cuthill-McKee ordering.
//!
//! Mesh Laplacians have small bandwidth after RCM, and fill-in of a Cholesky
//! factor never leaves the row envelope, so a profile store is sufficient.

use std::collections::VecDeque;

use crate::sparse::SparseSymMatrix;

#[derive(Debug)]
pub struct EnvelopeCholesky {
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// First stored column of each (permuted) row.
    first: Vec<usize>,
    /// Start of each row's segment in `vals`; row `i` holds columns `first[i]..=i`.
    start: Vec<usize>,
    vals: Vec<f64>,
}

/// Reverse Cuthill-McKee ordering starting from a pseudo-peripheral vertex.
pub fn reverse_cuthill_mckee(m: &SparseSymMatrix) -> Vec<usize> {
    let n = m.dim();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| m.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let bfs_levels = |root: usize| -> (usize, usize) {
        let mut level = vec![usize::MAX; n];
        let mut q = VecDeque::from([root]);
        level[root] = 0;
        let mut last = root;
        while let Some(v) = q.pop_front() {
            last = v;
            for &w in &adj[v] {
                if level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    q.push_back(w);
                }
            }
        }
        (last, level[last])
    };

    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited vertex exists");
        // A few sweeps toward a far, low-degree vertex.
        let mut root = seed;
        let mut depth = 0;
        for _ in 0..4 {
            let (far, d) = bfs_levels(root);
            if d <= depth {
                break;
            }
            depth = d;
            root = far;
        }
        let mut q = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

impl EnvelopeCholesky {
    /// Factors a symmetric positive definite matrix; `None` if a pivot is not positive.
    pub fn factor(m: &SparseSymMatrix) -> Option<Self> {
        let n = m.dim();
        let perm = reverse_cuthill_mckee(m);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in m.row(old) {
                first[new] = first[new].min(inv[j]);
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut vals = vec![0.0; start[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in m.row(old) {
                let c = inv[j];
                if c <= new {
                    vals[start[new] + c - first[new]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = vals[start[i] + j - fi];
                let ri = &vals[start[i] + lo - fi..start[i] + j - fi];
                let rj = &vals[start[j] + lo - fj..start[j] + j - fj];
                s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                if j == i {
                    if !(s > 0.0) {
                        return None;
                    }
                    vals[start[i] + i - fi] = s.sqrt();
                } else {
                    vals[start[i] + j - fi] = s / vals[start[j] + j - fj];
                }
            }
        }
        Some(Self {
            perm,
            first,
            start,
            vals,
        })
    }

    pub fn stored_entries(&self) -> usize {
        self.vals.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // Forward: L y = b.
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.vals[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        // Backward: L^T x = y, column-oriented over the stored rows.
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.vals[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (k, a) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= a * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

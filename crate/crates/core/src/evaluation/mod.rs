//! Geodesic distances, nearest-neighbor matching and correspondence metrics.

mod io;

pub use io::{read_index_file, write_index_file};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::TriMesh;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for {len} target vertices")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("symmetric ground truth required but not provided")]
    MissingSymmetric,
    #[error("kmax {kmax} exceeds target vertex count {n}")]
    KMax { kmax: usize, n: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Predicted target vertex for every source vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceMap {
    pub targets: Vec<usize>,
    pub source_hash: Option<String>,
    pub target_hash: Option<String>,
}

impl CorrespondenceMap {
    pub fn new(targets: Vec<usize>) -> Self {
        Self {
            targets,
            source_hash: None,
            target_hash: None,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Fraction of source vertices mapped exactly to `truth`.
    pub fn exact_match_rate(&self, truth: &[usize]) -> f64 {
        let hits = self.targets.iter().zip(truth).filter(|(a, b)| a == b).count();
        hits as f64 / self.targets.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub direct: Vec<usize>,
    pub symmetric: Option<Vec<usize>>,
}

impl GroundTruth {
    pub fn identity(n: usize) -> Self {
        Self {
            direct: (0..n).collect(),
            symmetric: None,
        }
    }

    pub fn with_symmetric(mut self, symmetric: Vec<usize>) -> Self {
        self.symmetric = Some(symmetric);
        self
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Shortest-path distances over the edge graph, weighted by edge length.
pub fn geodesic_from(mesh: &TriMesh, source: usize) -> Vec<f64> {
    geodesic_with_adjacency(mesh, &mesh.adjacency(), source)
}

fn geodesic_with_adjacency(mesh: &TriMesh, adj: &[Vec<usize>], source: usize) -> Vec<f64> {
    let v = mesh.vertices();
    let mut dist = vec![f64::INFINITY; v.len()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::from([HeapItem(0.0, source)]);
    while let Some(HeapItem(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        for &j in &adj[i] {
            let nd = d + (v[i] - v[j]).norm();
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(HeapItem(nd, j));
            }
        }
    }
    dist
}

/// Breadth-first edge-hop distances.
pub fn hop_distances(mesh: &TriMesh, source: usize) -> Vec<usize> {
    let adj = mesh.adjacency();
    let mut hops = vec![usize::MAX; mesh.num_vertices()];
    hops[source] = 0;
    let mut q = VecDeque::from([source]);
    while let Some(i) = q.pop_front() {
        for &j in &adj[i] {
            if hops[j] == usize::MAX {
                hops[j] = hops[i] + 1;
                q.push_back(j);
            }
        }
    }
    hops
}

fn sq_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols()).map(|c| (a[(i, c)] - b[(j, c)]).powi(2)).sum()
}

/// Row-wise L2 nearest neighbor of `a` in `b`; ties go to the lowest index.
pub fn nn_match(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<CorrespondenceMap, EvalError> {
    if a.ncols() != b.ncols() {
        return Err(EvalError::DimensionMismatch {
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    if b.nrows() == 0 {
        return Err(EvalError::DimensionMismatch { expected: 1, got: 0 });
    }
    // Row-major copies keep the inner loop contiguous.
    let bt = b.transpose();
    let targets = (0..a.nrows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = a.row(i).iter().copied().collect();
            let mut best = (f64::INFINITY, 0);
            for (j, col) in bt.column_iter().enumerate() {
                let d: f64 = row.iter().zip(col.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect();
    Ok(CorrespondenceMap::new(targets))
}

fn check_indices(map: &[usize], n: usize) -> Result<(), EvalError> {
    match map.iter().find(|&&t| t >= n) {
        Some(&index) => Err(EvalError::IndexOutOfRange { index, len: n }),
        None => Ok(()),
    }
}

/// Per-source-vertex geodesic distance on `target` between `predicted` and
/// `truth`, divided by the square root of the target surface area.
pub fn normalized_errors(predicted: &[usize], truth: &[usize], target: &TriMesh) -> Result<Vec<f64>, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    check_indices(predicted, target.num_vertices())?;
    check_indices(truth, target.num_vertices())?;
    let adj = target.adjacency();
    let mut sources: Vec<usize> = truth.to_vec();
    sources.sort_unstable();
    sources.dedup();
    let needed: Vec<usize> = sources
        .into_iter()
        .filter(|&s| predicted.iter().zip(truth).any(|(p, t)| *t == s && p != t))
        .collect();
    let fields: HashMap<usize, Vec<f64>> = needed
        .par_iter()
        .map(|&s| (s, geodesic_with_adjacency(target, &adj, s)))
        .collect();
    let scale = target.surface_area().sqrt();
    Ok(predicted
        .iter()
        .zip(truth)
        .map(|(&p, &t)| if p == t { 0.0 } else { fields[&t][p] / scale })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicError {
    pub direct: f64,
    pub symmetric: Option<f64>,
}

impl GeodesicError {
    /// Values multiplied by 1000, the convention of published tables.
    pub fn scaled(&self) -> Self {
        Self {
            direct: self.direct * 1e3,
            symmetric: self.symmetric.map(|s| s * 1e3),
        }
    }
}

/// Direct and per-vertex errors; the symmetric variant is the pointwise min
/// against the symmetric ground truth.
fn error_fields(map: &CorrespondenceMap, gt: &GroundTruth, target: &TriMesh) -> Result<(Vec<f64>, Option<Vec<f64>>), EvalError> {
    let direct = normalized_errors(&map.targets, &gt.direct, target)?;
    let symmetric = match &gt.symmetric {
        Some(sym) => {
            let s = normalized_errors(&map.targets, sym, target)?;
            Some(direct.iter().zip(&s).map(|(a, b)| a.min(*b)).collect())
        }
        None => None,
    };
    Ok((direct, symmetric))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

pub fn average_geodesic_error(map: &CorrespondenceMap, gt: &GroundTruth, target: &TriMesh) -> Result<GeodesicError, EvalError> {
    let (direct, symmetric) = error_fields(map, gt, target)?;
    Ok(GeodesicError {
        direct: mean(&direct),
        symmetric: symmetric.as_deref().map(mean),
    })
}

/// Like [`average_geodesic_error`] but fails when no symmetric map is given.
pub fn symmetric_geodesic_error(map: &CorrespondenceMap, gt: &GroundTruth, target: &TriMesh) -> Result<f64, EvalError> {
    if gt.symmetric.is_none() {
        return Err(EvalError::MissingSymmetric);
    }
    Ok(average_geodesic_error(map, gt, target)?.symmetric.expect("symmetric map present"))
}

/// Fraction of per-vertex errors at most `r`, for each radius.
pub fn cge_from_errors(errors: &[f64], radii: &[f64]) -> Vec<f64> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    radii.iter().map(|&r| sorted.partition_point(|&e| e <= r) as f64 / n).collect()
}

/// Cumulative geodesic error curve (direct ground truth).
pub fn cge_curve(map: &CorrespondenceMap, gt: &GroundTruth, target: &TriMesh, radii: &[f64]) -> Result<Vec<f64>, EvalError> {
    let (direct, _) = error_fields(map, gt, target)?;
    Ok(cge_from_errors(&direct, radii))
}

/// Symmetry-aware cumulative geodesic error curve.
pub fn cge_curve_symmetric(map: &CorrespondenceMap, gt: &GroundTruth, target: &TriMesh, radii: &[f64]) -> Result<Vec<f64>, EvalError> {
    let (_, sym) = error_fields(map, gt, target)?;
    Ok(cge_from_errors(&sym.ok_or(EvalError::MissingSymmetric)?, radii))
}

/// Zero-based rank of the ground-truth target among all targets ordered by
/// descriptor distance (ties resolved toward lower indices).
pub fn match_ranks(a: &DMatrix<f64>, b: &DMatrix<f64>, truth: &[usize]) -> Result<Vec<usize>, EvalError> {
    if a.ncols() != b.ncols() {
        return Err(EvalError::DimensionMismatch {
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    if truth.len() != a.nrows() {
        return Err(EvalError::DimensionMismatch {
            expected: a.nrows(),
            got: truth.len(),
        });
    }
    check_indices(truth, b.nrows())?;
    Ok((0..a.nrows())
        .into_par_iter()
        .map(|i| {
            let g = truth[i];
            let dg = sq_dist(a, i, b, g);
            (0..b.nrows())
                .filter(|&j| {
                    let d = sq_dist(a, i, b, j);
                    d < dg || (d == dg && j < g)
                })
                .count()
        })
        .collect())
}

/// `curve[k - 1]` = fraction of source vertices whose ground truth is among
/// their `k` nearest targets, for `k = 1..=kmax`.
pub fn cmc_curve(a: &DMatrix<f64>, b: &DMatrix<f64>, gt: &GroundTruth, kmax: usize) -> Result<Vec<f64>, EvalError> {
    if kmax > b.nrows() {
        return Err(EvalError::KMax { kmax, n: b.nrows() });
    }
    let ranks = match_ranks(a, b, &gt.direct)?;
    let mut counts = vec![0usize; kmax];
    for r in ranks {
        if r < kmax {
            counts[r] += 1;
        }
    }
    let n = a.nrows().max(1) as f64;
    let mut acc = 0;
    Ok(counts
        .into_iter()
        .map(|c| {
            acc += c;
            acc as f64 / n
        })
        .collect())
}

/// Metrics of one matching run.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub error: GeodesicError,
    pub exact_match: f64,
    pub radii: Vec<f64>,
    pub cge: Vec<f64>,
    pub cge_symmetric: Option<Vec<f64>>,
    /// Present when descriptors were available.
    pub cmc: Option<Vec<f64>>,
}

/// `0, 0.0025, ..., 0.25` normalized geodesic radii.
pub fn default_radii() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.0025).collect()
}

impl EvalReport {
    pub fn compute(map: &CorrespondenceMap, gt: &GroundTruth, target: &TriMesh, radii: &[f64]) -> Result<Self, EvalError> {
        let (direct, sym) = error_fields(map, gt, target)?;
        Ok(Self {
            error: GeodesicError {
                direct: mean(&direct),
                symmetric: sym.as_deref().map(mean),
            },
            exact_match: map.exact_match_rate(&gt.direct),
            radii: radii.to_vec(),
            cge: cge_from_errors(&direct, radii),
            cge_symmetric: sym.map(|s| cge_from_errors(&s, radii)),
            cmc: None,
        })
    }

    /// `key = value` summary block.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "direct_error = {:.16e}\ndirect_error_x1e3 = {:.16e}\nexact_match = {:.16e}\n",
            self.error.direct,
            self.error.direct * 1e3,
            self.exact_match
        );
        if let Some(sym) = self.error.symmetric {
            s += &format!("symmetric_error = {sym:.16e}\nsymmetric_error_x1e3 = {:.16e}\n", sym * 1e3);
        }
        if let Some(cmc) = &self.cmc {
            s += &format!("cmc_1 = {:.16e}\n", cmc[0]);
        }
        s
    }

    /// CGE table: `radius,cge[,cge_symmetric]`.
    pub fn cge_csv(&self) -> String {
        let mut s = String::from(if self.cge_symmetric.is_some() { "radius,cge,cge_symmetric\n" } else { "radius,cge\n" });
        for (i, r) in self.radii.iter().enumerate() {
            s += &format!("{r:.16e},{:.16e}", self.cge[i]);
            if let Some(sym) = &self.cge_symmetric {
                s += &format!(",{:.16e}", sym[i]);
            }
            s.push('\n');
        }
        s
    }

    /// CMC table: `k,cmc`.
    pub fn cmc_csv(&self) -> Option<String> {
        self.cmc.as_ref().map(|c| {
            let mut s = String::from("k,cmc\n");
            for (k, v) in c.iter().enumerate() {
                s += &format!("{},{v:.16e}\n", k + 1);
            }
            s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use nalgebra::{Matrix3, Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, n: usize) -> CorrespondenceMap {
        CorrespondenceMap::new((0..n).map(|_| rng.random_range(0..n)).collect())
    }

    #[test]
    fn geodesic_to_self_and_on_strip() {
        let strip = shapes::strip(10, 0.5);
        let d = geodesic_from(&strip, 0);
        assert_eq!(d[0], 0.0);
        for i in 0..=10 {
            assert!((d[i] - 0.5 * i as f64).abs() < 1e-12, "{i}: {}", d[i]);
        }
    }

    #[test]
    fn sphere_antipodes() {
        let sphere = shapes::icosphere(3, 1.0);
        let v = sphere.vertices();
        let far = (0..v.len()).max_by(|&a, &b| (v[a] - v[0]).norm().total_cmp(&(v[b] - v[0]).norm())).unwrap();
        assert!((v[far] + v[0]).norm() < 1e-9);
        let d = geodesic_from(&sphere, 0)[far];
        assert!(d >= std::f64::consts::PI && d <= 1.1 * std::f64::consts::PI, "{d}");
    }

    #[test]
    fn nn_identity_ties_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(40, 5, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(nn_match(&a, &a).unwrap().targets, (0..40).collect::<Vec<_>>());

        let mut b = DMatrix::from_element(10, 2, 100.0);
        b.row_mut(3).copy_from_slice(&[1.0, 0.0]);
        b.row_mut(7).copy_from_slice(&[-1.0, 0.0]);
        let q = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        assert_eq!(nn_match(&q, &b).unwrap().targets, vec![3]);

        let b = DMatrix::from_fn(60, 5, |_, _| rng.random_range(-1.0..1.0));
        let got = nn_match(&a, &b).unwrap().targets;
        for i in 0..40 {
            let mut best = 0;
            for j in 1..60 {
                if sq_dist(&a, i, &b, j) < sq_dist(&a, i, &b, best) {
                    best = j;
                }
            }
            assert_eq!(got[i], best);
        }
        assert!(nn_match(&a, &DMatrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn identity_map_has_no_error() {
        let mesh = shapes::bent_bar(&shapes::BarParams::default(), 0.5);
        let n = mesh.num_vertices();
        let gt = GroundTruth::identity(n).with_symmetric((0..n).rev().collect());
        let map = CorrespondenceMap::new((0..n).collect());
        let e = average_geodesic_error(&map, &gt, &mesh).unwrap();
        assert_eq!(e.direct, 0.0);
        assert_eq!(e.symmetric, Some(0.0));
        let radii = default_radii();
        assert!(cge_curve(&map, &gt, &mesh, &radii).unwrap().iter().all(|&c| c == 1.0));
    }

    #[test]
    fn constant_map_error() {
        let mesh = shapes::bent_bar(&shapes::BarParams::default(), 0.5);
        let n = mesh.num_vertices();
        let map = CorrespondenceMap::new(vec![0; n]);
        let e = average_geodesic_error(&map, &GroundTruth::identity(n), &mesh).unwrap();
        let oracle = geodesic_from(&mesh, 0).iter().sum::<f64>() / n as f64 / mesh.surface_area().sqrt();
        assert!((e.direct - oracle).abs() < 1e-12 * oracle);
        assert!((e.scaled().direct - 1e3 * oracle).abs() < 1e-9 * oracle);
        assert!(e.symmetric.is_none());
        assert!(matches!(symmetric_geodesic_error(&map, &GroundTruth::identity(n), &mesh), Err(EvalError::MissingSymmetric)));
    }

    #[test]
    fn symmetric_never_exceeds_direct_and_curves_are_monotone() {
        let mesh = shapes::icosphere(2, 1.0);
        let n = mesh.num_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sym: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let gt = GroundTruth::identity(n).with_symmetric(sym);
        let radii = default_radii();
        for _ in 0..5 {
            let map = random_map(&mut rng, n);
            let e = average_geodesic_error(&map, &gt, &mesh).unwrap();
            assert!(e.symmetric.unwrap() <= e.direct);
            let c = cge_curve(&map, &gt, &mesh, &radii).unwrap();
            assert!(c.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(c[0], map.exact_match_rate(&gt.direct));
            // Brute-force oracle for the curve.
            let errs = normalized_errors(&map.targets, &gt.direct, &mesh).unwrap();
            for (r, v) in radii.iter().zip(&c) {
                let count = errs.iter().filter(|&&e| e <= *r).count();
                assert_eq!(*v, count as f64 / n as f64);
            }
        }
    }

    #[test]
    fn normalized_metrics_ignore_rigid_motion_and_scale() {
        let mesh = shapes::bent_bar(&shapes::BarParams::default(), 0.8);
        let n = mesh.num_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let map = random_map(&mut rng, n);
        let gt = GroundTruth::identity(n);
        let base = average_geodesic_error(&map, &gt, &mesh).unwrap().direct;
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let moved = mesh.transformed(rot.matrix(), &Vector3::new(1.0, -2.0, 5.0)).unwrap();
        let scaled = mesh.transformed(&(Matrix3::identity() * 2.0), &Vector3::zeros()).unwrap();
        for other in [moved, scaled] {
            let e = average_geodesic_error(&map, &gt, &other).unwrap().direct;
            assert!((e - base).abs() <= 1e-8 * base);
        }
    }

    #[test]
    fn cmc_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 30;
        let a = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
        let gt = GroundTruth::identity(n);
        let c = cmc_curve(&a, &a, &gt, n).unwrap();
        assert_eq!(c[0], 1.0);
        assert_eq!(c[n - 1], 1.0);
        assert!(matches!(cmc_curve(&a, &a, &gt, n + 1), Err(EvalError::KMax { .. })));

        // Random descriptors: CMC(1) averages to about 1/N.
        let trials = 400;
        let mut total = 0.0;
        for _ in 0..trials {
            let a = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
            let c = cmc_curve(&a, &b, &gt, n).unwrap();
            assert!(c.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(c[n - 1], 1.0);
            total += c[0];
        }
        let mean = total / trials as f64;
        assert!((mean - 1.0 / n as f64).abs() < 0.01, "{mean}");
    }

    #[test]
    fn cmc_first_entry_matches_nn_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = DMatrix::from_fn(50, 3, |_, _| rng.random_range(0..4) as f64);
        let b = DMatrix::from_fn(50, 3, |_, _| rng.random_range(0..4) as f64);
        let gt = GroundTruth::identity(50);
        let nn = nn_match(&a, &b).unwrap().exact_match_rate(&gt.direct);
        assert_eq!(cmc_curve(&a, &b, &gt, 1).unwrap()[0], nn);
    }

    #[test]
    fn report_tables() {
        let mesh = shapes::strip(4, 1.0);
        let n = mesh.num_vertices();
        let map = CorrespondenceMap::new((0..n).collect());
        let r = EvalReport::compute(&map, &GroundTruth::identity(n), &mesh, &[0.0, 0.1]).unwrap();
        assert!(r.summary().contains("exact_match = 1.0"));
        assert_eq!(r.cge_csv().lines().count(), 3);
        assert!(r.cmc_csv().is_none());
    }
}

use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::TriMesh;
use crate::sparse::SparseSymMatrix;

/// Lumped (diagonal) mass matrix: one positive area per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct MassDiagonal {
    areas: Vec<f64>,
    total: f64,
}

impl MassDiagonal {
    pub fn new(areas: Vec<f64>) -> Self {
        assert!(areas.iter().all(|&a| a > 0.0 && a.is_finite()), "vertex areas must be positive");
        let total = areas.iter().sum();
        Self { areas, total }
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    /// `<f, g>_A = f^T A g`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.areas.iter().zip(f).zip(g).map(|((a, x), y)| a * x * y).sum()
    }
}

/// Barycentric lumping: each triangle gives a third of its area to each corner.
pub fn lumped_areas(mesh: &TriMesh) -> MassDiagonal {
    let mut areas = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let third = mesh.triangle_area(t) / 3.0;
        for &v in tri {
            areas[v] += third;
        }
    }
    MassDiagonal::new(areas)
}

fn cot(u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    u.dot(v) / u.cross(v).norm()
}

/// Positive semidefinite cotangent Laplacian.
///
/// Off-diagonal `L_ij = -(cot a_ij + cot b_ij) / 2` summed over the (one or two)
/// triangles sharing edge `ij`; the diagonal is minus the off-diagonal row sum.
/// Triangles are visited in index order, so the result is bit-stable.
pub fn cotangent_laplacian(mesh: &TriMesh) -> SparseSymMatrix {
    let n = mesh.num_vertices();
    let p = mesh.vertices();
    let mut upper: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &[a, b, c] in mesh.triangles() {
        // Each corner's angle weights the opposite edge.
        for (k, i, j) in [(a, b, c), (b, c, a), (c, a, b)] {
            let w = 0.5 * cot(&(p[i] - p[k]), &(p[j] - p[k]));
            *upper.entry((i.min(j), i.max(j))).or_insert(0.0) -= w;
        }
    }
    let mut diag = vec![0.0; n];
    for (&(i, j), &v) in &upper {
        diag[i] -= v;
        diag[j] -= v;
    }
    for (i, d) in diag.into_iter().enumerate() {
        upper.insert((i, i), d);
    }
    SparseSymMatrix::from_upper(n, &upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn unit_triangle() -> TriMesh {
        TriMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.5, 3f64.sqrt() / 2.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    fn coordinate_energy(mesh: &TriMesh, l: &SparseSymMatrix) -> f64 {
        (0..3)
            .map(|c| {
                let x: Vec<f64> = mesh.vertices().iter().map(|v| v[c]).collect();
                l.quad_form(&x)
            })
            .sum()
    }

    #[test]
    fn equilateral_areas() {
        let m = lumped_areas(&unit_triangle());
        for &a in m.areas() {
            assert!((a - 3f64.sqrt() / 12.0).abs() < 1e-15);
        }
        assert!((m.total_area() - 3f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn areas_scale_quadratically() {
        let mesh = shapes::icosphere(2, 1.0);
        let a = lumped_areas(&mesh);
        let b = lumped_areas(&mesh.scaled(2.0).unwrap());
        for (x, y) in a.areas().iter().zip(b.areas()) {
            assert!((4.0 * x - y).abs() < 1e-12 * y);
        }
    }

    #[test]
    fn sphere_area_converges() {
        let a = lumped_areas(&shapes::icosphere(4, 1.0));
        let rel = (a.total_area() - 4.0 * std::f64::consts::PI).abs() / (4.0 * std::f64::consts::PI);
        assert!(rel < 0.005, "relative area error {rel}");
    }

    #[test]
    fn equilateral_laplacian() {
        let l = cotangent_laplacian(&unit_triangle());
        let off = -1.0 / (2.0 * 3f64.sqrt());
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { -2.0 * off } else { off };
                assert!((l.get(i, j) - expected).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn constants_in_kernel() {
        let mesh = shapes::bent_bar(&shapes::BarParams::default(), 0.7);
        let l = cotangent_laplacian(&mesh);
        let y = l.mul_vec(&vec![1.0; mesh.num_vertices()]);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn row_sums_and_symmetry() {
        let mesh = shapes::icosphere(2, 1.3);
        let l = cotangent_laplacian(&mesh);
        for i in 0..l.dim() {
            let (sum, abs): (f64, f64) = l.row(i).fold((0.0, 0.0), |(s, a), (_, v)| (s + v, a + v.abs()));
            assert!(sum.abs() <= 1e-10 * abs);
            for (j, v) in l.row(i) {
                assert_eq!(v.to_bits(), l.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn coordinate_energy_is_twice_area() {
        for mesh in [
            unit_triangle(),
            shapes::icosphere(3, 1.0),
            shapes::bent_bar(&shapes::BarParams::default(), 1.2),
            shapes::strip(7, 1.0),
        ] {
            let e = coordinate_energy(&mesh, &cotangent_laplacian(&mesh));
            let area = mesh.surface_area();
            assert!((e - 2.0 * area).abs() <= 1e-8 * 2.0 * area, "E={e} area={area}");
        }
    }

    #[test]
    fn energy_stable_under_refinement() {
        let coarse = shapes::icosphere(3, 1.0);
        let fine = shapes::icosphere(4, 1.0);
        let e0 = coordinate_energy(&coarse, &cotangent_laplacian(&coarse));
        let e1 = coordinate_energy(&fine, &cotangent_laplacian(&fine));
        assert!((e0 - e1).abs() / e1 < 0.01);
    }

    #[test]
    fn rigid_motion_invariance() {
        let mesh = shapes::bent_bar(&shapes::BarParams::default(), 0.4);
        let r = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let moved = mesh.transformed(r.matrix(), &Vector3::new(3.0, -2.0, 0.5)).unwrap();
        let (l0, l1) = (cotangent_laplacian(&mesh), cotangent_laplacian(&moved));
        for i in 0..l0.dim() {
            for (j, v) in l0.row(i) {
                assert!((v - l1.get(i, j)).abs() < 1e-10);
            }
        }
        let (a0, a1) = (lumped_areas(&mesh), lumped_areas(&moved));
        for (x, y) in a0.areas().iter().zip(a1.areas()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn laplacian_is_psd(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mesh = shapes::bent_bar(&shapes::BarParams::default(), 0.9);
            let l = cotangent_laplacian(&mesh);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f: Vec<f64> = (0..l.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            prop_assert!(l.quad_form(&f) >= -1e-12);
        }
    }
}

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{uniform_subsample, DescriptorError, DescriptorField, DescriptorKind, DescriptorMeta};
use super::{energy_decomposition, EnergyDecomposition, EnergyWeighting};
use crate::mesh::TriMesh;
use crate::spectral::SpectralBasis;
use crate::wavelet::{filter_table, select_scales, FilterBank};

pub const MAX_WEDS_DIM: usize = 1024;

/// Wavelet columns are materialized this many at a time.
const COLUMN_BLOCK: usize = 256;

/// Wavelet energy decomposition signature of the coordinate functions.
pub fn weds(mesh: &TriMesh, basis: &SpectralBasis, bank: &FilterBank, num: usize) -> Result<DescriptorField, DescriptorError> {
    if mesh.num_vertices() != basis.num_vertices() {
        return Err(DescriptorError::DimensionMismatch {
            expected: basis.num_vertices(),
            got: mesh.num_vertices(),
        });
    }
    let x = DMatrix::from_fn(mesh.num_vertices(), 3, |i, c| mesh.vertices()[i][c]);
    let energy = energy_decomposition(basis, bank, &x, EnergyWeighting::Squared)?;
    let mut field = weds_from_energy(basis, bank, &energy, num)?;
    field.meta.source_hash = mesh.content_hash();
    Ok(field)
}

/// `WEDS_s(v)[m] = sum_x psi*_{s,v}(x) eps_m(x)` over the scales chosen for
/// `num`, cascaded and strided down to `num` columns. `psi*` is the wavelet
/// minmax-normalized over its N values.
pub fn weds_from_energy(basis: &SpectralBasis, bank: &FilterBank, energy: &EnergyDecomposition, num: usize) -> Result<DescriptorField, DescriptorError> {
    if num == 0 || num > MAX_WEDS_DIM {
        return Err(DescriptorError::InvalidDimension { got: num, max: MAX_WEDS_DIM });
    }
    let n = basis.num_vertices();
    let filters = bank.num_filters();
    if energy.values.ncols() != n {
        return Err(DescriptorError::DimensionMismatch {
            expected: n,
            got: energy.values.ncols(),
        });
    }
    let scales: Vec<usize> = select_scales(num).into_iter().filter(|&m| m < filters).collect();
    if scales.is_empty() {
        return Err(DescriptorError::InvalidDimension { got: num, max: MAX_WEDS_DIM });
    }
    let g = filter_table(basis, bank);
    let phi = basis.eigenvectors();
    let areas = basis.mass().areas();
    // N x (K + 1)
    let eps_t = energy.values.transpose();

    let blocks: Vec<DMatrix<f64>> = scales
        .par_iter()
        .map(|&s| {
            let mut weighted = phi.clone();
            for (j, mut c) in weighted.column_iter_mut().enumerate() {
                c *= g[(s, j)];
            }
            let mut out = DMatrix::zeros(n, filters);
            for start in (0..n).step_by(COLUMN_BLOCK) {
                let len = COLUMN_BLOCK.min(n - start);
                // Columns start..start+len of the wavelet matrix.
                let mut psi = &weighted * phi.rows(start, len).transpose();
                for (c, mut col) in psi.column_iter_mut().enumerate() {
                    col *= areas[start + c];
                    let (lo, hi) = (col.min(), col.max());
                    if hi > lo {
                        col.apply(|x| *x = (*x - lo) / (hi - lo));
                    } else {
                        col.fill(0.5);
                    }
                }
                out.rows_mut(start, len).copy_from(&(psi.transpose() * &eps_t));
            }
            out
        })
        .collect();

    let width = filters * blocks.len();
    let keep = uniform_subsample(width, num.min(width));
    let values = DMatrix::from_fn(n, keep.len(), |v, c| {
        let col = keep[c];
        blocks[col / filters][(v, col % filters)]
    });
    DescriptorField::new(
        values,
        DescriptorMeta {
            kind: DescriptorKind::Weds,
            k: basis.k(),
            num_scales: scales.len(),
            samples: num,
            bank_hash: bank.content_hash(),
            source_hash: String::new(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::hks;
    use crate::evaluation::nn_match;
    use crate::mesh::{cotangent_laplacian, lumped_areas};
    use crate::shapes;
    use crate::spectral::{eig_generalized, EigOptions};
    use nalgebra::{Rotation3, Vector3};

    fn setup(mesh: &TriMesh, k: usize) -> (SpectralBasis, FilterBank) {
        let b = eig_generalized(&cotangent_laplacian(mesh), &lumped_areas(mesh), k, &EigOptions::default()).unwrap();
        let bank = FilterBank::for_basis(&b, 31).unwrap();
        (b, bank)
    }

    fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax() / a.amax()
    }

    #[test]
    fn dimensions_and_errors() {
        let mesh = shapes::bent_bar(&shapes::BarParams::default(), 0.4);
        let (b, bank) = setup(&mesh, 40);
        for num in [1, 50, 96, 128, 200] {
            let f = weds(&mesh, &b, &bank, num).unwrap();
            assert_eq!(f.dim(), num);
            assert_eq!(f.num_vertices(), mesh.num_vertices());
        }
        assert!(matches!(weds(&mesh, &b, &bank, 0), Err(DescriptorError::InvalidDimension { .. })));
        assert!(matches!(weds(&mesh, &b, &bank, 1025), Err(DescriptorError::InvalidDimension { .. })));
    }

    #[test]
    fn subsampled_columns_come_from_the_cascade() {
        let mesh = shapes::bent_bar(&shapes::BarParams::default(), 0.4);
        let (b, bank) = setup(&mesh, 40);
        // num = 100 cascades four scales (128 columns) and strides down.
        let full = weds(&mesh, &b, &bank, 128).unwrap();
        let sub = weds(&mesh, &b, &bank, 100).unwrap();
        for (c, src) in uniform_subsample(128, 100).into_iter().enumerate() {
            assert_eq!(sub.values.column(c), full.values.column(src));
        }
    }

    #[test]
    fn matches_explicit_wavelet_weighting() {
        use crate::wavelet::wavelet_matrix;
        let mesh = shapes::bent_bar(&shapes::BarParams::default(), 0.6);
        let (b, bank) = setup(&mesh, 50);
        let x = DMatrix::from_fn(mesh.num_vertices(), 3, |i, c| mesh.vertices()[i][c]);
        let energy = energy_decomposition(&b, &bank, &x, EnergyWeighting::Squared).unwrap();
        let field = weds(&mesh, &b, &bank, 96).unwrap();
        let scales = select_scales(96);
        for (si, &s) in scales.iter().enumerate() {
            let w = wavelet_matrix(&b, &bank, s, None).unwrap();
            for v in [0, 77, 199] {
                let col = w.values.column(v);
                let (lo, hi) = (col.min(), col.max());
                for m in 0..32 {
                    let expect: f64 = (0..mesh.num_vertices()).map(|x| (col[x] - lo) / (hi - lo) * energy.values[(m, x)]).sum();
                    let got = field.values[(v, si * 32 + m)];
                    assert!((got - expect).abs() <= 1e-9 * expect.abs().max(1e-12), "{got} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn rigid_motion_invariance() {
        let mesh = shapes::bent_bar(&shapes::BarParams::default(), 0.9);
        let rot = Rotation3::from_euler_angles(1.1, -0.3, 2.4);
        let moved = mesh.transformed(rot.matrix(), &Vector3::new(3.0, -1.0, 0.25)).unwrap();
        let (b0, k0) = setup(&mesh, 60);
        let (b1, k1) = setup(&moved, 60);
        let a = weds(&mesh, &b0, &k0, 128).unwrap();
        let c = weds(&moved, &b1, &k1, 128).unwrap();
        assert!(max_rel_diff(&a.values, &c.values) <= 1e-8);
    }

    #[test]
    fn antipodes_of_sphere_agree() {
        let mesh = shapes::icosphere(2, 1.0);
        // k = 36 keeps whole eigenspaces, so the point symmetry is exact.
        let (b, bank) = setup(&mesh, 36);
        let f = weds(&mesh, &b, &bank, 128).unwrap();
        let v = mesh.vertices();
        for i in [0, 5, 40, 100] {
            let j = (0..v.len()).find(|&j| (v[j] + v[i]).norm() < 1e-9).unwrap();
            let (ri, rj) = (f.values.row(i), f.values.row(j));
            assert!((ri - rj).amax() <= 1e-6 * ri.amax());
        }
    }

    #[test]
    fn outperforms_hks_on_bent_bar_pair() {
        let p = shapes::BarParams::default();
        // The coordinate energy is extrinsic, so the pair differs by a mild bend.
        let (a, b) = (shapes::bent_bar(&p, 0.0), shapes::bent_bar(&p, 0.1));
        let (ba, ka) = setup(&a, 40);
        let (bb, kb) = setup(&b, 40);
        let (wa, wb) = (weds(&a, &ba, &ka, 128).unwrap(), weds(&b, &bb, &kb, 128).unwrap());
        let truth: Vec<usize> = (0..a.num_vertices()).collect();
        let rate_w = nn_match(&wa.values, &wb.values).unwrap().exact_match_rate(&truth);
        let rate_h = nn_match(&hks(&ba, 128).unwrap().values, &hks(&bb, 128).unwrap().values).unwrap().exact_match_rate(&truth);
        assert!(rate_w >= 0.95, "weds {rate_w}");
        assert!(rate_h <= rate_w, "hks {rate_h} weds {rate_w}");
    }
}

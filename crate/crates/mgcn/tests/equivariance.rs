use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weds_core::mesh::{cotangent_laplacian, lumped_areas};
use weds_core::shapes::{self, BarParams};
use weds_core::spectral::{eig_generalized, EigOptions};
use weds_core::wavelet::FilterBank;
use weds_mgcn::{Architecture, Model, OperatorSet};

fn check(arch: &str) -> f64 {
    let p = BarParams {
        rings: 12,
        sectors: 6,
        ..BarParams::default()
    };
    let mesh = shapes::bent_bar(&p, 0.5);
    let n = mesh.num_vertices();
    let basis = eig_generalized(&cotangent_laplacian(&mesh), &lumped_areas(&mesh), 30, &EigOptions::default()).unwrap();
    let bank = FilterBank::for_basis(&basis, 31).unwrap();
    let arch: Architecture = arch.parse().unwrap();
    let model = Model::new(arch, 10, 3);
    let ops = OperatorSet::build(&model.required_operators(), &mesh, &basis, &bank).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DMatrix::from_fn(n, 10, |_, _| rng.random_range(0.0..1.0));
    let perm: Vec<usize> = (0..n).map(|i| (i * 29 + 11) % n).collect();
    let px = DMatrix::from_fn(n, 10, |i, c| x[(perm[i], c)]);
    let y = model.forward(&ops, &x).unwrap();
    let py = model.forward(&ops.permuted(&perm), &px).unwrap();
    (0..n).map(|i| (py.row(i) - y.row(perm[i])).amax()).fold(0.0, f64::max) / y.amax()
}

#[test]
fn wavelet_network_commutes_with_relabeling() {
    let e = check("2x MGCONV12(4) + FC6");
    assert!(e <= 1e-12, "{e}");
}

#[test]
fn chebyshev_network_commutes_with_relabeling() {
    let e = check("CHEBCONV12(5) + FC6");
    assert!(e <= 1e-12, "{e}");
}

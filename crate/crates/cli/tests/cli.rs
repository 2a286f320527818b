//! End-to-end runs of the `weds` binary, checked against the library.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::{DMatrix, Matrix3, Vector3};
use tempfile::TempDir;

use weds_core::descriptors::{read_descriptor, weds, write_descriptor, DescriptorField, DescriptorKind, DescriptorMeta};
use weds_core::evaluation::{default_radii, nn_match, read_index_file, CorrespondenceMap, EvalReport, GroundTruth};
use weds_core::mesh::{cotangent_laplacian, lumped_areas, write_off};
use weds_core::shapes::{self, BarParams};
use weds_core::spectral::{eig_generalized, read_basis, EigOptions};
use weds_core::wavelet::FilterBank;
use weds_core::TriMesh;
use weds_mgcn::{read_checkpoint, train, Model, PreparedShape, TrainConfig};

fn weds_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weds")).args(args).env("RUST_LOG", "info").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = weds_cmd(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    weds_cmd(args).status.code().unwrap()
}

fn save_mesh(dir: &Path, name: &str, mesh: &TriMesh) -> String {
    let path = dir.join(name);
    write_off(File::create(&path).unwrap(), mesh).unwrap();
    path.to_str().unwrap().to_string()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn field(path: &str) -> DescriptorField {
    read_descriptor(BufReader::new(File::open(path).unwrap())).unwrap()
}

fn indices(path: &str) -> Vec<usize> {
    read_index_file(BufReader::new(File::open(path).unwrap())).unwrap()
}

fn small_bar() -> BarParams {
    BarParams {
        rings: 8,
        sectors: 5,
        ..BarParams::default()
    }
}

/// Vertex colors of an ASCII PLY written by the tool.
fn ply_colors(path: &str) -> Vec<[u8; 3]> {
    let text = fs::read_to_string(path).unwrap();
    let n: usize = text.lines().find_map(|l| l.strip_prefix("element vertex ")).unwrap().parse().unwrap();
    let body = text.split("end_header\n").nth(1).unwrap();
    body.lines()
        .take(n)
        .map(|l| {
            let t: Vec<u8> = l.split_whitespace().skip(3).map(|x| x.parse().unwrap()).collect();
            [t[0], t[1], t[2]]
        })
        .collect()
}

#[test]
fn basis_is_cached_by_mesh_hash() {
    let dir = TempDir::new().unwrap();
    let mesh = save_mesh(dir.path(), "sphere.off", &shapes::icosphere(4, 1.0));
    let out = p(&dir, "sphere.basis");
    let first = ok(&["basis", "--mesh", &mesh, "--k", "16", "--out", &out]);
    assert!(String::from_utf8_lossy(&first.stderr).contains("cache miss"));
    let bytes = fs::read(&out).unwrap();
    let second = ok(&["basis", "--mesh", &mesh, "--k", "16", "--out", &out]);
    assert!(String::from_utf8_lossy(&second.stderr).contains("cache hit"));
    assert_eq!(fs::read(&out).unwrap(), bytes);

    let (b, _) = read_basis(File::open(&out).unwrap()).unwrap();
    let mut j = 0;
    for deg in 0..4usize {
        let exact = (deg * (deg + 1)) as f64;
        for _ in 0..2 * deg + 1 {
            assert!((b.eigenvalues()[j] - exact).abs() <= 0.05 * exact.max(1e-12), "band {deg}: {}", b.eigenvalues()[j]);
            j += 1;
        }
    }
}

#[test]
fn default_cache_location_is_reused() {
    let dir = TempDir::new().unwrap();
    let mesh = save_mesh(dir.path(), "bar.off", &shapes::bent_bar(&small_bar(), 0.2));
    let cfg = p(&dir, "run.toml");
    fs::write(&cfg, format!("output_dir = {:?}\n", p(&dir, "work"))).unwrap();
    let first = ok(&["basis", "--config", &cfg, "--mesh", &mesh, "--k", "12"]);
    let path = String::from_utf8(first.stdout).unwrap().trim().to_string();
    assert!(Path::new(&path).starts_with(dir.path().join("work").join("cache")));
    let second = ok(&["descriptor", "--config", &cfg, "--mesh", &mesh, "--k", "12", "--out", &p(&dir, "d.wdesc")]);
    assert!(String::from_utf8_lossy(&second.stderr).contains("cache hit"));
}

#[test]
fn too_many_eigenpairs_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let mesh = save_mesh(dir.path(), "bar.off", &shapes::bent_bar(&small_bar(), 0.0));
    assert_eq!(code(&["basis", "--mesh", &mesh, "--k", "41", "--out", &p(&dir, "b.basis")]), 2);
}

#[test]
fn weds_file_is_complete_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let mesh = save_mesh(dir.path(), "bar.off", &shapes::bent_bar(&small_bar(), 0.3));
    let (a, b) = (p(&dir, "a.wdesc"), p(&dir, "b.wdesc"));
    ok(&["descriptor", "--mesh", &mesh, "--kind", "weds", "--num", "128", "--k", "30", "--out", &a, "--csv"]);
    ok(&["descriptor", "--mesh", &mesh, "--kind", "weds", "--num", "128", "--k", "30", "--out", &b]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let f = field(&a);
    assert_eq!(f.dim(), 128);
    assert_eq!(f.meta.kind, DescriptorKind::Weds);
    assert!(f.values.iter().all(|x| x.is_finite()));
    assert_eq!(fs::read_to_string(p(&dir, "a.csv")).unwrap(), f.to_csv());
}

/// WEDS and HKS through match and eval on a mildly bent pair.
#[test]
fn match_and_eval_golden() {
    let dir = TempDir::new().unwrap();
    let par = BarParams::default();
    let (ma, mb) = (shapes::bent_bar(&par, 0.0), shapes::bent_bar(&par, 0.1));
    let (sa, sb) = (save_mesh(dir.path(), "a.off", &ma), save_mesh(dir.path(), "b.off", &mb));
    let gt = p(&dir, "gt.txt");
    fs::write(&gt, (0..ma.num_vertices()).map(|i| format!("{i}\n")).collect::<String>()).unwrap();
    let mut rates = Vec::new();
    for kind in ["weds", "hks"] {
        let (da, db) = (p(&dir, &format!("a.{kind}")), p(&dir, &format!("b.{kind}")));
        ok(&["descriptor", "--mesh", &sa, "--kind", kind, "--num", "128", "--k", "40", "--out", &da]);
        ok(&["descriptor", "--mesh", &sb, "--kind", kind, "--num", "128", "--k", "40", "--out", &db]);
        let corr = p(&dir, &format!("{kind}.corr"));
        ok(&["match", "--source", &da, "--target", &db, "--out", &corr]);
        let expect = nn_match(&field(&da).values, &field(&db).values).unwrap();
        assert_eq!(indices(&corr), expect.targets);

        let report_dir = p(&dir, &format!("report-{kind}"));
        let out = ok(&[
            "eval", "--corr", &corr, "--gt", &gt, "--target", &sb, "--source-desc", &da, "--target-desc", &db, "--out-dir", &report_dir,
        ]);
        let mut report = EvalReport::compute(&expect, &GroundTruth::identity(ma.num_vertices()), &mb, &default_radii()).unwrap();
        report.cmc = Some(weds_core::evaluation::cmc_curve(&field(&da).values, &field(&db).values, &GroundTruth::identity(ma.num_vertices()), 20).unwrap());
        let summary = fs::read_to_string(Path::new(&report_dir).join("summary.txt")).unwrap();
        assert_eq!(summary, report.summary());
        assert_eq!(String::from_utf8(out.stdout).unwrap(), summary);
        assert_eq!(fs::read_to_string(Path::new(&report_dir).join("cge.csv")).unwrap(), report.cge_csv());
        assert_eq!(fs::read_to_string(Path::new(&report_dir).join("cmc.csv")).unwrap(), report.cmc_csv().unwrap());
        rates.push(report.exact_match);
    }
    assert!(rates[0] >= rates[1], "weds {} vs hks {}", rates[0], rates[1]);

    // A correspondence file refers to its target mesh by hash.
    assert_eq!(code(&["eval", "--corr", &p(&dir, "weds.corr"), "--gt", &gt, "--target", &sa]), 2);
}

#[test]
fn symmetric_ground_truth_is_used() {
    let dir = TempDir::new().unwrap();
    let mesh = shapes::strip(6, 0.5);
    let n = mesh.num_vertices();
    let target = save_mesh(dir.path(), "strip.off", &mesh);
    let write = |name: &str, v: &[usize]| {
        let path = p(&dir, name);
        fs::write(&path, v.iter().map(|i| format!("{i}\n")).collect::<String>()).unwrap();
        path
    };
    let reversed: Vec<usize> = (0..n).rev().collect();
    let corr = write("corr.txt", &reversed);
    let gt = write("gt.txt", &(0..n).collect::<Vec<_>>());
    let sym = write("sym.txt", &reversed);
    let out = ok(&["eval", "--corr", &corr, "--gt", &gt, "--target", &target, "--symmetric", &sym, "--out-dir", &p(&dir, "r")]);
    let text = String::from_utf8(out.stdout).unwrap();
    let map = CorrespondenceMap::new(reversed.clone());
    let gt = GroundTruth::identity(n).with_symmetric(reversed);
    assert_eq!(text, EvalReport::compute(&map, &gt, &mesh, &default_radii()).unwrap().summary());
    assert!(text.contains("symmetric_error = 0.0000000000000000e0"));
}

const TRAIN_TABLES: &str = r#"
[descriptor]
kind = "weds"
k = 20
num = 16

[model]
architecture = "MGCONV8(3) + FC4"

[train]
classification_epochs = 3
similarity_epochs = 2
pairs_per_step = 16
"#;

#[test]
fn train_and_infer_golden() {
    let dir = TempDir::new().unwrap();
    let bends = [0.0, 0.5, 0.25];
    let meshes: Vec<TriMesh> = bends.iter().map(|&b| shapes::bent_bar(&small_bar(), b)).collect();
    let paths: Vec<String> = meshes.iter().enumerate().map(|(i, m)| save_mesh(dir.path(), &format!("m{i}.off"), m)).collect();
    let cfg = p(&dir, "train.toml");
    fs::write(&cfg, format!("seed = 5\noutput_dir = {:?}\n{TRAIN_TABLES}", p(&dir, "work"))).unwrap();

    let (ck1, ck2) = (p(&dir, "one.ckpt"), p(&dir, "two.ckpt"));
    for ck in [&ck1, &ck2] {
        ok(&["train", "--config", &cfg, "--mesh", &paths[0], "--mesh", &paths[1], "--out", ck]);
    }
    assert_eq!(fs::read(&ck1).unwrap(), fs::read(&ck2).unwrap());
    let manifest = fs::read_to_string(p(&dir, "one.manifest.toml")).unwrap();
    assert!(manifest.contains(&meshes[0].content_hash()));

    // The same pipeline through the library.
    let k_bank = |m: &TriMesh| {
        let b = eig_generalized(&cotangent_laplacian(m), &lumped_areas(m), 20, &EigOptions::default()).unwrap();
        let bank = FilterBank::for_basis(&b, 31).unwrap();
        let f = weds(m, &b, &bank, 16).unwrap();
        (b, bank, f)
    };
    let mut model = Model::new("MGCONV8(3) + FC4".parse().unwrap(), 16, 5);
    let shapes: Vec<PreparedShape> = meshes[..2]
        .iter()
        .map(|m| {
            let labelled = m.clone().with_labels((0..m.num_vertices()).collect()).unwrap();
            let (b, bank, f) = k_bank(m);
            PreparedShape::new(&model, &labelled, &b, &bank, &f.values).unwrap()
        })
        .collect();
    let samples: Vec<_> = shapes.iter().map(PreparedShape::sample).collect();
    let mut config = TrainConfig::default();
    config.classification.epochs = 3;
    config.similarity.epochs = 2;
    config.pairs_per_step = 16;
    config.seed = 5;
    train(&mut model, &samples, &config).unwrap();
    let saved = read_checkpoint(File::open(&ck1).unwrap()).unwrap().model;
    assert_eq!(saved.params(true), model.params(true));

    let input = p(&dir, "held.wdesc");
    ok(&["descriptor", "--config", &cfg, "--mesh", &paths[2], "--out", &input]);
    let learned = p(&dir, "held.learned");
    ok(&["infer", "--config", &cfg, "--checkpoint", &ck1, "--mesh", &paths[2], "--input", &input, "--out", &learned]);
    let (b, bank, f) = k_bank(&meshes[2]);
    let expect = PreparedShape::new(&model, &meshes[2], &b, &bank, &f.values).unwrap().describe(&model).unwrap();
    let got = field(&learned);
    assert_eq!(got.meta.kind, DescriptorKind::Learned);
    assert_eq!(got.values, expect);

    // Descriptors of one mesh are refused for another.
    assert_eq!(code(&["infer", "--config", &cfg, "--checkpoint", &ck1, "--mesh", &paths[0], "--input", &input, "--out", &learned]), 2);
    assert_eq!(code(&["train", "--config", &cfg, "--out", &p(&dir, "x.ckpt")]), 1);
}

fn write_field(path: &str, values: DMatrix<f64>) {
    let meta = DescriptorMeta {
        kind: DescriptorKind::Learned,
        k: 0,
        num_scales: 0,
        samples: values.ncols(),
        bank_hash: String::new(),
        source_hash: String::new(),
    };
    write_descriptor(File::create(path).unwrap(), &DescriptorField::new(values, meta).unwrap()).unwrap();
}

#[test]
fn dissimilarity_colors() {
    let dir = TempDir::new().unwrap();
    let mesh = shapes::bent_bar(&small_bar(), 0.4);
    let n = mesh.num_vertices();
    let path = save_mesh(dir.path(), "bar.off", &mesh);
    let desc = p(&dir, "bar.wdesc");
    ok(&["descriptor", "--mesh", &path, "--k", "30", "--num", "32", "--out", &desc]);
    let ply = p(&dir, "bar.ply");
    ok(&["dissimilarity", "--desc", &desc, "--mesh", &path, "--vertex", "7", "--out", &ply]);
    let colors = ply_colors(&ply);
    assert_eq!(colors.len(), n);
    assert_eq!(colors[7], [0, 0, 255]);
    assert!(colors.contains(&[255, 0, 0]));

    let flat = p(&dir, "flat.wdesc");
    write_field(&flat, DMatrix::from_element(n, 4, 0.25));
    ok(&["dissimilarity", "--desc", &flat, "--mesh", &path, "--vertex", "3", "--out", &ply]);
    assert!(ply_colors(&ply).iter().all(|&c| c == [0, 0, 255]));

    assert_eq!(code(&["dissimilarity", "--desc", &desc, "--mesh", &path, "--vertex", &n.to_string(), "--out", &ply]), 2);
}

/// The cyclic coordinate permutation is a rotation mapping the icosphere onto
/// itself; the color field must follow the induced relabeling.
#[test]
fn sphere_dissimilarity_follows_rotation() {
    let dir = TempDir::new().unwrap();
    let mesh = shapes::icosphere(2, 1.0);
    let rot = Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let v = mesh.vertices();
    let sigma: Vec<usize> = v
        .iter()
        .map(|x| {
            let y: Vector3<f64> = rot * x;
            (0..v.len()).find(|&j| (v[j] - y).norm() < 1e-9).expect("rotation maps vertices to vertices")
        })
        .collect();
    let path = save_mesh(dir.path(), "sphere.off", &mesh);
    let desc = p(&dir, "sphere.wdesc");
    // k = 36 holds complete eigenspaces, so the field shares the symmetry.
    ok(&["descriptor", "--mesh", &path, "--k", "36", "--num", "64", "--out", &desc]);
    let (r, rr) = (p(&dir, "r.ply"), p(&dir, "rr.ply"));
    let reference = 17;
    ok(&["dissimilarity", "--desc", &desc, "--mesh", &path, "--vertex", &reference.to_string(), "--out", &r]);
    ok(&["dissimilarity", "--desc", &desc, "--mesh", &path, "--vertex", &sigma[reference].to_string(), "--out", &rr]);
    let (a, b) = (ply_colors(&r), ply_colors(&rr));
    let mut moved = 0;
    for i in 0..a.len() {
        for c in 0..3 {
            assert!((a[i][c] as i32 - b[sigma[i]][c] as i32).abs() <= 1, "vertex {i}");
        }
        moved += usize::from(sigma[i] != i);
    }
    assert!(moved > a.len() / 2);
}

#[test]
fn usage_and_config_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["basis"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    let cfg = p(&dir, "bad.toml");
    fs::write(&cfg, "seed = 1\n[descriptor]\nkind = \"weds\"\nscale = 3\n").unwrap();
    let mesh = save_mesh(dir.path(), "bar.off", &shapes::bent_bar(&small_bar(), 0.0));
    assert_eq!(code(&["basis", "--config", &cfg, "--mesh", &mesh]), 2);
    assert_eq!(code(&["descriptor", "--mesh", &mesh, "--kind", "sift", "--out", &p(&dir, "x")]), 2);
    assert_eq!(code(&["basis", "--mesh", &p(&dir, "missing.off"), "--k", "4"]), 2);
    let run = Command::new(env!("CARGO_BIN_EXE_weds"))
        .args(["basis", "--mesh", &mesh, "--k", "4", "--out", &p(&dir, "t.basis")])
        .env("WEDS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(1));
    let run = Command::new(env!("CARGO_BIN_EXE_weds"))
        .args(["basis", "--mesh", &mesh, "--k", "4", "--out", &p(&dir, "t.basis")])
        .env("WEDS_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
}

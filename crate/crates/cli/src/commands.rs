use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use log::{info, warn};
use nalgebra::DMatrix;

use weds_core::descriptors::{hks, read_descriptor, weds, wks, write_descriptor, DescriptorField, DescriptorKind, DescriptorMeta};
use weds_core::evaluation::{cmc_curve, default_radii, nn_match, read_index_file, write_index_file, EvalReport, GroundTruth};
use weds_core::mesh::{cotangent_laplacian, load_mesh, lumped_areas, write_ply_colored, MeshFormat};
use weds_core::spectral::{eig_generalized, read_basis, write_basis, EigOptions, SpectralBasis};
use weds_core::wavelet::FilterBank;
use weds_core::TriMesh;
use weds_mgcn::{read_checkpoint, train, write_checkpoint, Checkpoint, Model, PreparedShape};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

/// A mesh together with its content hash.
struct Loaded {
    mesh: TriMesh,
    hash: String,
}

fn load(path: &Path) -> Result<Loaded> {
    let format = MeshFormat::from_path(path).ok_or_else(|| CliError::data(format!("{}: unknown mesh format", path.display())))?;
    let mesh = load_mesh(path, format).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let hash = mesh.content_hash();
    Ok(Loaded { mesh, hash })
}

/// Writes through a temporary sibling so a failed run never leaves a partial file.
fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    let mut w = BufWriter::new(File::create(&tmp)?);
    write(&mut w)?;
    w.flush()?;
    drop(w);
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_field(path: &Path) -> Result<DescriptorField> {
    let f = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(read_descriptor(BufReader::new(f))?)
}

fn write_field(path: &Path, field: &DescriptorField) -> Result<()> {
    write_file(path, |w| Ok(write_descriptor(w, field)?))
}

/// Refuses a descriptor computed for some other mesh.
fn check_source(field: &DescriptorField, mesh: &Loaded, what: &Path) -> Result<()> {
    if !field.meta.source_hash.is_empty() && field.meta.source_hash != mesh.hash {
        return Err(CliError::data(format!("{} was computed for a different mesh", what.display())));
    }
    if field.num_vertices() != mesh.mesh.num_vertices() {
        return Err(CliError::data(format!(
            "{} has {} rows but the mesh has {} vertices",
            what.display(),
            field.num_vertices(),
            mesh.mesh.num_vertices()
        )));
    }
    Ok(())
}

fn cache_path(config: &PipelineConfig, mesh: &Loaded, k: usize) -> PathBuf {
    config.cache_dir().join(format!("{}-k{k}.basis", &mesh.hash[..16.min(mesh.hash.len())]))
}

/// Reads the basis at `path` if it belongs to `mesh` with `k` pairs, otherwise
/// computes and stores it there.
fn cached_basis(mesh: &Loaded, k: usize, path: &Path) -> Result<SpectralBasis> {
    if path.exists() {
        match File::open(path).map_err(CliError::from).and_then(|f| Ok(read_basis(BufReader::new(f))?)) {
            Ok((basis, hash)) if hash == mesh.hash && basis.k() == k => {
                info!("cache hit: {}", path.display());
                return Ok(basis);
            }
            Ok(_) => warn!("{} belongs to another mesh or basis size; recomputing", path.display()),
            Err(e) => warn!("{} is unreadable ({e}); recomputing", path.display()),
        }
    }
    info!("cache miss: computing {k} eigenpairs for {} vertices", mesh.mesh.num_vertices());
    let m = &mesh.mesh;
    let basis = eig_generalized(&cotangent_laplacian(m), &lumped_areas(m), k, &EigOptions::default())?;
    write_file(path, |w| Ok(write_basis(w, &basis, &mesh.hash)?))?;
    Ok(basis)
}

/// An explicit basis file must match the mesh; without one the cache is used.
fn obtain_basis(config: &PipelineConfig, mesh: &Loaded, k: usize, explicit: Option<&Path>) -> Result<SpectralBasis> {
    match explicit {
        Some(path) => {
            let f = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let (basis, hash) = read_basis(BufReader::new(f))?;
            if hash != mesh.hash {
                return Err(CliError::data(format!("{} was computed for a different mesh", path.display())));
            }
            Ok(basis)
        }
        None => cached_basis(mesh, k, &cache_path(config, mesh, k)),
    }
}

fn filter_bank(config: &PipelineConfig, basis: &SpectralBasis) -> Result<FilterBank> {
    Ok(FilterBank::checked(config.filter_params(), basis.lambda_max(), config.descriptor.bank.scales, basis.eigenvalues())?)
}

fn compute_descriptor(config: &PipelineConfig, mesh: &Loaded, basis: &SpectralBasis) -> Result<DescriptorField> {
    let num = config.descriptor.num;
    let mut field = match config.descriptor_kind()? {
        DescriptorKind::Weds => weds(&mesh.mesh, basis, &filter_bank(config, basis)?, num)?,
        DescriptorKind::Hks => hks(basis, num)?,
        DescriptorKind::Wks => wks(basis, num)?,
        DescriptorKind::Learned => unreachable!("rejected by descriptor_kind"),
    };
    field.meta.source_hash = mesh.hash.clone();
    Ok(field)
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Eigenpairs; defaults to the configured `k`.
    #[arg(long)]
    pub k: Option<usize>,
    /// Cache file; defaults to a name derived from the mesh hash in the cache directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn basis(args: BasisArgs, config: &PipelineConfig) -> Result<()> {
    let mesh = load(&args.mesh)?;
    let k = args.k.unwrap_or(config.descriptor.k);
    let path = args.out.unwrap_or_else(|| cache_path(config, &mesh, k));
    let b = cached_basis(&mesh, k, &path)?;
    info!("lambda_1 = {:.6e}, lambda_max = {:.6e}", b.eigenvalues().get(1).copied().unwrap_or(0.0), b.lambda_max());
    println!("{}", path.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct DescriptorArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// weds, hks or wks.
    #[arg(long)]
    pub kind: Option<String>,
    /// Descriptor width.
    #[arg(long)]
    pub num: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Precomputed basis of this mesh.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the values as CSV next to the output.
    #[arg(long)]
    pub csv: bool,
}

pub fn descriptor(args: DescriptorArgs, config: &PipelineConfig) -> Result<()> {
    let mut config = config.clone();
    if let Some(kind) = args.kind {
        config.descriptor.kind = kind;
    }
    if let Some(num) = args.num {
        config.descriptor.num = num;
    }
    if let Some(k) = args.k {
        config.descriptor.k = k;
    }
    config.descriptor_kind()?;
    let mesh = load(&args.mesh)?;
    let b = obtain_basis(&config, &mesh, config.descriptor.k, args.basis.as_deref())?;
    let field = compute_descriptor(&config, &mesh, &b)?;
    write_field(&args.out, &field)?;
    if args.csv {
        fs::write(args.out.with_extension("csv"), field.to_csv())?;
    }
    info!("{} descriptor: {} x {}", field.meta.kind, field.num_vertices(), field.dim());
    Ok(())
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Descriptors of the source shape.
    #[arg(long)]
    pub source: PathBuf,
    /// Descriptors of the target shape.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

const TARGET_TAG: &str = "target_mesh = ";

pub fn match_descriptors(args: MatchArgs) -> Result<()> {
    let a = read_field(&args.source)?;
    let b = read_field(&args.target)?;
    let map = nn_match(&a.values, &b.values)?;
    let header = format!(
        "source_mesh = {}\n{TARGET_TAG}{}\nsource_descriptor = {}\ntarget_descriptor = {}",
        a.meta.source_hash,
        b.meta.source_hash,
        a.content_hash(),
        b.content_hash()
    );
    write_file(&args.out, |w| Ok(write_index_file(w, &map.targets, Some(&header))?))?;
    info!("matched {} source vertices into {}", map.len(), b.num_vertices());
    Ok(())
}

fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let f = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(read_index_file(BufReader::new(f))?)
}

/// The target mesh hash recorded in a correspondence file, if any.
fn recorded_target(path: &Path) -> Result<Option<String>> {
    let f = File::open(path)?;
    for line in BufReader::new(f).lines() {
        let line = line?;
        match line.strip_prefix("# ") {
            Some(rest) => {
                if let Some(h) = rest.strip_prefix(TARGET_TAG) {
                    return Ok(Some(h.trim().to_string()).filter(|h| !h.is_empty()));
                }
            }
            None => break,
        }
    }
    Ok(None)
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted correspondences, one target index per source vertex.
    #[arg(long)]
    pub corr: PathBuf,
    /// Ground-truth target index per source vertex.
    #[arg(long)]
    pub gt: PathBuf,
    /// Target mesh.
    #[arg(long)]
    pub target: PathBuf,
    /// Ground truth composed with the target's intrinsic symmetry.
    #[arg(long)]
    pub symmetric: Option<PathBuf>,
    /// Source descriptors; with `--target-desc` adds the CMC curve.
    #[arg(long, requires = "target_desc")]
    pub source_desc: Option<PathBuf>,
    #[arg(long, requires = "source_desc")]
    pub target_desc: Option<PathBuf>,
    /// Longest CMC rank.
    #[arg(long, default_value_t = 20)]
    pub cmc_max: usize,
    /// Report directory; defaults to the configured output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn eval(args: EvalArgs, config: &PipelineConfig) -> Result<()> {
    let target = load(&args.target)?;
    if let Some(h) = recorded_target(&args.corr)? {
        if h != target.hash {
            return Err(CliError::data(format!("{} was matched against a different target mesh", args.corr.display())));
        }
    }
    let map = weds_core::evaluation::CorrespondenceMap::new(read_indices(&args.corr)?);
    let mut gt = GroundTruth {
        direct: read_indices(&args.gt)?,
        symmetric: None,
    };
    if let Some(s) = &args.symmetric {
        gt = gt.with_symmetric(read_indices(s)?);
    }
    let mut report = EvalReport::compute(&map, &gt, &target.mesh, &default_radii())?;
    if let (Some(sa), Some(sb)) = (&args.source_desc, &args.target_desc) {
        let (a, b) = (read_field(sa)?, read_field(sb)?);
        check_source(&b, &target, sb)?;
        let kmax = args.cmc_max.min(b.num_vertices());
        report.cmc = Some(cmc_curve(&a.values, &b.values, &gt, kmax)?);
    }
    let dir = args.out_dir.unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("summary.txt"), report.summary())?;
    fs::write(dir.join("cge.csv"), report.cge_csv())?;
    if let Some(cmc) = report.cmc_csv() {
        fs::write(dir.join("cmc.csv"), cmc)?;
    }
    print!("{}", report.summary());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training mesh; repeat for several. Replaces the configured list.
    #[arg(long = "mesh")]
    pub meshes: Vec<PathBuf>,
    #[arg(long)]
    pub architecture: Option<String>,
    #[arg(long)]
    pub classification_epochs: Option<usize>,
    #[arg(long)]
    pub similarity_epochs: Option<usize>,
    /// Checkpoint path; defaults to `model.ckpt` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn train_model(args: TrainArgs, config: &PipelineConfig) -> Result<()> {
    let mut config = config.clone();
    if !args.meshes.is_empty() {
        config.meshes = args.meshes;
        config.labels.clear();
    }
    if let Some(a) = args.architecture {
        config.model.architecture = a;
    }
    if let Some(e) = args.classification_epochs {
        config.train.classification_epochs = e;
    }
    if let Some(e) = args.similarity_epochs {
        config.train.similarity_epochs = e;
    }
    if config.meshes.is_empty() {
        return Err(CliError::Usage("no training meshes given".into()));
    }
    if !config.labels.is_empty() && config.labels.len() != config.meshes.len() {
        return Err(CliError::data(format!("{} label files for {} meshes", config.labels.len(), config.meshes.len())));
    }
    let arch = config.architecture()?;
    let mut model = Model::new(arch, config.descriptor.num, config.seed);
    let mut shapes = Vec::new();
    let mut hashes = Vec::new();
    for (i, path) in config.meshes.iter().enumerate() {
        let mut loaded = load(path)?;
        let labels = match config.labels.get(i) {
            Some(l) => read_indices(l)?,
            None => (0..loaded.mesh.num_vertices()).collect(),
        };
        loaded.mesh = loaded.mesh.with_labels(labels)?;
        let b = obtain_basis(&config, &loaded, config.descriptor.k, None)?;
        let bank = filter_bank(&config, &b)?;
        let field = compute_descriptor(&config, &loaded, &b)?;
        shapes.push(PreparedShape::new(&model, &loaded.mesh, &b, &bank, &field.values)?);
        hashes.push((path.clone(), loaded.hash));
    }
    let samples: Vec<_> = shapes.iter().map(PreparedShape::sample).collect();
    let report = train(&mut model, &samples, &config.train_config())?;
    let out = args.out.unwrap_or_else(|| config.output_dir.join("model.ckpt"));
    let ck = Checkpoint {
        model,
        optimizer: report.optimizer,
        rng: Some(report.rng),
    };
    write_file(&out, |w| Ok(write_checkpoint(w, &ck)?))?;
    let mut manifest = config.to_toml();
    manifest += "\n# input mesh hashes\n";
    for (p, h) in &hashes {
        manifest += &format!("# {} = {h}\n", p.display());
    }
    fs::write(out.with_extension("manifest.toml"), manifest)?;
    info!("checkpoint written to {}", out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub mesh: PathBuf,
    /// Input descriptors of the mesh, as used in training.
    #[arg(long)]
    pub input: PathBuf,
    /// Precomputed basis of this mesh.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn infer(args: InferArgs, config: &PipelineConfig) -> Result<()> {
    let f = File::open(&args.checkpoint).map_err(|e| CliError::data(format!("{}: {e}", args.checkpoint.display())))?;
    let model = read_checkpoint(BufReader::new(f))?.model;
    let mesh = load(&args.mesh)?;
    let input = read_field(&args.input)?;
    check_source(&input, &mesh, &args.input)?;
    let b = obtain_basis(config, &mesh, input.meta.k, args.basis.as_deref())?;
    let bank = filter_bank(config, &b)?;
    let shape = PreparedShape::new(&model, &mesh.mesh, &b, &bank, &input.values)?;
    let values = shape.describe(&model)?;
    let meta = DescriptorMeta {
        kind: DescriptorKind::Learned,
        k: b.k(),
        num_scales: bank.num_scales(),
        samples: values.ncols(),
        bank_hash: bank.content_hash(),
        source_hash: mesh.hash.clone(),
    };
    write_field(&args.out, &DescriptorField::new(values, meta)?)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct DissimilarityArgs {
    #[arg(long)]
    pub desc: PathBuf,
    #[arg(long)]
    pub mesh: PathBuf,
    /// Reference vertex.
    #[arg(long)]
    pub vertex: usize,
    /// Colored PLY output.
    #[arg(long)]
    pub out: PathBuf,
}

/// Blue at `t = 0` to red at `t = 1`.
pub fn ramp(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    [(255.0 * t).round() as u8, 0, (255.0 * (1.0 - t)).round() as u8]
}

/// Descriptor distance of every vertex to `reference`, scaled by the largest.
pub fn dissimilarity_colors(values: &DMatrix<f64>, reference: usize) -> Vec<[u8; 3]> {
    let d: Vec<f64> = values.row_iter().map(|r| (r - values.row(reference)).norm()).collect();
    let top = d.iter().copied().fold(0.0, f64::max);
    d.iter().map(|&x| ramp(if top > 0.0 { x / top } else { 0.0 })).collect()
}

pub fn dissimilarity(args: DissimilarityArgs) -> Result<()> {
    let mesh = load(&args.mesh)?;
    let field = read_field(&args.desc)?;
    check_source(&field, &mesh, &args.desc)?;
    if args.vertex >= field.num_vertices() {
        return Err(CliError::data(format!(
            "reference vertex {} out of range for {} vertices",
            args.vertex,
            field.num_vertices()
        )));
    }
    let colors = dissimilarity_colors(&field.values, args.vertex);
    write_file(&args.out, |w| Ok(write_ply_colored(w, &mesh.mesh, &colors)?))?;
    Ok(())
}

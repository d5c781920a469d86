use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotalith::geometry::{normalize_cloud, rotate_cloud, sample_rotation, RotationMatrix};
use rotalith::io::{grid_to_csv, grid_to_tensor, read_archive, read_cloud, read_labels, write_archive};
use rotalith::pipeline::{
    extract_features, init_weights, match_descriptors, run_toy, toy_synth, weights_from_archive,
    weights_to_archive, HeadConfig, PrinConfig, SprinConfig, ToyClass, ToyProtocol,
};
use rotalith::so3::harmonics::coeff_count;
use rotalith::so3::{
    equivariance_report, svc, BandLimitedSignal, ShCoefficients, SphericalFilter, SvcEngine,
};
use rotalith::sprin::{
    dilated_knn, farthest_from, farthest_point_sampling, sparse_correlate, Aggregation, MlpFilter,
    SprinLayerCfg,
};
use rotalith::voxelizer::DEFAULT_XI;
use rotalith::{
    voxelize, Descriptor, FeatureMatrix, NetworkConfig, PipelineKind, SamplingConfig, SamplingMode,
    SphericalGrid, TensorArchive, Vec3,
};

/// A computation produced NaN or infinity.
#[derive(Debug, thiserror::Error)]
#[error("non-finite values in {0}")]
pub struct NonFinite(pub &'static str);

/// Rotation-invariant point cloud features.
///
/// Exit status: 0 success, 1 usage error, 2 input or format error,
/// 3 numeric failure.
#[derive(Parser, Debug)]
#[command(name = "rotalith", version, about)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "ROTALITH_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the spherical voxel grid of a cloud.
    Voxelize(VoxelizeArgs),
    /// Measure rotation equivariance (prin) or invariance (sprin) errors.
    EquivCheck(EquivCheckArgs),
    /// Write random network weights to an archive.
    InitWeights(InitWeightsArgs),
    /// Extract per-point or global descriptors.
    Features(FeaturesArgs),
    /// Nearest-neighbor matching between two descriptor archives.
    Match(MatchArgs),
    /// Time one kernel.
    Bench(BenchArgs),
    /// Train on unrotated synthetic shapes, test with and without rotation.
    Toy(ToyArgs),
    /// Farthest point sampling indices.
    Fps(FpsArgs),
    /// Dilated k-nearest-neighbor lists.
    Knn(KnnArgs),
}

#[derive(Args, Debug)]
pub struct CloudInput {
    /// Whitespace-separated `x y z [label]` lines.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Center and scale the cloud into the unit ball first.
    #[arg(long)]
    pub normalize: bool,
}

impl CloudInput {
    fn load(&self) -> Result<Vec<Vec3>> {
        let cloud = read_cloud(&self.input).with_context(|| format!("reading {}", self.input.display()))?;
        Ok(if self.normalize { normalize_cloud(&cloud.points)? } else { cloud.points })
    }
}

#[derive(Args, Debug)]
pub struct VoxelizeArgs {
    #[command(flatten)]
    pub cloud: CloudInput,
    #[arg(long, default_value_t = 8)]
    pub bandwidth: usize,
    #[arg(long, default_value_t = DEFAULT_XI)]
    pub xi: f64,
    /// daas or uniform
    #[arg(long, default_value = "daas")]
    pub mode: SamplingMode,
    /// Archive holding the grid as a `[2B, 2B, 2B, 1]` tensor named `grid`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `i,j,k,alpha,beta,h,c0` rows here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EquivCheckArgs {
    /// prin or sprin
    #[arg(long)]
    pub pipeline: PipelineKind,
    #[arg(long, default_value_t = 8)]
    pub bandwidth: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct InitWeightsArgs {
    /// prin or sprin
    #[arg(long)]
    pub pipeline: PipelineKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Args, Debug, Clone)]
pub struct NetArgs {
    /// Grid bandwidth (prin).
    #[arg(long, default_value_t = 8)]
    pub bandwidth: usize,
    /// Window width (prin).
    #[arg(long, default_value_t = DEFAULT_XI)]
    pub xi: f64,
    /// daas or uniform (prin).
    #[arg(long, default_value = "daas")]
    pub mode: SamplingMode,
    /// Feed radial shells as separate input channels (prin).
    #[arg(long)]
    pub shells_as_channels: bool,
    /// mean or max neighborhood aggregation (sprin).
    #[arg(long, default_value = "mean")]
    pub aggregation: Aggregation,
    /// Use every nearest neighbor instead of a random subset (sprin).
    #[arg(long)]
    pub unit_dilation: bool,
}

impl NetArgs {
    fn config(&self, kind: PipelineKind) -> Result<NetworkConfig> {
        let cfg = match kind {
            PipelineKind::Prin => NetworkConfig::Prin(PrinConfig {
                bandwidth: self.bandwidth,
                sampling: SamplingConfig::new(self.xi, self.mode)?,
                shells_as_channels: self.shells_as_channels,
                ..PrinConfig::default()
            }),
            PipelineKind::Sprin => {
                let mut c = SprinConfig { aggregation: self.aggregation, ..SprinConfig::default() };
                if self.unit_dilation {
                    c = c.unit_dilation();
                }
                NetworkConfig::Sprin(c)
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    /// prin or sprin; must match the weights.
    #[arg(long)]
    pub pipeline: PipelineKind,
    #[command(flatten)]
    pub cloud: CloudInput,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// One descriptor per point (default).
    #[arg(long, conflicts_with = "global")]
    pub per_point: bool,
    /// A single descriptor for the whole cloud.
    #[arg(long)]
    pub global: bool,
    /// Seed for random neighbor subsets (sprin).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Part labels of the points behind `--a`.
    #[arg(long, requires = "labels_b")]
    pub labels_a: Option<PathBuf>,
    #[arg(long, requires = "labels_a")]
    pub labels_b: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// svc, voxelize or sparse
    #[arg(long, default_value = "svc")]
    pub op: BenchOp,
    #[arg(long, default_value_t = 8)]
    pub bandwidth: usize,
    /// brute or spectral (svc only)
    #[arg(long = "impl", default_value = "spectral")]
    pub engine: SvcEngine,
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum BenchOp {
    Svc,
    Voxelize,
    Sparse,
}

#[derive(Args, Debug)]
pub struct ToyArgs {
    #[arg(long, value_delimiter = ',', default_value = "sphere,cube,cylinder")]
    pub classes: Vec<ToyClass>,
    /// Clouds per class.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 512)]
    pub points: usize,
    #[arg(long, default_value = "sprin")]
    pub pipeline: PipelineKind,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Args, Debug)]
pub struct FpsArgs {
    #[command(flatten)]
    pub cloud: CloudInput,
    #[arg(long)]
    pub m: usize,
    /// First index; defaults to the point farthest from the centroid.
    #[arg(long)]
    pub start: Option<usize>,
}

#[derive(Args, Debug)]
pub struct KnnArgs {
    #[command(flatten)]
    pub cloud: CloudInput,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Runs one subcommand and returns what it prints on standard output.
pub fn run(command: Command) -> Result<String> {
    match command {
        Command::Voxelize(a) => voxelize_cmd(a),
        Command::EquivCheck(a) => equiv_check(a),
        Command::InitWeights(a) => init_weights_cmd(a),
        Command::Features(a) => features(a),
        Command::Match(a) => match_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Toy(a) => toy(a),
        Command::Fps(a) => fps(a),
        Command::Knn(a) => knn(a),
    }
}

fn voxelize_cmd(a: VoxelizeArgs) -> Result<String> {
    let points = a.cloud.load()?;
    let cfg = SamplingConfig::new(a.xi, a.mode)?;
    let grid = voxelize(&points, a.bandwidth, &cfg)?;
    let mut archive = TensorArchive::new();
    archive.set_meta("bandwidth", a.bandwidth)?;
    archive.set_meta("xi", a.xi)?;
    archive.set_meta("mode", mode_name(a.mode))?;
    archive.insert("grid", grid_to_tensor(&grid)?)?;
    write_archive(&a.out, &archive).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(path) = &a.csv {
        std::fs::write(path, grid_to_csv(&grid)).with_context(|| format!("writing {}", path.display()))?;
    }
    let occupied = grid.data().iter().filter(|v| **v != 0.0).count();
    Ok(format!("points,cells,occupied\n{},{},{}\n", points.len(), grid.data().len(), occupied))
}

fn mode_name(m: SamplingMode) -> &'static str {
    match m {
        SamplingMode::Daas => "daas",
        SamplingMode::Uniform => "uniform",
    }
}

fn equiv_check(a: EquivCheckArgs) -> Result<String> {
    let mut out = String::from("trial,rotation,max_abs_err,mean_abs_err\n");
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    match a.pipeline {
        PipelineKind::Prin => {
            let b = a.bandwidth;
            if b < 2 {
                return Err(rotalith::Error::BandwidthTooSmall { got: b, min: 2 }.into());
            }
            let signal = BandLimitedSignal::random(b, 1, b - 1, rng.random())?;
            let data = (0..coeff_count(b - 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
            let psi = SphericalFilter::spectral(b, 1, 1, ShCoefficients::from_data(b - 1, 1, data)?)?;
            for t in 0..a.trials {
                // alternate exact grid rotations with generic ones
                let q = if t % 2 == 0 {
                    let shift = rng.random_range(1..2 * b as i64);
                    RotationMatrix::rot_z(rotalith::geometry::grid_angle(shift, b))
                } else {
                    sample_rotation(&mut rng)
                };
                let r = equivariance_report(&signal, &psi, &q, SvcEngine::Spectral)?;
                check_finite(&[r.max_abs_err, r.mean_abs_err], "equivariance errors")?;
                writeln!(out, "{t},{},{:.6e},{:.6e}", r.kind.label(), r.max_abs_err, r.mean_abs_err)?;
            }
        }
        PipelineKind::Sprin => {
            let cfg = NetworkConfig::Sprin(SprinConfig::default());
            let weights = init_weights(&cfg, a.seed)?;
            let cloud = toy_synth(&[ToyClass::Cube], 1, 512, 0.01, a.seed)?.remove(0).points;
            let (base, _) = extract_features(&cloud, &cfg, &weights, a.seed)?;
            for t in 0..a.trials {
                let q = sample_rotation(&mut rng);
                let (f, _) = extract_features(&rotate_cloud(&q, &cloud), &cfg, &weights, a.seed)?;
                let errs: Vec<f64> = f.data().iter().zip(base.data()).map(|(x, y)| (x - y).abs()).collect();
                let max = errs.iter().copied().fold(0.0, f64::max);
                let mean = errs.iter().sum::<f64>() / errs.len().max(1) as f64;
                check_finite(&[max, mean], "invariance errors")?;
                writeln!(out, "{t},haar,{max:.6e},{mean:.6e}")?;
            }
        }
    }
    Ok(out)
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NonFinite(what).into())
    }
}

fn init_weights_cmd(a: InitWeightsArgs) -> Result<String> {
    let cfg = a.net.config(a.pipeline)?;
    let weights = init_weights(&cfg, a.seed)?;
    let archive = weights_to_archive(&cfg, &weights)?;
    write_archive(&a.out, &archive).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(format!("pipeline,tensors,config_hash\n{},{},{:016x}\n", a.pipeline, archive.len(), cfg.config_hash()))
}

fn features(a: FeaturesArgs) -> Result<String> {
    let archive = read_archive(&a.weights).with_context(|| format!("reading {}", a.weights.display()))?;
    let (cfg, weights) = weights_from_archive(&archive)?;
    if cfg.kind() != a.pipeline {
        bail!(rotalith::Error::Archive(format!(
            "{} holds {} weights, not {}",
            a.weights.display(),
            cfg.kind(),
            a.pipeline
        )));
    }
    let points = a.cloud.load()?;
    let (per_point, global) = extract_features(&points, &cfg, &weights, a.seed)?;
    let features = if a.global { FeatureMatrix::from_data(1, global.len(), global)? } else { per_point };
    if !features.is_finite() {
        return Err(NonFinite("features").into());
    }
    let descriptor = Descriptor::new(features, shape_id(&a.cloud.input), cfg.config_hash())?;
    write_archive(&a.out, &descriptor.to_archive()?)
        .with_context(|| format!("writing {}", a.out.display()))?;
    Ok(format!("rows,cols\n{},{}\n", descriptor.features.rows(), descriptor.features.cols()))
}

fn shape_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| "cloud".into(), |s| s.to_string_lossy().into_owned())
}

fn match_cmd(a: MatchArgs) -> Result<String> {
    let load = |p: &Path| -> Result<Descriptor> {
        let archive = read_archive(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(Descriptor::from_archive(&archive)?)
    };
    let (da, db) = (load(&a.a)?, load(&a.b)?);
    if da.config_hash != db.config_hash {
        eprintln!("warning: descriptors come from different network configurations");
    }
    let labels = match (&a.labels_a, &a.labels_b) {
        (Some(la), Some(lb)) => Some((read_labels(la)?, read_labels(lb)?)),
        _ => None,
    };
    let m = match_descriptors(&da, &db, labels.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice())))?;
    let accuracy = m.accuracy.unwrap_or_else(|| m.identity_rate(&da, &db));
    let mut out = format!("accuracy,{accuracy:.6}\nindex,match,distance\n");
    for (i, (&j, d)) in m.map.iter().zip(&m.distances).enumerate() {
        writeln!(out, "{},{},{d:.6e}", da.indices[i], db.indices[j])?;
    }
    Ok(out)
}

fn bench(a: BenchArgs) -> Result<String> {
    if a.repeat == 0 {
        bail!(rotalith::Error::InvalidParameter("--repeat must be at least 1".into()));
    }
    let b = a.bandwidth;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut timings = Vec::with_capacity(a.repeat);
    let label = match a.op {
        BenchOp::Svc => {
            if b < 2 {
                return Err(rotalith::Error::BandwidthTooSmall { got: b, min: 2 }.into());
            }
            let grid = SphericalGrid::from_fn(b, 1, |_, _, _, _| rng.random_range(-1.0..1.0));
            let data = (0..coeff_count(b - 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
            let psi = SphericalFilter::spectral(b, 1, 1, ShCoefficients::from_data(b - 1, 1, data)?)?;
            for _ in 0..a.repeat {
                let t = Instant::now();
                std::hint::black_box(svc(&grid, &psi, a.engine)?);
                timings.push(t.elapsed().as_secs_f64());
            }
            match a.engine {
                SvcEngine::BruteForce => "brute",
                SvcEngine::Spectral => "spectral",
            }
        }
        BenchOp::Voxelize => {
            let points = ball_cloud(2048, &mut rng);
            for _ in 0..a.repeat {
                let t = Instant::now();
                std::hint::black_box(voxelize(&points, b, &SamplingConfig::default())?);
                timings.push(t.elapsed().as_secs_f64());
            }
            "daas"
        }
        BenchOp::Sparse => {
            let points = ball_cloud(1024, &mut rng);
            let filter = MlpFilter::random(0, &[64], 64, &mut rng)?;
            let centers: Vec<usize> = (0..points.len()).collect();
            let cfg = SprinLayerCfg::new(32, 2);
            for _ in 0..a.repeat {
                let t = Instant::now();
                std::hint::black_box(sparse_correlate(&points, None, &centers, &filter, &cfg, &mut rng)?);
                timings.push(t.elapsed().as_secs_f64());
            }
            "k32d2"
        }
    };
    let mut sorted = timings.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = timings.iter().sum::<f64>() / timings.len() as f64;
    let op = format!("{:?}", a.op).to_lowercase();
    Ok(format!(
        "op,impl,bandwidth,repeat,min_s,median_s,mean_s,max_s\n{op},{label},{b},{},{:.6e},{:.6e},{mean:.6e},{:.6e}\n",
        a.repeat,
        sorted[0],
        sorted[sorted.len() / 2],
        sorted[sorted.len() - 1],
    ))
}

fn ball_cloud(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let p =
            Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm() <= 1.0 {
            pts.push(p);
        }
    }
    pts
}

fn toy(a: ToyArgs) -> Result<String> {
    let cfg = a.net.config(a.pipeline)?;
    let protocol = ToyProtocol {
        head: HeadConfig { hidden: vec![64], classes: a.classes.len() },
        classes: a.classes,
        n_per_class: a.n,
        n_points: a.points,
        noise_sigma: a.noise,
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed,
        ..ToyProtocol::default()
    };
    let r = run_toy(&protocol, &cfg)?;
    check_finite(&[r.train_accuracy, r.nr_accuracy, r.ar_accuracy], "toy accuracies")?;
    Ok(format!(
        "pipeline,train_accuracy,nr_accuracy,ar_accuracy,gap\n{},{:.4},{:.4},{:.4},{:.4}\n",
        a.pipeline,
        r.train_accuracy,
        r.nr_accuracy,
        r.ar_accuracy,
        r.gap()
    ))
}

fn fps(a: FpsArgs) -> Result<String> {
    let points = a.cloud.load()?;
    let start = match a.start {
        Some(s) => s,
        None => farthest_from(&points, rotalith::geometry::centroid(&points))
            .ok_or(rotalith::Error::EmptyCloud)?,
    };
    let idx = farthest_point_sampling(&points, a.m, start)?;
    let mut out = String::from("rank,index\n");
    for (r, i) in idx.iter().enumerate() {
        writeln!(out, "{r},{i}")?;
    }
    Ok(out)
}

fn knn(a: KnnArgs) -> Result<String> {
    let points = a.cloud.load()?;
    let mut out = String::from("query,neighbors\n");
    for q in 0..points.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        rng.set_stream(q as u64);
        let nbrs = dilated_knn(&points, q, a.k, a.d, &mut rng)?;
        let list: Vec<String> = nbrs.iter().map(ToString::to_string).collect();
        writeln!(out, "{q},{}", list.join(" "))?;
    }
    Ok(out)
}

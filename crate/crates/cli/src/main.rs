//! `shapedc`: stage-oriented frontend. Every stage reads and writes plain
//! files so expensive steps can be cached between runs.

mod config;

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use shapedc::classifier::{classify_image, ClassifierConfig, DEFAULT_VOTE_EPS};
use shapedc::io::{self, SampleType};
use shapedc::pipeline::score;
use shapedc::preprocess::z_normalize;
use shapedc::shapelets::{haar_shapelets, learn_shapelets};
use shapedc::sparse::DEFAULT_RESIDUAL_TOL;
use shapedc::{
    generate_scene, slic_segment_with, HyperCube, Layout, MrfConfig, SceneConfig, Segmentation, ShapeletSet,
    SlicParams, TrainingSet, Workers,
};

#[derive(Parser, Debug)]
#[command(name = "shapedc", version, about = "Shapelet-based sparse-representation classification of hyperspectral images")]
#[command(args_override_self = true)]
struct Cli {
    /// key=value file with defaults for any flag; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true, env = "SHAPE_DC_WORKERS", value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene: cube, ground truth and train/test masks.
    Synth(SynthArgs),
    /// Superpixel segmentation of a cube.
    Segment(SegmentArgs),
    /// Learn shapelets from a segmentation (or emit the Haar set).
    Shapelets(ShapeletArgs),
    /// Classify every pixel of a cube.
    Classify(ClassifyArgs),
    /// Run the full chain over a grid of parameters and tabulate accuracy.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct CubeArgs {
    /// Cube header file.
    #[arg(long)]
    header: PathBuf,
    /// Band-sequential data file.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LayoutArg {
    Blocks,
    Diagonal,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Directory receiving cube.hdr, cube.dat, truth.txt, train.txt, test.txt.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 60)]
    height: usize,
    #[arg(long, default_value_t = 60)]
    width: usize,
    #[arg(long, default_value_t = 8)]
    bands: usize,
    #[arg(long, default_value_t = 3)]
    classes: u32,
    #[arg(long, default_value_t = 15)]
    block_size: usize,
    #[arg(long, value_enum, default_value = "blocks")]
    layout: LayoutArg,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    /// Distance of the closest class means in units of the noise sigma.
    #[arg(long, default_value_t = 5.0)]
    separation: f64,
    #[arg(long, default_value_t = 20)]
    train_per_class: usize,
    #[arg(long, value_enum, default_value = "f64")]
    dtype: DtypeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct SlicArgs {
    /// Approximate superpixel side in pixels.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(2..))]
    target_size: u64,
    #[arg(long, default_value_t = 1.0)]
    compactness: f64,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
}

impl SlicArgs {
    fn params(&self) -> SlicParams {
        SlicParams {
            target_size: self.target_size as usize,
            compactness: self.compactness,
            iterations: self.iterations,
        }
    }
}

#[derive(Args, Debug)]
struct SegmentArgs {
    #[command(flatten)]
    cube: CubeArgs,
    #[command(flatten)]
    slic: SlicArgs,
    /// Accepted for symmetry with the other stages; segmentation is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output label map.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct LearnArgs {
    /// Window step when harvesting binary patches.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    stride: u64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the synthetic dyadic (Haar-like) patterns instead of learning.
    #[arg(long)]
    haar: bool,
}

#[derive(Args, Debug)]
struct ShapeletArgs {
    /// Segmentation label map (not needed with --haar).
    #[arg(long, required_unless_present = "haar")]
    segmentation: Option<PathBuf>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    num_shapelets: u64,
    #[arg(long, default_value_t = 9, value_parser = clap::value_parser!(u64).range(2..))]
    patch_side: u64,
    #[command(flatten)]
    learn: LearnArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct CodingArgs {
    /// Dictionary columns used per patch (W).
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    sparsity: u64,
    /// Weight of the region histogram prior.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Penalty for a pixel whose class disagrees with its region.
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long, default_value_t = DEFAULT_VOTE_EPS)]
    vote_eps: f64,
}

impl CodingArgs {
    fn config(&self, workers: Workers) -> Result<ClassifierConfig> {
        Ok(ClassifierConfig {
            sparsity: self.sparsity as usize,
            mrf: MrfConfig::new(self.gamma, self.omega)?,
            vote_eps: self.vote_eps,
            residual_tol: DEFAULT_RESIDUAL_TOL,
            workers,
        })
    }
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    cube: CubeArgs,
    /// Training mask (label map, 0 = unlabeled).
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    shapelets: PathBuf,
    #[command(flatten)]
    coding: CodingArgs,
    /// Output label map.
    #[arg(long)]
    out: PathBuf,
    /// Reference mask to score against.
    #[arg(long, requires = "metrics")]
    test: Option<PathBuf>,
    /// Metrics CSV (requires --test).
    #[arg(long, requires = "test")]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    cube: CubeArgs,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "10", value_parser = clap::value_parser!(u64).range(1..))]
    num_shapelets: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "9", value_parser = clap::value_parser!(u64).range(2..))]
    patch_side: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "3", value_parser = clap::value_parser!(u64).range(1..))]
    sparsity: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "20", value_parser = clap::value_parser!(u64).range(2..))]
    target_size: Vec<u64>,
    #[arg(long, default_value_t = 1.0)]
    compactness: f64,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[command(flatten)]
    learn: LearnArgs,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long, default_value_t = DEFAULT_VOTE_EPS)]
    vote_eps: f64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

/// Files written by a command; removed again unless the command succeeds.
struct Outputs {
    paths: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new() -> Self {
        Self { paths: Vec::new(), committed: false }
    }

    fn claim(&mut self, path: &Path) -> PathBuf {
        self.paths.push(path.to_path_buf());
        path.to_path_buf()
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.paths {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

fn load_cube(args: &CubeArgs) -> Result<HyperCube> {
    let cube = io::read_cube(&args.header, &args.data)
        .with_context(|| format!("reading cube {} / {}", args.header.display(), args.data.display()))?;
    Ok(z_normalize(&cube))
}

fn load_mask(path: &Path, cube: &HyperCube) -> Result<shapedc::LabelMap> {
    let map = io::read_label_map(path).with_context(|| format!("reading {}", path.display()))?;
    if map.height() != cube.height() || map.width() != cube.width() {
        anyhow::bail!(
            "{} is {}x{} but the cube is {}x{}",
            path.display(),
            map.height(),
            map.width(),
            cube.height(),
            cube.width()
        );
    }
    Ok(map)
}

fn synth(args: &SynthArgs, outputs: &mut Outputs) -> Result<()> {
    let scene = generate_scene(&SceneConfig {
        height: args.height,
        width: args.width,
        bands: args.bands,
        classes: args.classes,
        block_size: args.block_size,
        layout: match args.layout {
            LayoutArg::Blocks => Layout::Blocks,
            LayoutArg::Diagonal => Layout::Diagonal,
        },
        noise_sigma: args.noise_sigma,
        separation: args.separation,
        train_per_class: args.train_per_class,
        seed: args.seed,
    })?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let dtype = match args.dtype {
        DtypeArg::F32 => SampleType::F32,
        DtypeArg::F64 => SampleType::F64,
    };
    let dir = &args.out_dir;
    io::write_cube(&scene.cube, dtype, outputs.claim(&dir.join("cube.hdr")), outputs.claim(&dir.join("cube.dat")))?;
    io::write_label_map(&scene.truth, outputs.claim(&dir.join("truth.txt")))?;
    io::write_label_map(&scene.train, outputs.claim(&dir.join("train.txt")))?;
    io::write_label_map(&scene.test, outputs.claim(&dir.join("test.txt")))?;
    Ok(())
}

fn segment(args: &SegmentArgs, workers: Workers, outputs: &mut Outputs) -> Result<()> {
    let cube = load_cube(&args.cube)?;
    let seg = slic_segment_with(&cube, &args.slic.params(), workers)?;
    io::write_label_map(&seg.to_label_map(), outputs.claim(&args.out))?;
    Ok(())
}

fn make_shapelets(seg: Option<&Segmentation>, count: usize, side: usize, learn: &LearnArgs, workers: Workers) -> Result<ShapeletSet> {
    if learn.haar {
        return Ok(haar_shapelets(side, count)?);
    }
    let seg = seg.context("a segmentation is required unless --haar is given")?;
    Ok(learn_shapelets(seg, side, count, learn.stride as usize, learn.max_iter, learn.seed, workers)?)
}

fn shapelets(args: &ShapeletArgs, workers: Workers, outputs: &mut Outputs) -> Result<()> {
    let seg = match (&args.segmentation, args.learn.haar) {
        (Some(path), false) => {
            let map = io::read_label_map(path).with_context(|| format!("reading {}", path.display()))?;
            Some(Segmentation::from_label_map(&map)?)
        }
        _ => None,
    };
    let set = make_shapelets(seg.as_ref(), args.num_shapelets as usize, args.patch_side as usize, &args.learn, workers)?;
    io::write_shapelets(&set, outputs.claim(&args.out))?;
    Ok(())
}

fn classify(args: &ClassifyArgs, workers: Workers, outputs: &mut Outputs) -> Result<()> {
    let cube = load_cube(&args.cube)?;
    let train = load_mask(&args.train, &cube)?;
    let training = TrainingSet::from_mask(&cube, &train)?;
    let set = io::read_shapelets(&args.shapelets).with_context(|| format!("reading {}", args.shapelets.display()))?;
    let labels = classify_image(&cube, &training, &set, &args.coding.config(workers)?)?;
    io::write_label_map(&labels, outputs.claim(&args.out))?;
    if let (Some(test), Some(metrics)) = (&args.test, &args.metrics) {
        let test = load_mask(test, &cube)?;
        io::write_metrics(&score(&labels, &test, &training)?, outputs.claim(metrics))?;
    }
    Ok(())
}

fn sweep(args: &SweepArgs, workers: Workers, outputs: &mut Outputs) -> Result<()> {
    let cube = load_cube(&args.cube)?;
    let train = load_mask(&args.train, &cube)?;
    let test = load_mask(&args.test, &cube)?;
    let training = TrainingSet::from_mask(&cube, &train)?;
    let mut segmentations: BTreeMap<u64, Segmentation> = BTreeMap::new();
    let mut csv = String::from("num_shapelets,patch_side,W,superpixel_size,OA,AA,kappa\n");
    for &n in &args.num_shapelets {
        for &side in &args.patch_side {
            for &w in &args.sparsity {
                for &size in &args.target_size {
                    let seg = if args.learn.haar {
                        None
                    } else {
                        if let Entry::Vacant(slot) = segmentations.entry(size) {
                            let params = SlicParams {
                                target_size: size as usize,
                                compactness: args.compactness,
                                iterations: args.iterations,
                            };
                            slot.insert(slic_segment_with(&cube, &params, workers)?);
                        }
                        segmentations.get(&size)
                    };
                    let set = make_shapelets(seg, n as usize, side as usize, &args.learn, workers)
                        .with_context(|| format!("shapelets for N={n}, side={side}, superpixel size {size}"))?;
                    let coding = CodingArgs {
                        sparsity: w,
                        gamma: args.gamma,
                        omega: args.omega,
                        vote_eps: args.vote_eps,
                    };
                    let labels = classify_image(&cube, &training, &set, &coding.config(workers)?)?;
                    let m = score(&labels, &test, &training)?;
                    let _ = writeln!(csv, "{n},{side},{w},{size},{:.6},{:.6},{:.6}", m.overall, m.average, m.kappa);
                }
            }
        }
    }
    let out = outputs.claim(&args.out);
    std::fs::write(&out, csv).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn run(cli: &Cli, outputs: &mut Outputs) -> Result<()> {
    let workers = cli.workers.map_or(Workers::Auto, |n| Workers::from_count(n as usize));
    match &cli.command {
        Command::Synth(a) => synth(a, outputs),
        Command::Segment(a) => segment(a, workers, outputs),
        Command::Shapelets(a) => shapelets(a, workers, outputs),
        Command::Classify(a) => classify(a, workers, outputs),
        Command::Sweep(a) => sweep(a, workers, outputs),
    }
}

fn main() -> ExitCode {
    let args = match config::merge(&Cli::command(), std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let mut outputs = Outputs::new();
    match run(&cli, &mut outputs) {
        Ok(()) => {
            outputs.commit();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

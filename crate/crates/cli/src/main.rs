//! Command-line front end: dataset generation, training, matching, and
//! evaluation over the file formats of the core crate.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shapecorr::got::MatchMode;
use shapecorr::mesh::{load_mesh, MeshFormat, TriangleMesh};
use shapecorr::pipeline::{
    evaluate, generate_synthetic_pair, load_dataset, match_pair, save_pair, train, BaseShape,
    DeformParams, TrainConfig,
};
use shapecorr::ParameterStore;

#[derive(Parser)]
#[command(name = "shapecorr", version, about = "Coarse correspondence between deformable meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of deformed mesh pairs.
    Gen(GenArgs),
    /// Train on a dataset directory and write checkpoints and logs.
    Train(TrainArgs),
    /// Match two meshes with a trained checkpoint.
    Match(MatchArgs),
    /// Evaluate a checkpoint over a dataset directory.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output directory for pair files.
    #[arg(long)]
    out: PathBuf,
    /// Number of pairs.
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Base shape: cylinder, sphere, or bar.
    #[arg(long, default_value = "cylinder")]
    base: String,
    /// Mesh resolution as AROUNDxALONG, e.g. 24x24.
    #[arg(long, default_value = "24x24")]
    resolution: String,
    /// Upper bound for the uniformly drawn bend angle (radians).
    #[arg(long, default_value_t = 1.0)]
    bend_max: f64,
    /// Upper bound for the twist rate (radians per unit height).
    #[arg(long, default_value_t = 0.0)]
    twist_max: f64,
    /// Upper bound for the bump amplitude.
    #[arg(long, default_value_t = 0.0)]
    bump_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Training configuration file (key=value); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory produced by `gen`.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints, the log, and the resolved config.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MatchArgs {
    /// Source mesh (.off or .ply).
    #[arg(long)]
    source: PathBuf,
    /// Target mesh (.off or .ply).
    #[arg(long)]
    target: PathBuf,
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output match file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Match extraction mode: row_argmax or mutual.
    #[arg(long, default_value = "row_argmax")]
    mode: String,
    /// Also write the two shape graphs next to the match file.
    #[arg(long)]
    dump_graphs: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory with ground-truth correspondences.
    #[arg(long)]
    data: PathBuf,
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the per-pair report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let missing_checkpoint = match &cli.command {
        Command::Match(a) if !a.checkpoint.exists() => Some(a.checkpoint.clone()),
        Command::Eval(a) if !a.checkpoint.exists() => Some(a.checkpoint.clone()),
        _ => None,
    };
    if let Some(path) = missing_checkpoint {
        eprintln!("error: checkpoint not found: {}", path.display());
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => run_gen(args),
        Command::Train(args) => run_train(args),
        Command::Match(args) => run_match(args),
        Command::Eval(args) => run_eval(args),
    }
}

fn parse_resolution(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("resolution {s:?} is not of the form AROUNDxALONG"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn run_gen(args: GenArgs) -> Result<()> {
    let base = BaseShape::parse(&args.base)
        .with_context(|| format!("unknown base shape {:?} (cylinder, sphere, bar)", args.base))?;
    let resolution = parse_resolution(&args.resolution)?;
    if args.count == 0 {
        bail!("count must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    for k in 0..args.count {
        let deformation = DeformParams {
            bend_angle: rng.random::<f64>() * args.bend_max,
            twist_rate: rng.random::<f64>() * args.twist_max,
            bump_amplitude: rng.random::<f64>() * args.bump_max,
        };
        let sample = generate_synthetic_pair(base, resolution, deformation, &mut rng)
            .with_context(|| format!("generating pair {k}"))?;
        save_pair(&args.out, k, &sample).with_context(|| format!("writing pair {k}"))?;
    }
    println!("wrote {} {} pairs to {}", args.count, base.name(), args.out.display());
    Ok(())
}

fn load_config(path: &Option<PathBuf>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            TrainConfig::from_text(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn run_train(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let dataset = load_dataset(&args.data)
        .with_context(|| format!("loading dataset from {}", args.data.display()))?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("config.txt"), cfg.to_text())?;

    let out_dir = args.out.clone();
    let outcome = train(&cfg, &dataset, |epoch, store| {
        let path = out_dir.join(format!("checkpoint_{epoch:04}.ckpt"));
        let mut file = fs::File::create(&path)?;
        store.save(&mut file)?;
        Ok(())
    })?;

    let final_path = args.out.join("checkpoint_final.ckpt");
    let mut file = fs::File::create(&final_path)?;
    outcome.store.save(&mut file)?;
    fs::write(args.out.join("training_log.tsv"), outcome.log.to_tsv())?;

    let last = outcome.log.entries.last().expect("non-empty log");
    println!(
        "trained {} epochs on {} pairs; final total loss {:.6}; checkpoint {}",
        cfg.epochs,
        dataset.len(),
        last.total,
        final_path.display()
    );
    Ok(())
}

fn load_mesh_path(path: &Path) -> Result<TriangleMesh> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("off") | Some("OFF") => MeshFormat::Off,
        Some("ply") | Some("PLY") => MeshFormat::PlyAscii,
        other => bail!("cannot infer mesh format from extension {:?} of {}", other, path.display()),
    };
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_mesh(&bytes, format).with_context(|| format!("parsing {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<ParameterStore> {
    let mut file =
        fs::File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    ParameterStore::load(&mut file)
        .with_context(|| format!("loading checkpoint {}", path.display()))
}

fn run_match(args: MatchArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let mode = MatchMode::parse(&args.mode)
        .with_context(|| format!("unknown mode {:?} (row_argmax, mutual)", args.mode))?;
    let source = load_mesh_path(&args.source)?;
    let target = load_mesh_path(&args.target)?;
    let store = load_checkpoint(&args.checkpoint)?;
    let outcome = match_pair(&store, &cfg, &source, &target, mode)?;
    fs::write(&args.out, outcome.matches.to_text())
        .with_context(|| format!("writing {}", args.out.display()))?;
    if args.dump_graphs {
        let stem = args.out.with_extension("");
        let src_path = PathBuf::from(format!("{}_source_graph.txt", stem.display()));
        let dst_path = PathBuf::from(format!("{}_target_graph.txt", stem.display()));
        fs::write(&src_path, outcome.source.shape_graph.to_text())?;
        fs::write(&dst_path, outcome.target.shape_graph.to_text())?;
        println!("dumped shape graphs to {} and {}", src_path.display(), dst_path.display());
    }
    println!(
        "matched {} seeds ({} pairs, bijectivity {:.1}%) -> {}",
        outcome.matches.n,
        outcome.matches.pairs.len(),
        outcome.matches.bijectivity_rate(),
        args.out.display()
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let dataset = load_dataset(&args.data)
        .with_context(|| format!("loading dataset from {}", args.data.display()))?;
    let store = load_checkpoint(&args.checkpoint)?;
    let report = evaluate(&store, &cfg, &dataset)?;
    match &args.out {
        Some(path) => fs::write(path, report.to_tsv())?,
        None => print!("{}", report.to_tsv()),
    }
    println!("{}", report.summary_line());
    Ok(())
}

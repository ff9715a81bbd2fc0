use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scanmix::config::PipelineConfig;
use scanmix::error::{Error, Result};
use scanmix::io::{load_manifest, DomainRole, FileFormat};
use scanmix::pipeline::{
    dataset_ratios, evaluate, generate_scenes, make_toy_benchmark, mix_manifests, pseudo_label_scenes, run_pipeline,
    scan_scenes, stage_selftrain, stage_source_only, stage_vss, SceneSet, ToyBenchmarkConfig,
};
use scanmix::rng::RandomStream;
use scanmix::scenegen::SceneTemplate;
use scanmix::segmenter::{write_loss_trace, SegmenterModel};

#[derive(Parser)]
#[command(name = "scanmix", version, about = "Sim-to-real point cloud augmentation and self-training")]
struct Cli {
    /// Pipeline config file (key=value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes from the room templates.
    GenScenes(GenArgs),
    /// Virtual-scan every scene of a manifest.
    Scan {
        /// Input manifest (default: the configured source manifest).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "ply_binary_le")]
        format: FileFormat,
    },
    /// Compose mixed scenes from a source and a labeled target manifest.
    Mix {
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        count: usize,
    },
    /// Pseudo-label the target scenes with a model.
    PseudoLabel {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Pretrain on the source scenes.
    Pretrain {
        #[arg(long)]
        source: Option<PathBuf>,
        /// Skip the virtual scan (source-only baseline).
        #[arg(long)]
        no_vss: bool,
    },
    /// Self-train from a pretrained model on mixed scenes.
    Selftrain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        source: Option<PathBuf>,
        /// Raw target manifest, pseudo-labeled with `--model`.
        #[arg(long, conflicts_with = "pseudo")]
        target: Option<PathBuf>,
        /// Already pseudo-labeled target manifest.
        #[arg(long)]
        pseudo: Option<PathBuf>,
    },
    /// Per-class IoU and mIoU of a model on labeled scenes.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Every stage: both pretrainings, pseudo labels, self-training, evaluation.
    RunAll,
    /// Write the toy sim/real benchmark and its pipeline config.
    MakeToyBenchmark {
        #[arg(long, default_value_t = 20)]
        n_source: usize,
        #[arg(long, default_value_t = 20)]
        n_target: usize,
        /// Points per square meter of surface.
        #[arg(long, default_value_t = 200.0)]
        density: f64,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Points per square meter of surface.
    #[arg(long, default_value_t = 200.0)]
    density: f64,
    /// Comma-separated template names, used in turn.
    #[arg(long, value_delimiter = ',', default_value = "one-occluder,cluttered,corridor,tail-heavy,two-room")]
    templates: Vec<String>,
    #[arg(long, default_value = "source")]
    role: DomainRole,
    #[arg(long, default_value = "ply_binary_le")]
    format: FileFormat,
    /// Scene id prefix.
    #[arg(long, default_value = "scene")]
    prefix: String,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::GenScenes(_) => "gen-scenes",
            Command::Scan { .. } => "scan",
            Command::Mix { .. } => "mix",
            Command::PseudoLabel { .. } => "pseudo-label",
            Command::Pretrain { .. } => "pretrain",
            Command::Selftrain { .. } => "selftrain",
            Command::Evaluate { .. } => "evaluate",
            Command::RunAll => "run-all",
            Command::MakeToyBenchmark { .. } => "make-toy-benchmark",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("scanmix: cannot start {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let stage = cli.command.stage();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Stage { .. }) => {
            eprintln!("scanmix: {e}");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("scanmix: stage {stage} failed: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| e.in_stage("config"))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn manifest_arg(arg: Option<&PathBuf>, configured: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    arg.or(configured)
        .cloned()
        .ok_or_else(|| Error::Config(format!("no {what} manifest given (pass --{what} or set `{what}` in the config)")))
}

fn load_set(path: &Path) -> Result<SceneSet> {
    SceneSet::load(&load_manifest(path)?)
}

fn load_model(path: &Path, scenes: &SceneSet) -> Result<SegmenterModel> {
    SegmenterModel::load(path, scenes.taxonomy()?.clone())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cfg.out_dir.clone();
    match &cli.command {
        Command::GenScenes(a) => {
            let templates = a
                .templates
                .iter()
                .map(|n| SceneTemplate::from_name(n).ok_or_else(|| Error::Config(format!("unknown template `{n}`"))))
                .collect::<Result<Vec<_>>>()?;
            let set = generate_scenes(a.count, &templates, a.density, &a.prefix, &mut RandomStream::new(cfg.seed))?;
            let m = set.write(&out, a.role, a.format)?;
            println!("wrote {} scenes, manifest {}", set.clouds.len(), m.display());
        }
        Command::Scan { input, format } => {
            let input = manifest_arg(input.as_ref(), cfg.source_manifest.as_ref(), "input")?;
            let manifest = load_manifest(&input)?;
            let set = SceneSet::load(&manifest)?;
            let scanned = scan_scenes(&set, &cfg.vss, &mut RandomStream::new(cfg.seed))?;
            let m = scanned.write(&out, manifest.role, *format)?;
            let before: usize = set.clouds.iter().map(|c| c.len()).sum();
            let after: usize = scanned.clouds.iter().map(|c| c.len()).sum();
            println!("kept {after} of {before} points, manifest {}", m.display());
        }
        Command::Mix { source, target, count } => {
            let source = manifest_arg(source.as_ref(), cfg.source_manifest.as_ref(), "source")?;
            let target = manifest_arg(target.as_ref(), cfg.target_manifest.as_ref(), "target")?;
            let m = mix_manifests(&source, &target, &cfg.tacm, *count, cfg.seed, &out)?;
            println!("wrote {count} mixed scenes, manifest {}", m.display());
        }
        Command::PseudoLabel { model, target } => {
            let target = manifest_arg(target.as_ref(), cfg.target_manifest.as_ref(), "target")?;
            let set = load_set(&target)?;
            let model = load_model(model, &set)?;
            let pseudo = pseudo_label_scenes(&model, &set.clouds, &cfg.features, &cfg.pseudo)?;
            let kept: usize = pseudo.iter().map(|c| c.class_counts().iter().sum::<usize>()).sum();
            let total: usize = pseudo.iter().map(|c| c.len()).sum();
            let m = SceneSet { ids: set.ids, clouds: pseudo }.write(&out, DomainRole::Target, FileFormat::PlyBinaryLe)?;
            println!("labeled {kept} of {total} points, manifest {}", m.display());
        }
        Command::Pretrain { source, no_vss } => {
            let source = manifest_arg(source.as_ref(), cfg.source_manifest.as_ref(), "source")?;
            let set = load_set(&source)?;
            let trained = if *no_vss { stage_source_only(&set.clouds, &cfg)? } else { stage_vss(&set.clouds, &cfg)? };
            create_dir(&out)?;
            trained.model.save(out.join("model.segmodel"))?;
            write_loss_trace(&trained.losses, out.join("loss.csv"))?;
            println!("final loss {:.6}", trained.losses.last().copied().unwrap_or(f64::NAN));
        }
        Command::Selftrain { model, source, target, pseudo } => {
            let source = manifest_arg(source.as_ref(), cfg.source_manifest.as_ref(), "source")?;
            let sources = load_set(&source)?;
            let start = load_model(model, &sources)?;
            let labeled = match pseudo {
                Some(p) => load_set(p)?.clouds,
                None => {
                    let target = manifest_arg(target.as_ref(), cfg.target_manifest.as_ref(), "target")?;
                    pseudo_label_scenes(&start, &load_set(&target)?.clouds, &cfg.features, &cfg.pseudo)?
                }
            };
            let ratios = dataset_ratios(&labeled)?;
            let trained = stage_selftrain(&start, &sources.clouds, &labeled, &ratios, &cfg)?;
            create_dir(&out)?;
            trained.model.save(out.join("model.segmodel"))?;
            write_loss_trace(&trained.losses, out.join("loss.csv"))?;
            println!("final loss {:.6}", trained.losses.last().copied().unwrap_or(f64::NAN));
        }
        Command::Evaluate { model, target } => {
            let target = manifest_arg(target.as_ref(), cfg.target_manifest.as_ref(), "target")?;
            let set = load_set(&target)?;
            let model = load_model(model, &set)?;
            let (_, iou) = evaluate(&model, &set.clouds, &cfg.features)?;
            create_dir(&out)?;
            let csv = iou.to_csv(model.taxonomy());
            let path = out.join("metrics.csv");
            std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
            print!("{csv}");
        }
        Command::RunAll => {
            let report = run_pipeline(&cfg)?;
            print!("{}", report.to_text());
        }
        Command::MakeToyBenchmark { n_source, n_target, density } => {
            let bench = ToyBenchmarkConfig {
                n_source: *n_source,
                n_target: *n_target,
                density: *density,
                ..ToyBenchmarkConfig::default()
            };
            let b = make_toy_benchmark(&out, cfg.seed, &bench)?;
            println!("config {}", b.config.display());
        }
    }
    Ok(())
}

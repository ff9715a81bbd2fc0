//! End-to-end runs: pretraining with and without the virtual scan, pseudo
//! labeling, self-training on mixed scenes and evaluation, plus the
//! file-level steps behind each command line subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::augment::AugmentConfig;
use crate::cloud::{ClassTaxonomy, LabeledPointCloud, TOY_INDOOR};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::{load_manifest, write_manifest, write_point_file, DatasetManifest, DomainRole, FileFormat, ManifestEntry};
use crate::metrics::{compute_iou, ConfusionMatrix, IouReport};
use crate::pseudo::{class_ratio, pseudo_label_cloud, PseudoLabelConfig};
use crate::rng::RandomStream;
use crate::scenegen::{generate_scene, SceneTemplate};
use crate::segmenter::{
    extract_features, forward_scores, predict, train_pretrain, train_selftrain, write_loss_trace, FeatureConfig,
    SegmenterModel, SelfTrainData, TrainOutput, FEATURE_DIM,
};
use crate::tacm::{tacm_compose, TacmConfig, TailCuboidQueue};
use crate::vss::{virtual_scan, FovConfig, StructuralClasses, VssConfig};

/// Stream keys handed to [`RandomStream::fork`] per stage.
const STREAM_SOURCE_ONLY: u64 = 1;
const STREAM_VSS: u64 = 2;
const STREAM_SELFTRAIN: u64 = 3;
const STREAM_SAMPLES: u64 = 4;

/// Number of mixed scenes written for inspection.
pub const MIXED_SAMPLES: usize = 3;

/// Scenes loaded from a manifest, with their ids.
#[derive(Debug, Clone)]
pub struct SceneSet {
    pub ids: Vec<String>,
    pub clouds: Vec<LabeledPointCloud>,
}

impl SceneSet {
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        let taxonomy = manifest.builtin_taxonomy()?;
        let clouds = (0..manifest.len())
            .into_par_iter()
            .map(|i| manifest.load_scene(i, taxonomy.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ids: manifest.entries.iter().map(|e| e.id.clone()).collect(),
            clouds,
        })
    }

    pub fn taxonomy(&self) -> Result<&Arc<ClassTaxonomy>> {
        self.clouds.first().map(|c| c.taxonomy()).ok_or(Error::EmptyInput("scene set"))
    }

    /// Write every scene as `<dir>/<id>.<ext>` plus `<dir>/manifest.txt`.
    pub fn write(&self, dir: &Path, role: DomainRole, format: FileFormat) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let taxonomy = self.taxonomy()?.name().to_string();
        let mut entries = Vec::with_capacity(self.ids.len());
        for (id, cloud) in self.ids.iter().zip(&self.clouds) {
            let path = dir.join(format!("{id}.{}", format.extension()));
            write_point_file(cloud, &path, format)?;
            entries.push(ManifestEntry { id: id.clone(), path });
        }
        let manifest_path = dir.join("manifest.txt");
        write_manifest(&DatasetManifest { role, taxonomy, entries }, &manifest_path)?;
        Ok(manifest_path)
    }
}

/// Confusion matrix and IoU of a model over labeled scenes.
pub fn evaluate(model: &SegmenterModel, scenes: &[LabeledPointCloud], features: &FeatureConfig) -> Result<(ConfusionMatrix, IouReport)> {
    let parts = scenes
        .par_iter()
        .map(|c| {
            let mut m = ConfusionMatrix::new(model.classes());
            m.accumulate(&predict(model, c, features)?, c.labels())?;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = ConfusionMatrix::new(model.classes());
    for p in &parts {
        total += p;
    }
    let iou = compute_iou(&total)?;
    Ok((total, iou))
}

/// Pseudo-label every target scene with `model`.
pub fn pseudo_label_scenes(
    model: &SegmenterModel,
    targets: &[LabeledPointCloud],
    features: &FeatureConfig,
    config: &PseudoLabelConfig,
) -> Result<Vec<LabeledPointCloud>> {
    targets
        .par_iter()
        .map(|c| pseudo_label_cloud(c, &forward_scores(model, &extract_features(c, features)?)?, config))
        .collect()
}

/// Class ratios over the labels of all scenes.
pub fn dataset_ratios(scenes: &[LabeledPointCloud]) -> Result<Vec<f64>> {
    let taxonomy = scenes.first().ok_or(Error::EmptyInput("scenes"))?.taxonomy();
    let labels: Vec<_> = scenes.iter().flat_map(|c| c.labels().iter().copied()).collect();
    Ok(class_ratio(&labels, taxonomy))
}

/// Models and metrics of one run.
#[derive(Debug, Clone)]
pub struct StageResults {
    pub source_only: TrainOutput,
    pub vss: TrainOutput,
    pub doda: TrainOutput,
    pub pseudo: Vec<LabeledPointCloud>,
    pub ratios: Vec<f64>,
    pub iou_source_only: IouReport,
    pub iou_vss: IouReport,
    pub iou_doda: IouReport,
}

/// Outcome of one stage of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum StageOutcome {
    Done(f64),
    Failed(String),
    NotRun,
}

impl StageOutcome {
    fn render(&self) -> String {
        match self {
            StageOutcome::Done(v) => format!("{v:.6}"),
            StageOutcome::Failed(msg) => format!("failed ({msg})"),
            StageOutcome::NotRun => "not_run".into(),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            StageOutcome::Done(v) => Some(*v),
            _ => None,
        }
    }
}

/// The three ablation mIoUs of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub source_scenes: usize,
    pub target_scenes: usize,
    /// Fraction of target points that kept a pseudo label.
    pub pseudo_coverage: Option<f64>,
    pub source_only: StageOutcome,
    pub vss: StageOutcome,
    pub doda: StageOutcome,
}

impl RunReport {
    pub fn complete(&self) -> bool {
        [&self.source_only, &self.vss, &self.doda].iter().all(|s| matches!(s, StageOutcome::Done(_)))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "status={}", if self.complete() { "complete" } else { "incomplete" }).unwrap();
        writeln!(s, "seed={}", self.seed).unwrap();
        writeln!(s, "source_scenes={}", self.source_scenes).unwrap();
        writeln!(s, "target_scenes={}", self.target_scenes).unwrap();
        match self.pseudo_coverage {
            Some(c) => writeln!(s, "pseudo_coverage={c:.6}").unwrap(),
            None => writeln!(s, "pseudo_coverage=not_run").unwrap(),
        }
        writeln!(s, "miou_source_only={}", self.source_only.render()).unwrap();
        writeln!(s, "miou_vss={}", self.vss.render()).unwrap();
        writeln!(s, "miou_doda={}", self.doda.render()).unwrap();
        s
    }
}

/// Source-only pretraining.
pub fn stage_source_only(sources: &[LabeledPointCloud], config: &PipelineConfig) -> Result<TrainOutput> {
    let model = SegmenterModel::zeros(sources.first().ok_or(Error::EmptyInput("source scenes"))?.taxonomy().clone(), FEATURE_DIM);
    let mut rng = RandomStream::new(config.seed).fork(STREAM_SOURCE_ONLY);
    train_pretrain(model, sources, None, &config.augment, &config.features, &config.pretrain, &mut rng)
}

/// Pretraining with the virtual scan.
pub fn stage_vss(sources: &[LabeledPointCloud], config: &PipelineConfig) -> Result<TrainOutput> {
    let model = SegmenterModel::zeros(sources.first().ok_or(Error::EmptyInput("source scenes"))?.taxonomy().clone(), FEATURE_DIM);
    let mut rng = RandomStream::new(config.seed).fork(STREAM_VSS);
    train_pretrain(model, sources, Some(&config.vss), &config.augment, &config.features, &config.pretrain, &mut rng)
}

/// Self-training from `start` on pseudo-labeled targets.
pub fn stage_selftrain(
    start: &SegmenterModel,
    sources: &[LabeledPointCloud],
    pseudo: &[LabeledPointCloud],
    ratios: &[f64],
    config: &PipelineConfig,
) -> Result<TrainOutput> {
    let mut rng = RandomStream::new(config.seed).fork(STREAM_SELFTRAIN);
    let mut queue = TailCuboidQueue::new(config.tacm.queue_capacity);
    train_selftrain(
        start.clone(),
        SelfTrainData { sources, targets: pseudo, ratios },
        &config.tacm,
        &config.vss,
        &config.augment,
        &config.features,
        &config.selftrain,
        &mut queue,
        &mut rng,
    )
}

/// All stages in memory: source-only and VSS pretraining, pseudo labels
/// from the VSS model, self-training from it, and evaluation of the three
/// models on the targets' ground truth.
pub fn run_stages(sources: &[LabeledPointCloud], targets: &[LabeledPointCloud], config: &PipelineConfig) -> Result<StageResults> {
    let f = &config.features;
    let source_only = stage_source_only(sources, config).map_err(|e| e.in_stage("pretrain-source-only"))?;
    let iou_source_only = evaluate(&source_only.model, targets, f).map_err(|e| e.in_stage("evaluate"))?.1;
    let vss = stage_vss(sources, config).map_err(|e| e.in_stage("pretrain-vss"))?;
    let iou_vss = evaluate(&vss.model, targets, f).map_err(|e| e.in_stage("evaluate"))?.1;
    let pseudo = pseudo_label_scenes(&vss.model, targets, f, &config.pseudo).map_err(|e| e.in_stage("pseudo-label"))?;
    let ratios = dataset_ratios(&pseudo).map_err(|e| e.in_stage("pseudo-label"))?;
    let doda = stage_selftrain(&vss.model, sources, &pseudo, &ratios, config).map_err(|e| e.in_stage("selftrain"))?;
    let iou_doda = evaluate(&doda.model, targets, f).map_err(|e| e.in_stage("evaluate"))?.1;
    Ok(StageResults {
        source_only,
        vss,
        doda,
        pseudo,
        ratios,
        iou_source_only,
        iou_vss,
        iou_doda,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_scenes(path: Option<&PathBuf>, what: &'static str) -> Result<SceneSet> {
    let path = path.ok_or_else(|| Error::Config(format!("no {what} manifest configured")))?;
    SceneSet::load(&load_manifest(path)?)
}

/// Write `n` mixed scenes built from the pseudo-labeled targets, on a
/// stream and queue of their own.
pub fn write_mixed_samples(
    sources: &[LabeledPointCloud],
    pseudo: &[LabeledPointCloud],
    ratios: &[f64],
    config: &PipelineConfig,
    n: usize,
    dir: &Path,
) -> Result<()> {
    create_dir(dir)?;
    let structural = StructuralClasses::from_taxonomy(sources[0].taxonomy())?;
    let mut rng = RandomStream::new(config.seed).fork(STREAM_SAMPLES);
    let mut queue = TailCuboidQueue::new(config.tacm.queue_capacity);
    for k in 0..n {
        let t = &pseudo[k % pseudo.len()];
        let s = &sources[rng.below(sources.len())];
        let scanned = virtual_scan(s, &config.vss, &structural, &mut rng)?;
        let mixed = tacm_compose(&scanned, t, ratios, &config.tacm, &mut queue, &mut rng)?;
        write_point_file(&mixed.cloud, dir.join(format!("mixed_{k:03}.ply")), FileFormat::PlyBinaryLe)?;
    }
    Ok(())
}

/// Run every stage from the configured manifests and write all outputs
/// under `config.out_dir`:
///
/// * `config.txt`, `report.txt`
/// * `checkpoints/{source_only,vss,doda}.segmodel`
/// * `loss/{source_only,vss,doda}.csv`
/// * `metrics/{source_only,vss,doda}.csv`
/// * `pseudo/` with one labeled file per target scene and a manifest
/// * `mixed/mixed_000.ply` .. for inspection
///
/// On failure the report is still written, with the failed stage marked
/// and later stages `not_run`, and the stage-tagged error is returned.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let out = &config.out_dir;
    create_dir(out)?;
    write_text(&out.join("config.txt"), &config.to_text())?;
    let sources = load_scenes(config.source_manifest.as_ref(), "source").map_err(|e| e.in_stage("load"))?;
    let targets = load_scenes(config.target_manifest.as_ref(), "target").map_err(|e| e.in_stage("load"))?;
    let mut report = RunReport {
        seed: config.seed,
        source_scenes: sources.clouds.len(),
        target_scenes: targets.clouds.len(),
        pseudo_coverage: None,
        source_only: StageOutcome::NotRun,
        vss: StageOutcome::NotRun,
        doda: StageOutcome::NotRun,
    };
    let result = run_and_write(config, &sources, &targets, &mut report);
    write_text(&out.join("report.txt"), &report.to_text())?;
    result.map(|_| report)
}

fn save_stage(out: &Path, name: &str, trained: &TrainOutput, iou: &IouReport) -> Result<()> {
    trained.model.save(out.join("checkpoints").join(format!("{name}.segmodel")))?;
    write_loss_trace(&trained.losses, out.join("loss").join(format!("{name}.csv")))?;
    write_text(&out.join("metrics").join(format!("{name}.csv")), &iou.to_csv(trained.model.taxonomy()))
}

/// Train, evaluate and save one model, recording the outcome.
fn run_stage(
    slot: &mut StageOutcome,
    out: &Path,
    name: &'static str,
    targets: &[LabeledPointCloud],
    features: &FeatureConfig,
    train: impl FnOnce() -> Result<TrainOutput>,
) -> Result<TrainOutput> {
    let outcome = train().and_then(|t| {
        let iou = evaluate(&t.model, targets, features)?.1;
        save_stage(out, name, &t, &iou)?;
        Ok((t, iou.miou))
    });
    match outcome {
        Ok((t, miou)) => {
            *slot = StageOutcome::Done(miou);
            Ok(t)
        }
        Err(e) => {
            *slot = StageOutcome::Failed(e.to_string());
            Err(e.in_stage(name))
        }
    }
}

fn run_and_write(config: &PipelineConfig, sources: &SceneSet, targets: &SceneSet, report: &mut RunReport) -> Result<()> {
    let out = &config.out_dir;
    for d in ["checkpoints", "loss", "metrics"] {
        create_dir(&out.join(d))?;
    }
    let f = &config.features;
    let t = &targets.clouds;
    run_stage(&mut report.source_only, out, "source_only", t, f, || stage_source_only(&sources.clouds, config))?;
    let vss = run_stage(&mut report.vss, out, "vss", t, f, || stage_vss(&sources.clouds, config))?;

    let pseudo = pseudo_label_scenes(&vss.model, &targets.clouds, f, &config.pseudo).map_err(|e| e.in_stage("pseudo-label"))?;
    let kept: usize = pseudo.iter().map(|c| c.class_counts().iter().sum::<usize>()).sum();
    let total: usize = pseudo.iter().map(|c| c.len()).sum();
    report.pseudo_coverage = Some(if total == 0 { 0.0 } else { kept as f64 / total as f64 });
    let ratios = dataset_ratios(&pseudo).map_err(|e| e.in_stage("pseudo-label"))?;
    SceneSet { ids: targets.ids.clone(), clouds: pseudo.clone() }
        .write(&out.join("pseudo"), DomainRole::Target, FileFormat::PlyBinaryLe)
        .map_err(|e| e.in_stage("pseudo-label"))?;
    write_mixed_samples(&sources.clouds, &pseudo, &ratios, config, MIXED_SAMPLES, &out.join("mixed")).map_err(|e| e.in_stage("mix"))?;

    run_stage(&mut report.doda, out, "doda", t, f, || {
        stage_selftrain(&vss.model, &sources.clouds, &pseudo, &ratios, config)
    })?;
    Ok(())
}

/// Scenes drawn from the randomized templates in turn.
pub fn generate_scenes(n: usize, templates: &[SceneTemplate], density: f64, prefix: &str, rng: &mut RandomStream) -> Result<SceneSet> {
    if templates.is_empty() {
        return Err(Error::EmptyInput("templates"));
    }
    let keys: Vec<(usize, u64)> = (0..n).map(|i| (i, rng.next_u64())).collect();
    let clouds = keys
        .par_iter()
        .map(|&(i, key)| {
            let mut r = RandomStream::new(key);
            let spec = templates[i % templates.len()].randomized(&mut r).with_density(density);
            generate_scene(&spec, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneSet {
        ids: (0..n).map(|i| format!("{prefix}_{i:03}")).collect(),
        clouds,
    })
}

/// Virtual scan of every scene, each on its own stream.
pub fn scan_scenes(scenes: &SceneSet, vss: &VssConfig, rng: &mut RandomStream) -> Result<SceneSet> {
    let structural = StructuralClasses::from_taxonomy(scenes.taxonomy()?)?;
    let keys: Vec<u64> = scenes.clouds.iter().map(|_| rng.next_u64()).collect();
    let clouds = scenes
        .clouds
        .par_iter()
        .zip(&keys)
        .map(|(c, &k)| virtual_scan(c, vss, &structural, &mut RandomStream::new(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneSet { ids: scenes.ids.clone(), clouds })
}

/// Layout of the toy benchmark: clean synthetic source scenes, and target
/// scenes scanned with a harsher, hidden virtual scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBenchmarkConfig {
    pub n_source: usize,
    pub n_target: usize,
    pub density: f64,
    pub templates: Vec<SceneTemplate>,
    /// The scan that turns target scenes into "real" ones.
    pub real_scan: VssConfig,
    pub format: FileFormat,
}

impl Default for ToyBenchmarkConfig {
    fn default() -> Self {
        Self {
            n_source: 20,
            n_target: 20,
            density: 200.0,
            templates: vec![
                SceneTemplate::Cluttered,
                SceneTemplate::OneOccluder,
                SceneTemplate::TailHeavy,
                SceneTemplate::Corridor,
                SceneTemplate::TwoRoom,
            ],
            real_scan: harsh_scan(),
            format: FileFormat::PlyBinaryLe,
        }
    }
}

/// Fewer, narrower cameras and 2 cm jitter.
pub fn harsh_scan() -> VssConfig {
    VssConfig {
        n_cameras: 2,
        fov: FovConfig {
            horizontal_deg: 120.0,
            vertical_deg: 70.0,
            ..FovConfig::default()
        },
        jitter: 0.02,
        ..VssConfig::default()
    }
}

/// Pipeline settings used for the toy benchmark.
pub fn toy_pipeline_config(seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig { seed, ..PipelineConfig::default() };
    c.augment = AugmentConfig { rotate: false, elastic: false, ..AugmentConfig::default() };
    c.features.voxel_size = 0.01;
    for t in [&mut c.pretrain, &mut c.selftrain] {
        t.learning_rate = 0.5;
        t.momentum = 0.9;
        t.poly_power = 0.9;
        t.iterations = 150;
    }
    c.selftrain.lambda = 2.0;
    c.tacm.rho_s = 0.0;
    c
}

/// Paths written by [`make_toy_benchmark`].
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBenchmark {
    pub source_manifest: PathBuf,
    pub target_manifest: PathBuf,
    pub config: PathBuf,
}

/// In-memory toy benchmark scenes: `(sources, targets)`.
pub fn toy_benchmark_scenes(config: &ToyBenchmarkConfig, seed: u64) -> Result<(SceneSet, SceneSet)> {
    let root = RandomStream::new(seed);
    let sources = generate_scenes(config.n_source, &config.templates, config.density, "sim", &mut root.fork(10))?;
    let clean = generate_scenes(config.n_target, &config.templates, config.density, "real", &mut root.fork(11))?;
    let targets = scan_scenes(&clean, &config.real_scan, &mut root.fork(12))?;
    Ok((sources, targets))
}

/// Write the toy benchmark under `dir`: `sim/`, `real/` and a pipeline
/// config `toy.cfg` pointing at both.
pub fn make_toy_benchmark(dir: &Path, seed: u64, config: &ToyBenchmarkConfig) -> Result<ToyBenchmark> {
    let (sources, targets) = toy_benchmark_scenes(config, seed)?;
    let source_manifest = sources.write(&dir.join("sim"), DomainRole::Source, config.format)?;
    let target_manifest = targets.write(&dir.join("real"), DomainRole::Target, config.format)?;
    let mut cfg = toy_pipeline_config(seed);
    cfg.source_manifest = Some("sim/manifest.txt".into());
    cfg.target_manifest = Some("real/manifest.txt".into());
    cfg.out_dir = "run".into();
    let config_path = dir.join("toy.cfg");
    write_text(&config_path, &cfg.to_text())?;
    Ok(ToyBenchmark {
        source_manifest,
        target_manifest,
        config: config_path,
    })
}

/// Taxonomy used when nothing else names one.
pub fn default_taxonomy() -> Arc<ClassTaxonomy> {
    Arc::new(ClassTaxonomy::builtin(TOY_INDOOR).expect("built-in taxonomy"))
}

/// Mixed scenes from a source and a pseudo-labeled target manifest.
pub fn mix_manifests(source: &Path, target: &Path, tacm: &TacmConfig, count: usize, seed: u64, out: &Path) -> Result<PathBuf> {
    let sources = SceneSet::load(&load_manifest(source)?)?;
    let targets = SceneSet::load(&load_manifest(target)?)?;
    let ratios = dataset_ratios(&targets.clouds)?;
    let mut rng = RandomStream::new(seed);
    let mut queue = TailCuboidQueue::new(tacm.queue_capacity);
    let mut mixed = SceneSet { ids: Vec::new(), clouds: Vec::new() };
    for k in 0..count {
        let t = &targets.clouds[k % targets.clouds.len()];
        let s = &sources.clouds[rng.below(sources.clouds.len())];
        mixed.clouds.push(tacm_compose(s, t, &ratios, tacm, &mut queue, &mut rng)?.cloud);
        mixed.ids.push(format!("mixed_{k:03}"));
    }
    mixed.write(out, DomainRole::Target, FileFormat::PlyBinaryLe)
}

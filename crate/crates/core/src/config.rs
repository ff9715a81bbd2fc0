//! Pipeline configuration as `key=value` lines with dotted sections.
//!
//! ```text
//! seed=7
//! source=sim/manifest.txt
//! target=real/manifest.txt
//! vss.n_v=4
//! tacm.rho_m=0.5
//! selftrain.lambda=0.5
//! ```
//!
//! Blank lines and lines starting with `#` are skipped. Every key is
//! optional; [`PipelineConfig::to_text`] lists them all.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::AugmentConfig;
use crate::error::{Error, ParseLocation, Result};
use crate::pseudo::PseudoLabelConfig;
use crate::segmenter::{FeatureConfig, TrainConfig};
use crate::tacm::TacmConfig;
use crate::vss::VssConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub source_manifest: Option<PathBuf>,
    pub target_manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub vss: VssConfig,
    pub tacm: TacmConfig,
    pub pseudo: PseudoLabelConfig,
    pub features: FeatureConfig,
    pub augment: AugmentConfig,
    pub pretrain: TrainConfig,
    pub selftrain: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            source_manifest: None,
            target_manifest: None,
            out_dir: PathBuf::from("out"),
            vss: VssConfig::default(),
            tacm: TacmConfig::default(),
            pseudo: PseudoLabelConfig::default(),
            features: FeatureConfig::default(),
            augment: AugmentConfig::default(),
            pretrain: TrainConfig::default(),
            selftrain: TrainConfig::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl PipelineConfig {
    /// Set one key. Relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let f = |v: &str| parse_value::<f64>(key, v);
        let u = |v: &str| parse_value::<usize>(key, v);
        let b = |v: &str| parse_bool(key, v);
        match key {
            "seed" => self.seed = parse_value(key, value)?,
            "source" => self.source_manifest = Some(base.join(value)),
            "target" => self.target_manifest = Some(base.join(value)),
            "out" => self.out_dir = base.join(value),

            "vss.n_v" => self.vss.n_cameras = u(value)?,
            "vss.alpha_h" => self.vss.fov.horizontal_deg = f(value)?,
            "vss.alpha_v" => self.vss.fov.vertical_deg = f(value)?,
            "vss.mode" => self.vss.fov.mode = value.parse()?,
            "vss.d_ref" => self.vss.fov.parallel_reference_distance = f(value)?,
            "vss.bev_cell" => self.vss.bev_cell = f(value)?,
            "vss.clearance" => self.vss.clearance = f(value)?,
            "vss.theta_bin" => self.vss.occlusion.bin_width_deg = f(value)?,
            "vss.eps_d" => self.vss.occlusion.depth_tolerance = f(value)?,
            "vss.point_radius" => self.vss.occlusion.point_radius = f(value)?,
            "vss.normal_radius" => self.vss.occlusion.normal_radius = f(value)?,
            "vss.delta_p" => self.vss.jitter = f(value)?,

            "tacm.nx" => self.tacm.partitions[0] = u(value)?,
            "tacm.ny" => self.tacm.partitions[1] = u(value)?,
            "tacm.nz" => self.tacm.partitions[2] = u(value)?,
            "tacm.delta_phi" => self.tacm.delta_phi = f(value)?,
            "tacm.rho_s" => self.tacm.rho_s = f(value)?,
            "tacm.rho_m" => self.tacm.rho_m = f(value)?,
            "tacm.queue_cap" => self.tacm.queue_capacity = u(value)?,
            "tacm.n_tail_classes" => self.tacm.n_tail_classes = u(value)?,
            "tacm.min_tail_cuboids" => self.tacm.min_tail_cuboids = u(value)?,

            "pseudo.mode" => self.pseudo.mode = value.parse()?,
            "pseudo.threshold" => self.pseudo.threshold = f(value)?,
            "pseudo.fraction" => self.pseudo.fraction = f(value)?,

            "features.voxel_size" => self.features.voxel_size = f(value)?,
            "features.radius" => self.features.radius = f(value)?,
            "features.density_norm" => self.features.density_norm = f(value)?,

            "augment.rotate" => self.augment.rotate = b(value)?,
            "augment.flip" => self.augment.flip = b(value)?,
            "augment.elastic" => self.augment.elastic = b(value)?,
            "augment.jitter" => self.augment.jitter = b(value)?,
            "augment.shuffle" => self.augment.shuffle = b(value)?,
            "augment.elastic_spacing" => self.augment.elastic_spacing = f(value)?,
            "augment.elastic_magnitude" => self.augment.elastic_magnitude = f(value)?,
            "augment.jitter_sigma" => self.augment.jitter_sigma = f(value)?,

            _ => {
                let (section, field) = key.split_once('.').unwrap_or(("", key));
                let train = match section {
                    "pretrain" => &mut self.pretrain,
                    "selftrain" => &mut self.selftrain,
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                };
                match field {
                    "lr" => train.learning_rate = f(value)?,
                    "iterations" => train.iterations = u(value)?,
                    "batch_size" => train.batch_size = u(value)?,
                    "lambda" => train.lambda = f(value)?,
                    "momentum" => train.momentum = f(value)?,
                    "poly_power" => train.poly_power = f(value)?,
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
            }
        }
        Ok(())
    }

    /// Parse config text over the defaults.
    pub fn parse(text: &str, base: &Path, source_name: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                location: ParseLocation::Line(k + 1),
                message,
            };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key=value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value, base).map_err(|e| err(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")), &path.display().to_string())
    }

    /// Every key with its current value. Paths are written as stored.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("seed", self.seed.to_string());
        if let Some(p) = &self.source_manifest {
            kv("source", p.display().to_string());
        }
        if let Some(p) = &self.target_manifest {
            kv("target", p.display().to_string());
        }
        kv("out", self.out_dir.display().to_string());
        let v = &self.vss;
        kv("vss.n_v", v.n_cameras.to_string());
        kv("vss.alpha_h", v.fov.horizontal_deg.to_string());
        kv("vss.alpha_v", v.fov.vertical_deg.to_string());
        kv("vss.mode", v.fov.mode.as_str().to_string());
        kv("vss.d_ref", v.fov.parallel_reference_distance.to_string());
        kv("vss.bev_cell", v.bev_cell.to_string());
        kv("vss.clearance", v.clearance.to_string());
        kv("vss.theta_bin", v.occlusion.bin_width_deg.to_string());
        kv("vss.eps_d", v.occlusion.depth_tolerance.to_string());
        kv("vss.point_radius", v.occlusion.point_radius.to_string());
        kv("vss.normal_radius", v.occlusion.normal_radius.to_string());
        kv("vss.delta_p", v.jitter.to_string());
        let t = &self.tacm;
        kv("tacm.nx", t.partitions[0].to_string());
        kv("tacm.ny", t.partitions[1].to_string());
        kv("tacm.nz", t.partitions[2].to_string());
        kv("tacm.delta_phi", t.delta_phi.to_string());
        kv("tacm.rho_s", t.rho_s.to_string());
        kv("tacm.rho_m", t.rho_m.to_string());
        kv("tacm.queue_cap", t.queue_capacity.to_string());
        kv("tacm.n_tail_classes", t.n_tail_classes.to_string());
        kv("tacm.min_tail_cuboids", t.min_tail_cuboids.to_string());
        kv("pseudo.mode", self.pseudo.mode.as_str().to_string());
        kv("pseudo.threshold", self.pseudo.threshold.to_string());
        kv("pseudo.fraction", self.pseudo.fraction.to_string());
        kv("features.voxel_size", self.features.voxel_size.to_string());
        kv("features.radius", self.features.radius.to_string());
        kv("features.density_norm", self.features.density_norm.to_string());
        let a = &self.augment;
        kv("augment.rotate", a.rotate.to_string());
        kv("augment.flip", a.flip.to_string());
        kv("augment.elastic", a.elastic.to_string());
        kv("augment.jitter", a.jitter.to_string());
        kv("augment.shuffle", a.shuffle.to_string());
        kv("augment.elastic_spacing", a.elastic_spacing.to_string());
        kv("augment.elastic_magnitude", a.elastic_magnitude.to_string());
        kv("augment.jitter_sigma", a.jitter_sigma.to_string());
        for (name, tr) in [("pretrain", &self.pretrain), ("selftrain", &self.selftrain)] {
            kv(&format!("{name}.lr"), tr.learning_rate.to_string());
            kv(&format!("{name}.iterations"), tr.iterations.to_string());
            kv(&format!("{name}.batch_size"), tr.batch_size.to_string());
            kv(&format!("{name}.lambda"), tr.lambda.to_string());
            kv(&format!("{name}.momentum"), tr.momentum.to_string());
            kv(&format!("{name}.poly_power"), tr.poly_power.to_string());
        }
        s
    }

    /// Check every section; manifest paths must exist when set.
    pub fn validate(&self) -> Result<()> {
        self.vss.validate()?;
        self.tacm.validate(usize::MAX)?;
        self.pseudo.validate()?;
        self.features.validate()?;
        self.pretrain.validate()?;
        self.selftrain.validate()?;
        for p in self.source_manifest.iter().chain(&self.target_manifest) {
            if !p.is_file() {
                return Err(Error::Config(format!("manifest {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

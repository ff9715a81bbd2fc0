use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{cross_entropy, extract_features, forward_scores, FeatureConfig, FeatureMatrix, SegmenterModel};
use crate::augment::{standard_augment, AugmentConfig};
use crate::cloud::{Label, LabeledPointCloud};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::tacm::{tacm_compose, TacmConfig, TailCuboidQueue};
use crate::vss::{virtual_scan_prepared, ScanPrep, StructuralClasses, VssConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Scenes per gradient step.
    pub batch_size: usize,
    /// Weight of the source term during self-training.
    pub lambda: f64,
    /// Heavy-ball momentum; 0 is plain gradient descent.
    pub momentum: f64,
    /// Poly decay power: the rate at iteration `t` of `T` is
    /// `lr * (1 - t/T)^power`. 0 keeps it constant.
    pub poly_power: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 100,
            batch_size: 2,
            lambda: 0.5,
            momentum: 0.0,
            poly_power: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.poly_power >= 0.0 && self.poly_power.is_finite()) {
            return Err(Error::Config(format!("poly power must be non-negative, got {}", self.poly_power)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub model: SegmenterModel,
    /// Objective value at every iteration, before the step.
    pub losses: Vec<f64>,
}

/// Write `iteration,loss` rows.
pub fn write_loss_trace(losses: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("iteration,loss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(s, "{i},{l}").unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

struct Optimizer {
    lr: f64,
    momentum: f64,
    power: f64,
    total: usize,
    t: usize,
    vw: Vec<f64>,
    vb: Vec<f64>,
}

impl Optimizer {
    fn new(model: &SegmenterModel, config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            momentum: config.momentum,
            power: config.poly_power,
            total: config.iterations,
            t: 0,
            vw: vec![0.0; model.weights.len()],
            vb: vec![0.0; model.bias.len()],
        }
    }

    fn apply(&mut self, model: &mut SegmenterModel, gw: &[f64], gb: &[f64]) {
        let lr = if self.power == 0.0 {
            self.lr
        } else {
            self.lr * (1.0 - self.t as f64 / self.total as f64).powf(self.power)
        };
        self.t += 1;
        for ((w, v), g) in model.weights.iter_mut().zip(&mut self.vw).zip(gw) {
            *v = self.momentum * *v + g;
            *w -= lr * *v;
        }
        for ((b, v), g) in model.bias.iter_mut().zip(&mut self.vb).zip(gb) {
            *v = self.momentum * *v + g;
            *b -= lr * *v;
        }
    }
}

fn prepare(sources: &[LabeledPointCloud], vss: &VssConfig, structural: &StructuralClasses) -> Result<Vec<ScanPrep>> {
    sources.par_iter().map(|c| ScanPrep::new(c, vss, structural)).collect()
}

/// Loss and parameter gradients of one term, or `None` when no row is
/// supervised.
fn term(model: &SegmenterModel, x: &FeatureMatrix, labels: &[Label]) -> Result<Option<(f64, Vec<f64>, Vec<f64>)>> {
    match cross_entropy(&forward_scores(model, x)?, labels) {
        Ok((loss, g)) => {
            let (gw, gb) = model.param_gradient(x, &g);
            Ok(Some((loss, gw, gb)))
        }
        Err(Error::NoSupervision) => Ok(None),
        Err(e) => Err(e),
    }
}

/// The self-training objective `CE(mixed) + lambda * CE(source)` with its
/// parameter gradients. A term without supervised rows contributes zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTermObjective {
    pub total: f64,
    pub mixed: f64,
    pub source: f64,
    pub grad_weights: Vec<f64>,
    pub grad_bias: Vec<f64>,
}

pub fn two_term_objective(
    model: &SegmenterModel,
    mixed: (&FeatureMatrix, &[Label]),
    source: (&FeatureMatrix, &[Label]),
    lambda: f64,
) -> Result<TwoTermObjective> {
    let mut gw = vec![0.0; model.weights.len()];
    let mut gb = vec![0.0; model.bias.len()];
    let mut add = |t: Option<(f64, Vec<f64>, Vec<f64>)>, scale: f64| {
        t.map_or(0.0, |(loss, w, b)| {
            for (a, v) in gw.iter_mut().zip(w) {
                *a += scale * v;
            }
            for (a, v) in gb.iter_mut().zip(b) {
                *a += scale * v;
            }
            loss
        })
    };
    let m = add(term(model, mixed.0, mixed.1)?, 1.0);
    let s = add(term(model, source.0, source.1)?, lambda);
    Ok(TwoTermObjective {
        total: m + lambda * s,
        mixed: m,
        source: s,
        grad_weights: gw,
        grad_bias: gb,
    })
}

fn check_finite(iteration: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, loss })
    }
}

fn featurize(clouds: &[LabeledPointCloud], features: &FeatureConfig) -> Result<(FeatureMatrix, Vec<Label>)> {
    let mats = clouds.iter().map(|c| extract_features(c, features)).collect::<Result<Vec<_>>>()?;
    let x = FeatureMatrix::concat(&mats.iter().collect::<Vec<_>>())?;
    let y = clouds.iter().flat_map(|c| c.labels().iter().copied()).collect();
    Ok((x, y))
}

/// Supervised training on source scenes. Each step draws `batch_size`
/// scenes with replacement, optionally passes each through the virtual
/// scan, applies the standard augmentations and takes one gradient step on
/// the mean cross-entropy of all their points.
#[allow(clippy::too_many_arguments)]
pub fn train_pretrain(
    model: SegmenterModel,
    sources: &[LabeledPointCloud],
    vss: Option<&VssConfig>,
    augment: &AugmentConfig,
    features: &FeatureConfig,
    config: &TrainConfig,
    rng: &mut RandomStream,
) -> Result<TrainOutput> {
    config.validate()?;
    if sources.is_empty() {
        return Err(Error::EmptyInput("source scenes"));
    }
    let structural = StructuralClasses::from_taxonomy(sources[0].taxonomy())?;
    let preps = match vss {
        Some(v) if config.iterations > 0 => Some(prepare(sources, v, &structural)?),
        _ => None,
    };
    let mut model = model;
    let mut opt = Optimizer::new(&model, config);
    let mut losses = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let picks: Vec<(usize, u64)> = (0..config.batch_size)
            .map(|_| (rng.below(sources.len()), rng.next_u64()))
            .collect();
        let batch = picks
            .par_iter()
            .map(|&(i, key)| {
                let mut r = RandomStream::new(key);
                let scene = match (vss, &preps) {
                    (Some(v), Some(p)) => virtual_scan_prepared(&sources[i], &p[i], v, &structural, &mut r)?,
                    _ => sources[i].clone(),
                };
                Ok(standard_augment(&scene, augment, &mut r))
            })
            .collect::<Result<Vec<_>>>()?;
        let (x, y) = featurize(&batch, features)?;
        let Some((loss, gw, gb)) = term(&model, &x, &y)? else {
            losses.push(0.0);
            continue;
        };
        check_finite(it, loss)?;
        losses.push(loss);
        opt.apply(&mut model, &gw, &gb);
    }
    Ok(TrainOutput { model, losses })
}

/// Inputs of the self-training stage.
#[derive(Debug, Clone, Copy)]
pub struct SelfTrainData<'a> {
    pub sources: &'a [LabeledPointCloud],
    /// Target scenes carrying pseudo labels.
    pub targets: &'a [LabeledPointCloud],
    /// Class ratios of the pseudo labels.
    pub ratios: &'a [f64],
}

/// Self-training on mixed scenes. Each step draws, per batch slot, one
/// target scene and one source scene, passes the source through the virtual
/// scan, mixes the pair with [`tacm_compose`] (sharing `queue` across all
/// steps), augments both and descends on
/// `CE(mixed) + lambda * CE(scanned source)`.
#[allow(clippy::too_many_arguments)]
pub fn train_selftrain(
    model: SegmenterModel,
    data: SelfTrainData<'_>,
    tacm: &TacmConfig,
    vss: &VssConfig,
    augment: &AugmentConfig,
    features: &FeatureConfig,
    config: &TrainConfig,
    queue: &mut TailCuboidQueue,
    rng: &mut RandomStream,
) -> Result<TrainOutput> {
    config.validate()?;
    if data.sources.is_empty() {
        return Err(Error::EmptyInput("source scenes"));
    }
    if data.targets.is_empty() {
        return Err(Error::EmptyInput("target scenes"));
    }
    let structural = StructuralClasses::from_taxonomy(data.sources[0].taxonomy())?;
    let preps = if config.iterations > 0 { prepare(data.sources, vss, &structural)? } else { Vec::new() };
    let mut model = model;
    let mut opt = Optimizer::new(&model, config);
    let mut losses = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let picks: Vec<(usize, usize, u64)> = (0..config.batch_size)
            .map(|_| (rng.below(data.targets.len()), rng.below(data.sources.len()), rng.next_u64()))
            .collect();
        let scanned = picks
            .par_iter()
            .map(|&(_, s, key)| virtual_scan_prepared(&data.sources[s], &preps[s], vss, &structural, &mut RandomStream::new(key)))
            .collect::<Result<Vec<_>>>()?;
        let mut mixed = Vec::with_capacity(picks.len());
        for (&(t, _, _), src) in picks.iter().zip(&scanned) {
            mixed.push(tacm_compose(src, &data.targets[t], data.ratios, tacm, queue, rng)?.cloud);
        }
        let keys: Vec<u64> = (0..2 * picks.len()).map(|_| rng.next_u64()).collect();
        let augmented: Vec<LabeledPointCloud> = mixed
            .iter()
            .chain(&scanned)
            .zip(&keys)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(c, &k)| standard_augment(c, augment, &mut RandomStream::new(k)))
            .collect();
        let (mixed_aug, src_aug) = augmented.split_at(picks.len());
        let (xm, ym) = featurize(mixed_aug, features)?;
        let (xs, ys) = featurize(src_aug, features)?;
        let obj = two_term_objective(&model, (&xm, &ym), (&xs, &ys), config.lambda)?;
        check_finite(it, obj.total)?;
        losses.push(obj.total);
        opt.apply(&mut model, &obj.grad_weights, &obj.grad_bias);
    }
    Ok(TrainOutput { model, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::IGNORE_LABEL;
    use crate::scenegen::{generate_scene, SceneTemplate};
    use crate::segmenter::FEATURE_DIM;

    fn scenes(n: usize, seed: u64) -> Vec<LabeledPointCloud> {
        let mut rng = RandomStream::new(seed);
        (0..n)
            .map(|_| {
                let spec = SceneTemplate::Cluttered.randomized(&mut rng).with_density(150.0);
                generate_scene(&spec, &mut rng).unwrap()
            })
            .collect()
    }

    fn zero_model(c: &LabeledPointCloud) -> SegmenterModel {
        SegmenterModel::zeros(c.taxonomy().clone(), FEATURE_DIM)
    }

    #[test]
    fn zero_iterations_leave_the_model() {
        let s = scenes(1, 1);
        let m = zero_model(&s[0]);
        let cfg = TrainConfig { iterations: 0, ..Default::default() };
        let out = train_pretrain(m.clone(), &s, None, &AugmentConfig::disabled(), &FeatureConfig::default(), &cfg, &mut RandomStream::new(0)).unwrap();
        assert_eq!(out.model, m);
        assert!(out.losses.is_empty());
    }

    #[test]
    fn pretrain_is_deterministic_and_learns() {
        let s = scenes(2, 2);
        let cfg = TrainConfig { iterations: 30, ..Default::default() };
        let run = || {
            train_pretrain(zero_model(&s[0]), &s, Some(&VssConfig::default()), &AugmentConfig::default(), &FeatureConfig::default(), &cfg, &mut RandomStream::new(9)).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert!(a.losses.last().unwrap() < &a.losses[0]);
    }

    #[test]
    fn objective_terms_combine_exactly() {
        let s = scenes(2, 3);
        let f = FeatureConfig::default();
        let (xm, ym) = featurize(&s[..1], &f).unwrap();
        let (xs, ys) = featurize(&s[1..], &f).unwrap();
        let mut rng = RandomStream::new(4);
        let m = SegmenterModel::from_parts(
            s[0].taxonomy().clone(),
            FEATURE_DIM,
            (0..49).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
            (0..7).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let half = two_term_objective(&m, (&xm, &ym), (&xs, &ys), 0.5).unwrap();
        assert_eq!(half.total, half.mixed + 0.5 * half.source);
        let zero = two_term_objective(&m, (&xm, &ym), (&xs, &ys), 0.0).unwrap();
        let (_, gw, gb) = term(&m, &xm, &ym).unwrap().unwrap();
        assert_eq!(zero.grad_weights, gw);
        assert_eq!(zero.grad_bias, gb);
        let ignored = vec![IGNORE_LABEL; ym.len()];
        let only_src = two_term_objective(&m, (&xm, &ignored), (&xs, &ys), 0.5).unwrap();
        assert_eq!(only_src.mixed, 0.0);
    }

    #[test]
    fn selftrain_runs_and_is_deterministic() {
        let s = scenes(2, 5);
        let t = scenes(2, 6);
        let ratios = crate::pseudo::class_ratio(&t.iter().flat_map(|c| c.labels().to_vec()).collect::<Vec<_>>(), t[0].taxonomy());
        let cfg = TrainConfig { iterations: 5, ..Default::default() };
        let run = || {
            let mut q = TailCuboidQueue::new(16);
            let out = train_selftrain(
                zero_model(&s[0]),
                SelfTrainData { sources: &s, targets: &t, ratios: &ratios },
                &TacmConfig::default(),
                &VssConfig::default(),
                &AugmentConfig::default(),
                &FeatureConfig::default(),
                &cfg,
                &mut q,
                &mut RandomStream::new(1),
            )
            .unwrap();
            (out, q.pushed())
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_eq!(a.0.losses.len(), 5);
    }

    #[test]
    fn write_trace() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        write_loss_trace(&[1.5, 0.25], &p).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "iteration,loss\n0,1.5\n1,0.25\n");
    }
}

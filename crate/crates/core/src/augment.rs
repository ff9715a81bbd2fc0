//! Conventional training-time augmentations: vertical-axis rotation, axis
//! flips, elastic distortion, jitter and point shuffling.

use crate::cloud::{Aabb, LabeledPointCloud, Vec3};
use crate::rng::RandomStream;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub rotate: bool,
    pub flip: bool,
    pub elastic: bool,
    pub jitter: bool,
    pub shuffle: bool,
    /// Node spacing of the elastic noise lattice, meters.
    pub elastic_spacing: f64,
    /// Maximum per-axis displacement of a lattice node, meters.
    pub elastic_magnitude: f64,
    /// Half-range of the uniform per-point jitter, meters.
    pub jitter_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotate: true,
            flip: true,
            elastic: true,
            jitter: true,
            shuffle: true,
            elastic_spacing: 0.2,
            elastic_magnitude: 0.05,
            jitter_sigma: 0.005,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            rotate: false,
            flip: false,
            elastic: false,
            jitter: false,
            shuffle: false,
            ..Self::default()
        }
    }
}

/// Apply the enabled augmentations in a fixed order (rotate, flip, elastic,
/// jitter, shuffle). Labels travel with their points.
pub fn standard_augment(
    cloud: &LabeledPointCloud,
    config: &AugmentConfig,
    rng: &mut RandomStream,
) -> LabeledPointCloud {
    let Some(bbox) = Aabb::from_points(cloud.positions()) else {
        return cloud.clone();
    };
    let center = bbox.center();
    let mut out = cloud.clone();

    if config.rotate {
        let angle = rng.uniform_range(0.0, std::f64::consts::TAU);
        let (s, c) = angle.sin_cos();
        out = out.map_positions(|_, p| {
            let dx = p.x - center.x;
            let dy = p.y - center.y;
            Vec3::new(center.x + c * dx - s * dy, center.y + s * dx + c * dy, p.z)
        });
    }

    if config.flip {
        let flip_x = rng.bernoulli(0.5);
        let flip_y = rng.bernoulli(0.5);
        if flip_x || flip_y {
            out = out.map_positions(|_, p| {
                let mut q = *p;
                if flip_x {
                    q.x = 2.0 * center.x - q.x;
                }
                if flip_y {
                    q.y = 2.0 * center.y - q.y;
                }
                q
            });
        }
    }

    if config.elastic && config.elastic_magnitude > 0.0 && config.elastic_spacing > 0.0 {
        if let Some(b) = Aabb::from_points(out.positions()) {
            let field = ElasticField::sample(&b, config.elastic_spacing, config.elastic_magnitude, rng);
            out = out.map_positions(|_, p| p + field.displacement(p));
        }
    }

    if config.jitter && config.jitter_sigma > 0.0 {
        let s = config.jitter_sigma;
        out = out.map_positions(|_, p| {
            p + Vec3::new(
                rng.uniform_range(-s, s),
                rng.uniform_range(-s, s),
                rng.uniform_range(-s, s),
            )
        });
    }

    if config.shuffle {
        let perm = rng.permutation(out.len());
        out = out.select(&perm);
    }

    out
}

/// A random displacement lattice, trilinearly interpolated.
struct ElasticField {
    origin: Vec3,
    spacing: f64,
    dims: [usize; 3],
    nodes: Vec<Vec3>,
}

impl ElasticField {
    fn sample(bbox: &Aabb, spacing: f64, magnitude: f64, rng: &mut RandomStream) -> Self {
        let ext = bbox.extent();
        let dims = [0, 1, 2].map(|a| (ext[a] / spacing).ceil() as usize + 2);
        let n = dims[0] * dims[1] * dims[2];
        let nodes = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.uniform_range(-magnitude, magnitude),
                    rng.uniform_range(-magnitude, magnitude),
                    rng.uniform_range(-magnitude, magnitude),
                )
            })
            .collect();
        Self {
            origin: bbox.min,
            spacing,
            dims,
            nodes,
        }
    }

    fn node(&self, i: usize, j: usize, k: usize) -> &Vec3 {
        &self.nodes[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    fn displacement(&self, p: &Vec3) -> Vec3 {
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let t = ((p[a] - self.origin[a]) / self.spacing).max(0.0);
            let cell = (t.floor() as usize).min(self.dims[a] - 2);
            base[a] = cell;
            frac[a] = (t - cell as f64).clamp(0.0, 1.0);
        }
        let mut d = Vec3::zeros();
        for (di, wi) in [(0, 1.0 - frac[0]), (1, frac[0])] {
            for (dj, wj) in [(0, 1.0 - frac[1]), (1, frac[1])] {
                for (dk, wk) in [(0, 1.0 - frac[2]), (1, frac[2])] {
                    d += self.node(base[0] + di, base[1] + dj, base[2] + dk) * (wi * wj * wk);
                }
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::ClassTaxonomy;
    use std::sync::Arc;

    fn random_cloud(n: usize, seed: u64) -> LabeledPointCloud {
        let mut rng = RandomStream::new(seed);
        let t = Arc::new(ClassTaxonomy::toy_indoor());
        let pts = (0..n)
            .map(|_| Vec3::new(rng.uniform() * 4.0, rng.uniform() * 3.0, rng.uniform() * 2.5))
            .collect();
        let labels = (0..n).map(|_| rng.below(7) as u16).collect();
        LabeledPointCloud::new(pts, labels, t).unwrap()
    }

    fn max_relative_distance_error(a: &LabeledPointCloud, b: &LabeledPointCloud) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..a.len() {
            for j in (i + 1)..a.len() {
                let da = (a.positions()[i] - a.positions()[j]).norm();
                let db = (b.positions()[i] - b.positions()[j]).norm();
                worst = worst.max((da - db).abs() / da.max(1e-300));
            }
        }
        worst
    }

    #[test]
    fn all_disabled_is_identity() {
        let c = random_cloud(100, 1);
        let out = standard_augment(&c, &AugmentConfig::disabled(), &mut RandomStream::new(2));
        assert_eq!(out, c);
    }

    #[test]
    fn shuffle_only_is_a_permutation() {
        let c = random_cloud(500, 3);
        let cfg = AugmentConfig {
            shuffle: true,
            ..AugmentConfig::disabled()
        };
        let out = standard_augment(&c, &cfg, &mut RandomStream::new(4));
        let key = |cl: &LabeledPointCloud| {
            let mut v: Vec<_> = cl
                .positions()
                .iter()
                .zip(cl.labels())
                .map(|(p, l)| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits(), *l))
                .collect();
            v.sort_unstable();
            v
        };
        assert_eq!(key(&out), key(&c));
        assert_ne!(out.positions(), c.positions());
    }

    #[test]
    fn rotation_and_flip_preserve_distances() {
        let c = random_cloud(200, 5);
        let cfg = AugmentConfig {
            rotate: true,
            flip: true,
            ..AugmentConfig::disabled()
        };
        for seed in 0..5 {
            let out = standard_augment(&c, &cfg, &mut RandomStream::new(seed));
            assert!(max_relative_distance_error(&c, &out) <= 1e-9);
        }
    }

    #[test]
    fn elastic_and_jitter_are_bounded() {
        let c = random_cloud(300, 6);
        let cfg = AugmentConfig {
            elastic: true,
            jitter: true,
            ..AugmentConfig::disabled()
        };
        let out = standard_augment(&c, &cfg, &mut RandomStream::new(7));
        let bound = cfg.elastic_magnitude + cfg.jitter_sigma;
        for (a, b) in c.positions().iter().zip(out.positions()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= bound + 1e-12);
            }
        }
        assert_eq!(out.labels(), c.labels());
    }

    #[test]
    fn same_seed_same_output() {
        let c = random_cloud(300, 8);
        let cfg = AugmentConfig::default();
        let a = standard_augment(&c, &cfg, &mut RandomStream::new(9));
        let b = standard_augment(&c, &cfg, &mut RandomStream::new(9));
        assert_eq!(a, b);
        assert_eq!(a.len(), c.len());
    }
}

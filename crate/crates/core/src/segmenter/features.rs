use rayon::prelude::*;

use crate::cloud::LabeledPointCloud;
use crate::error::{Error, Result};
use crate::spatial::PointGrid;

/// Number of features per point.
pub const FEATURE_DIM: usize = 7;

/// Feature names in emission order.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "height",
    "normalized_height",
    "density",
    "local_z_extent",
    "boundary_distance",
    "planarity",
    "constant",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// Half-height of the band used by the planarity proxy, meters.
    pub voxel_size: f64,
    /// Neighborhood radius, meters.
    pub radius: f64,
    /// Neighbor counts are divided by this.
    pub density_norm: f64,
    /// Disabled features are emitted as 0.
    pub enabled: [bool; FEATURE_DIM],
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.02,
            radius: 0.15,
            density_norm: 100.0,
            enabled: [true; FEATURE_DIM],
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0 && self.radius > 0.0 && self.density_norm > 0.0) {
            return Err(Error::Config(format!(
                "voxel size, radius and density normalizer must be positive (got {}, {}, {})",
                self.voxel_size, self.radius, self.density_norm
            )));
        }
        Ok(())
    }
}

/// Row-major `rows x dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Stack matrices of equal width.
    pub fn concat(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix> {
        let dim = parts.first().map_or(FEATURE_DIM, |p| p.dim);
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            if p.dim != dim {
                return Err(Error::Dimension { expected: dim, actual: p.dim });
            }
            data.extend_from_slice(&p.data);
        }
        Ok(FeatureMatrix {
            rows: data.len() / dim.max(1),
            dim,
            data,
        })
    }
}

/// Per-point features, in order: height above the cloud's lowest point;
/// that height over the cloud's z-extent (0 when flat); neighbor count
/// within `radius` (self included) over `density_norm`; z-extent of the
/// neighborhood; horizontal distance to the cloud's x-y bounding box
/// boundary; fraction of neighbors within `voxel_size` of the point's
/// height; constant 1.
pub fn extract_features(cloud: &LabeledPointCloud, config: &FeatureConfig) -> Result<FeatureMatrix> {
    config.validate()?;
    let bbox = crate::cloud::aabb_of(cloud)?;
    let pts = cloud.positions();
    let grid = PointGrid::build(pts, config.radius);
    let z_extent = bbox.extent().z;
    let data: Vec<f64> = pts
        .par_iter()
        .flat_map_iter(|p| {
            let mut count = 0usize;
            let mut band = 0usize;
            let (mut lo, mut hi) = (p.z, p.z);
            grid.for_each_within(pts, p, config.radius, |j| {
                let z = pts[j].z;
                count += 1;
                lo = lo.min(z);
                hi = hi.max(z);
                if (z - p.z).abs() <= config.voxel_size {
                    band += 1;
                }
            });
            let height = p.z - bbox.min.z;
            let boundary = (p.x - bbox.min.x)
                .min(bbox.max.x - p.x)
                .min(p.y - bbox.min.y)
                .min(bbox.max.y - p.y);
            let f = [
                height,
                if z_extent > 0.0 { height / z_extent } else { 0.0 },
                count as f64 / config.density_norm,
                hi - lo,
                boundary,
                band as f64 / count as f64,
                1.0,
            ];
            let enabled = config.enabled;
            (0..FEATURE_DIM).map(move |k| if enabled[k] { f[k] } else { 0.0 })
        })
        .collect();
    Ok(FeatureMatrix {
        rows: pts.len(),
        dim: FEATURE_DIM,
        data,
    })
}

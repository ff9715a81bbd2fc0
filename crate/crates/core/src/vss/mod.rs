//! Virtual scan simulation.
//!
//! Turns a complete synthetic scene into something that looks scanned:
//! cameras are dropped into free space, each sees only its field of view,
//! occluded points are removed by an angular depth buffer, and survivors
//! are jittered. [`visibility_oracle`] is an exact ray caster for checking
//! the depth buffer.
//!
//! ```
//! use scanmix::prelude::*;
//!
//! let spec = SceneTemplate::OneOccluder.canonical().with_density(300.0);
//! let mut rng = RandomStream::new(7);
//! let scene = generate_scene(&spec, &mut rng).unwrap();
//! let structural = StructuralClasses::from_taxonomy(scene.taxonomy()).unwrap();
//! let scan = simulate_scan(&scene, &VssConfig::default(), &structural, &mut rng).unwrap();
//! assert!(scan.cloud.len() < scene.len());
//! ```

mod bev;
mod camera;
mod occlusion;
mod oracle;

pub use bev::{compute_free_space_bev, BevGrid, BlockReason, CellState, StructuralClasses};
pub use camera::{
    sample_camera_poses, visible_range_mask, CameraFrame, CameraPose, FovConfig, FrameCoords,
    ViewingMode,
};
pub use occlusion::{visible_points, visible_points_with_normals, OcclusionConfig};
pub use oracle::{visibility_oracle, visibility_oracle_brute_force};

use crate::cloud::{LabeledPointCloud, Vec3};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, PartialEq)]
pub struct VssConfig {
    /// Number of virtual cameras.
    pub n_cameras: usize,
    pub fov: FovConfig,
    /// Bird's-eye-view cell size, meters.
    pub bev_cell: f64,
    /// Minimum distance from a camera cell center to any blocked cell.
    pub clearance: f64,
    pub occlusion: OcclusionConfig,
    /// Half-range of the uniform per-coordinate jitter, meters.
    pub jitter: f64,
}

impl Default for VssConfig {
    fn default() -> Self {
        Self {
            n_cameras: 4,
            fov: FovConfig::default(),
            bev_cell: 0.25,
            clearance: 0.1,
            occlusion: OcclusionConfig::default(),
            jitter: 0.01,
        }
    }
}

impl VssConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cameras == 0 {
            return Err(Error::Config("camera count must be at least 1".into()));
        }
        self.fov.validate()?;
        if !(self.bev_cell > 0.0) {
            return Err(Error::Config("BEV cell size must be positive".into()));
        }
        if !(self.clearance >= 0.0) {
            return Err(Error::Config("camera clearance must be non-negative".into()));
        }
        if !(self.occlusion.bin_width_deg > 0.0) {
            return Err(Error::Config("angular bin width must be positive".into()));
        }
        if !(self.occlusion.point_radius >= 0.0 && self.occlusion.normal_radius > 0.0) {
            return Err(Error::Config("point and normal radii must be non-negative and positive".into()));
        }
        if !(self.occlusion.depth_tolerance >= 0.0) {
            return Err(Error::Config("depth tolerance must be non-negative".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::Config("jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// Result of [`simulate_scan`].
#[derive(Debug, Clone)]
pub struct ScanOutput {
    /// Surviving points in input order.
    pub cloud: LabeledPointCloud,
    /// Input indices of the surviving points, ascending.
    pub kept: Vec<usize>,
    pub poses: Vec<CameraPose>,
}

/// Union of the per-camera visibility masks.
pub fn visible_union(
    cloud: &LabeledPointCloud,
    poses: &[CameraPose],
    fov: &FovConfig,
    occlusion: &OcclusionConfig,
) -> Result<Vec<bool>> {
    union_with_normals(cloud, &occlusion.normals(cloud), poses, fov, occlusion)
}

fn union_with_normals(
    cloud: &LabeledPointCloud,
    normals: &[Option<Vec3>],
    poses: &[CameraPose],
    fov: &FovConfig,
    occlusion: &OcclusionConfig,
) -> Result<Vec<bool>> {
    let mut union = vec![false; cloud.len()];
    for pose in poses {
        let mask = visible_points_with_normals(cloud, normals, pose, fov, occlusion)?;
        for (u, m) in union.iter_mut().zip(mask) {
            *u |= m;
        }
    }
    Ok(union)
}

/// The camera-independent part of a scan (free-space map and normals),
/// reusable for repeated scans of one cloud under one config.
#[derive(Debug, Clone)]
pub struct ScanPrep {
    bev: BevGrid,
    normals: Vec<Option<Vec3>>,
}

impl ScanPrep {
    pub fn new(cloud: &LabeledPointCloud, config: &VssConfig, structural: &StructuralClasses) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            bev: compute_free_space_bev(cloud, config.bev_cell, structural)?,
            normals: config.occlusion.normals(cloud),
        })
    }

    pub fn bev(&self) -> &BevGrid {
        &self.bev
    }
}

/// Occlusion simulation: sample cameras, keep points visible from any.
pub fn simulate_scan(
    cloud: &LabeledPointCloud,
    config: &VssConfig,
    structural: &StructuralClasses,
    rng: &mut RandomStream,
) -> Result<ScanOutput> {
    let prep = ScanPrep::new(cloud, config, structural)?;
    simulate_scan_prepared(cloud, &prep, config, structural, rng)
}

/// [`simulate_scan`] with `prep` built from the same cloud and config.
pub fn simulate_scan_prepared(
    cloud: &LabeledPointCloud,
    prep: &ScanPrep,
    config: &VssConfig,
    structural: &StructuralClasses,
    rng: &mut RandomStream,
) -> Result<ScanOutput> {
    let poses = sample_camera_poses(cloud, &prep.bev, config.n_cameras, config.clearance, structural, rng)?;
    let mask = union_with_normals(cloud, &prep.normals, &poses, &config.fov, &config.occlusion)?;
    let kept: Vec<usize> = (0..cloud.len()).filter(|&i| mask[i]).collect();
    Ok(ScanOutput {
        cloud: cloud.select(&kept),
        kept,
        poses,
    })
}

/// Displace every coordinate by an independent draw from `[-delta, delta]`.
pub fn jitter_points(cloud: &LabeledPointCloud, delta: f64, rng: &mut RandomStream) -> LabeledPointCloud {
    if delta == 0.0 {
        return cloud.clone();
    }
    cloud.map_positions(|_, p| {
        p + Vec3::new(
            rng.uniform_range(-delta, delta),
            rng.uniform_range(-delta, delta),
            rng.uniform_range(-delta, delta),
        )
    })
}

/// Occlusion simulation followed by noise simulation.
pub fn virtual_scan(
    cloud: &LabeledPointCloud,
    config: &VssConfig,
    structural: &StructuralClasses,
    rng: &mut RandomStream,
) -> Result<LabeledPointCloud> {
    let scan = simulate_scan(cloud, config, structural, rng)?;
    Ok(jitter_points(&scan.cloud, config.jitter, rng))
}

/// [`virtual_scan`] with a precomputed [`ScanPrep`].
pub fn virtual_scan_prepared(
    cloud: &LabeledPointCloud,
    prep: &ScanPrep,
    config: &VssConfig,
    structural: &StructuralClasses,
    rng: &mut RandomStream,
) -> Result<LabeledPointCloud> {
    let scan = simulate_scan_prepared(cloud, prep, config, structural, rng)?;
    Ok(jitter_points(&scan.cloud, config.jitter, rng))
}

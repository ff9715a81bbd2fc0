//! Virtual camera poses and field-of-view culling.

use std::str::FromStr;

use crate::cloud::{LabeledPointCloud, Vec3};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::vss::bev::{BevGrid, StructuralClasses};

/// Angular slack applied when testing FOV bounds, radians. Points exactly on
/// a bound count as inside.
const ANGLE_EPS: f64 = 1e-9;

/// Shape of the viewing frustum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewingMode {
    /// Independent azimuth and elevation bounds around the forward axis.
    Fixed,
    /// A box of constant cross-section in front of the camera, sized by the
    /// angles at a reference distance.
    Parallel,
    /// A pinhole pyramid.
    Perspective,
}

impl ViewingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViewingMode::Fixed => "fixed",
            ViewingMode::Parallel => "parallel",
            ViewingMode::Perspective => "perspective",
        }
    }
}

impl FromStr for ViewingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(ViewingMode::Fixed),
            "parallel" => Ok(ViewingMode::Parallel),
            "perspective" => Ok(ViewingMode::Perspective),
            other => Err(Error::Config(format!("unknown viewing mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovConfig {
    /// Horizontal viewing angle, degrees, in `(0, 360]`.
    pub horizontal_deg: f64,
    /// Vertical viewing angle, degrees, in `(0, 180]`.
    pub vertical_deg: f64,
    pub mode: ViewingMode,
    /// Distance at which the parallel frustum's cross-section is measured.
    pub parallel_reference_distance: f64,
}

impl Default for FovConfig {
    fn default() -> Self {
        Self {
            horizontal_deg: 180.0,
            vertical_deg: 90.0,
            mode: ViewingMode::Fixed,
            parallel_reference_distance: 2.0,
        }
    }
}

impl FovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizontal_deg > 0.0 && self.horizontal_deg <= 360.0) {
            return Err(Error::Config(format!(
                "horizontal angle must lie in (0, 360], got {}",
                self.horizontal_deg
            )));
        }
        if !(self.vertical_deg > 0.0 && self.vertical_deg <= 180.0) {
            return Err(Error::Config(format!(
                "vertical angle must lie in (0, 180], got {}",
                self.vertical_deg
            )));
        }
        if self.mode == ViewingMode::Parallel && !(self.parallel_reference_distance > 0.0) {
            return Err(Error::Config("parallel reference distance must be positive".into()));
        }
        Ok(())
    }

    /// Whether a camera-frame offset falls inside the visible range.
    pub fn contains(&self, q: &FrameCoords) -> bool {
        let half_h = (self.horizontal_deg * 0.5).to_radians();
        let half_v = (self.vertical_deg * 0.5).to_radians();
        match self.mode {
            ViewingMode::Fixed => {
                q.azimuth().abs() <= half_h + ANGLE_EPS && q.elevation().abs() <= half_v + ANGLE_EPS
            }
            ViewingMode::Perspective => {
                // beyond 90 degrees every forward point is inside
                q.forward > 0.0
                    && (half_h >= std::f64::consts::FRAC_PI_2
                        || q.right.abs() <= half_h.tan() * q.forward * (1.0 + ANGLE_EPS))
                    && (half_v >= std::f64::consts::FRAC_PI_2
                        || q.up.abs() <= half_v.tan() * q.forward * (1.0 + ANGLE_EPS))
            }
            ViewingMode::Parallel => {
                let d = self.parallel_reference_distance;
                let tan_or_inf = |a: f64| if a >= std::f64::consts::FRAC_PI_2 { f64::INFINITY } else { a.tan() };
                q.forward > 0.0
                    && q.right.abs() <= d * tan_or_inf(half_h) * (1.0 + ANGLE_EPS)
                    && q.up.abs() <= d * tan_or_inf(half_v) * (1.0 + ANGLE_EPS)
            }
        }
    }
}

/// A camera at `position` looking toward `look_at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    pub look_at: Vec3,
}

/// Orthonormal camera axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub origin: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub right: Vec3,
}

/// A point expressed along the camera axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameCoords {
    pub forward: f64,
    pub right: f64,
    pub up: f64,
}

impl FrameCoords {
    pub fn azimuth(&self) -> f64 {
        self.right.atan2(self.forward)
    }

    pub fn elevation(&self) -> f64 {
        self.up.atan2(self.forward.hypot(self.right))
    }

    pub fn range(&self) -> f64 {
        (self.forward * self.forward + self.right * self.right + self.up * self.up).sqrt()
    }
}

impl CameraPose {
    pub fn new(position: Vec3, look_at: Vec3) -> Self {
        Self { position, look_at }
    }

    /// Forward is `look_at - position`; up is world z with the forward
    /// component removed; right is `forward x up`.
    pub fn frame(&self) -> Result<CameraFrame> {
        let dir = self.look_at - self.position;
        let len = dir.norm();
        if !(len > 0.0) {
            return Err(Error::DegeneratePose);
        }
        let forward = dir / len;
        let z = Vec3::z();
        let up_raw = z - forward * forward.dot(&z);
        let up_len = up_raw.norm();
        if up_len < 1e-12 {
            return Err(Error::DegeneratePose);
        }
        let up = up_raw / up_len;
        Ok(CameraFrame {
            origin: self.position,
            forward,
            up,
            right: forward.cross(&up),
        })
    }
}

impl CameraFrame {
    pub fn to_frame(&self, p: &Vec3) -> FrameCoords {
        let q = p - self.origin;
        FrameCoords {
            forward: q.dot(&self.forward),
            right: q.dot(&self.right),
            up: q.dot(&self.up),
        }
    }
}

/// Membership of each point in the camera's visible range.
pub fn visible_range_mask(
    cloud: &LabeledPointCloud,
    pose: &CameraPose,
    fov: &FovConfig,
) -> Result<Vec<bool>> {
    let frame = pose.frame()?;
    Ok(cloud
        .positions()
        .iter()
        .map(|p| fov.contains(&frame.to_frame(p)))
        .collect())
}

/// Draw `count` independent camera poses: x-y at a random free-cell center,
/// height in the upper half of the scene, looking at a random wall point.
pub fn sample_camera_poses(
    cloud: &LabeledPointCloud,
    bev: &BevGrid,
    count: usize,
    clearance: f64,
    structural: &StructuralClasses,
    rng: &mut RandomStream,
) -> Result<Vec<CameraPose>> {
    let cells = bev.camera_cells(clearance);
    if cells.is_empty() {
        return Err(Error::NoFreeSpace);
    }
    let walls: Vec<usize> = cloud
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == structural.wall)
        .map(|(i, _)| i)
        .collect();
    if walls.is_empty() {
        return Err(Error::NoWallPoints);
    }
    let bbox = crate::cloud::aabb_of(cloud)?;
    let (z_min, z_max) = (bbox.min.z, bbox.max.z);
    let z_lo = z_min + 0.5 * (z_max - z_min);

    let mut poses = Vec::with_capacity(count);
    for _ in 0..count {
        let (i, j) = cells[rng.below(cells.len())];
        let [x, y] = bev.center(i, j);
        let z = rng.uniform_range(z_lo, z_max);
        let h = cloud.positions()[walls[rng.below(walls.len())]];
        poses.push(CameraPose::new(Vec3::new(x, y, z), h));
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::ClassTaxonomy;
    use std::sync::Arc;

    fn cloud_of(points: Vec<Vec3>) -> LabeledPointCloud {
        let n = points.len();
        LabeledPointCloud::new(points, vec![0; n], Arc::new(ClassTaxonomy::toy_indoor())).unwrap()
    }

    fn pose_x() -> CameraPose {
        CameraPose::new(Vec3::new(0.0, 0.0, 1.0), Vec3::new(5.0, 0.0, 1.0))
    }

    #[test]
    fn frame_is_right_handed_and_orthonormal() {
        let f = CameraPose::new(Vec3::new(1.0, 2.0, 1.5), Vec3::new(3.0, -1.0, 0.2)).frame().unwrap();
        assert!((f.forward.norm() - 1.0).abs() < 1e-12);
        assert!(f.forward.dot(&f.up).abs() < 1e-12);
        assert!((f.right - f.forward.cross(&f.up)).norm() < 1e-12);
        assert!(f.up.z > 0.0);
    }

    #[test]
    fn vertical_forward_is_degenerate() {
        let p = CameraPose::new(Vec3::zeros(), Vec3::new(0.0, 0.0, -2.0));
        assert!(matches!(p.frame(), Err(Error::DegeneratePose)));
        assert!(matches!(
            CameraPose::new(Vec3::zeros(), Vec3::zeros()).frame(),
            Err(Error::DegeneratePose)
        ));
    }

    #[test]
    fn point_on_axis_is_always_in_range() {
        let c = cloud_of(vec![Vec3::new(3.0, 0.0, 1.0)]);
        for mode in [ViewingMode::Fixed, ViewingMode::Parallel, ViewingMode::Perspective] {
            let fov = FovConfig { mode, horizontal_deg: 10.0, vertical_deg: 10.0, ..FovConfig::default() };
            assert_eq!(visible_range_mask(&c, &pose_x(), &fov).unwrap(), vec![true]);
        }
    }

    #[test]
    fn fixed_half_plane_boundaries() {
        // behind, exactly at +90 degrees (right = -y), exactly at -90 degrees
        let c = cloud_of(vec![
            Vec3::new(-2.0, 0.0, 1.0),
            Vec3::new(0.0, -2.0, 1.0),
            Vec3::new(0.0, 2.0, 1.0),
        ]);
        let mask = visible_range_mask(&c, &pose_x(), &FovConfig::default()).unwrap();
        assert_eq!(mask, vec![false, true, true]);
    }

    #[test]
    fn perspective_and_parallel_shapes() {
        let c = cloud_of(vec![
            Vec3::new(1.0, 0.9, 1.0),  // 42 deg off-axis, lateral 0.9
            Vec3::new(10.0, 1.5, 1.0), // 8.5 deg off-axis, lateral 1.5
        ]);
        let persp = FovConfig { mode: ViewingMode::Perspective, horizontal_deg: 90.0, vertical_deg: 90.0, ..FovConfig::default() };
        assert_eq!(visible_range_mask(&c, &pose_x(), &persp).unwrap(), vec![true, true]);
        let par = FovConfig { mode: ViewingMode::Parallel, parallel_reference_distance: 1.0, ..persp };
        // half-width 1.0 at every depth
        assert_eq!(visible_range_mask(&c, &pose_x(), &par).unwrap(), vec![true, false]);
    }

    #[test]
    fn fov_validation() {
        assert!(FovConfig { horizontal_deg: 0.0, ..FovConfig::default() }.validate().is_err());
        assert!(FovConfig { vertical_deg: 181.0, ..FovConfig::default() }.validate().is_err());
        assert!(FovConfig { horizontal_deg: 360.0, vertical_deg: 180.0, ..FovConfig::default() }.validate().is_ok());
    }
}

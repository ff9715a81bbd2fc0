//! Hidden-point removal by an angular depth buffer.
//!
//! The sphere of directions around the camera is cut into square bins of
//! azimuth and elevation. Each in-range point is drawn as a small disc in
//! its local surface plane: every bin whose center ray crosses the disc
//! records the crossing depth, and the buffer keeps the minimum. A point
//! survives when its own surface, sampled along its bin's center ray, lies
//! no farther than that minimum plus a depth tolerance.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::cloud::{LabeledPointCloud, Vec3};
use crate::error::Result;
use crate::spatial::estimate_normals;
use crate::vss::camera::{CameraPose, FovConfig, FrameCoords};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionConfig {
    /// Angular bin width, degrees.
    pub bin_width_deg: f64,
    /// Depth tolerance behind the nearest surface of a bin, meters.
    pub depth_tolerance: f64,
    /// Disc radius of a point, meters. Zero draws every point into its own
    /// bin only, at its own range.
    pub point_radius: f64,
    /// Neighborhood radius for surface normals, meters.
    pub normal_radius: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            bin_width_deg: 0.5,
            depth_tolerance: 0.05,
            point_radius: 0.02,
            normal_radius: 0.1,
        }
    }
}

impl OcclusionConfig {
    /// Surface normals as used by [`visible_points_with_normals`].
    pub fn normals(&self, cloud: &LabeledPointCloud) -> Vec<Option<Vec3>> {
        if self.point_radius > 0.0 {
            estimate_normals(cloud.positions(), self.normal_radius)
        } else {
            vec![None; cloud.len()]
        }
    }
}

struct Bins {
    width: f64,
    n_az: i64,
    n_el: i64,
    az_cs: Vec<(f64, f64)>,
    el_cs: Vec<(f64, f64)>,
}

impl Bins {
    fn new(width_deg: f64) -> Self {
        let width = width_deg.to_radians();
        let n_az = (TAU / width).ceil() as i64;
        let n_el = (PI / width).ceil() as i64 + 1;
        let az_cs = (0..n_az).map(|a| Self::az_angle(width, a)).map(|x| (x.cos(), x.sin())).collect();
        let el_cs = (0..n_el).map(|e| Self::el_angle(width, e)).map(|x| (x.cos(), x.sin())).collect();
        Self { width, n_az, n_el, az_cs, el_cs }
    }

    fn az_angle(width: f64, az: i64) -> f64 {
        (az as f64 + 0.5) * width - PI
    }

    fn el_angle(width: f64, el: i64) -> f64 {
        ((el as f64 + 0.5) * width - FRAC_PI_2).min(FRAC_PI_2)
    }

    fn az_of(&self, angle: f64) -> i64 {
        (((angle + PI) / self.width).floor() as i64).clamp(0, self.n_az - 1)
    }

    fn el_of(&self, angle: f64) -> i64 {
        (((angle + FRAC_PI_2) / self.width).floor() as i64).clamp(0, self.n_el - 1)
    }

    /// Unit center ray of a bin in camera coordinates.
    fn center(&self, az: i64, el: i64) -> FrameCoords {
        let (ac, as_) = match self.az_cs.get(az as usize) {
            Some(&cs) if az >= 0 => cs,
            _ => {
                let a = Self::az_angle(self.width, az);
                (a.cos(), a.sin())
            }
        };
        let (ec, es) = match self.el_cs.get(el as usize) {
            Some(&cs) if el >= 0 => cs,
            _ => {
                let e = Self::el_angle(self.width, el);
                (e.cos(), e.sin())
            }
        };
        FrameCoords {
            forward: ec * ac,
            right: ec * as_,
            up: es,
        }
    }

    fn slot(&self, az: i64, el: i64) -> usize {
        (az.rem_euclid(self.n_az) * self.n_el + el) as usize
    }
}

fn dot(a: &FrameCoords, b: &FrameCoords) -> f64 {
    a.forward * b.forward + a.right * b.right + a.up * b.up
}

/// Depth along unit ray `c` to the plane through `q` with normal `n`, if
/// the ray meets it in front of the camera.
fn plane_depth(c: &FrameCoords, q: &FrameCoords, n: &FrameCoords) -> Option<f64> {
    let den = dot(c, n);
    if den == 0.0 {
        return None;
    }
    let t = dot(q, n) / den;
    (t > 0.0 && t.is_finite()).then_some(t)
}

/// Visibility of every point from one camera. Points outside the visible
/// range are never visible and never occlude.
pub fn visible_points(
    cloud: &LabeledPointCloud,
    pose: &CameraPose,
    fov: &FovConfig,
    occlusion: &OcclusionConfig,
) -> Result<Vec<bool>> {
    visible_points_with_normals(cloud, &occlusion.normals(cloud), pose, fov, occlusion)
}

/// [`visible_points`] with precomputed normals, one per point, from
/// [`OcclusionConfig::normals`]. Points without a normal face the camera.
pub fn visible_points_with_normals(
    cloud: &LabeledPointCloud,
    normals: &[Option<Vec3>],
    pose: &CameraPose,
    fov: &FovConfig,
    occlusion: &OcclusionConfig,
) -> Result<Vec<bool>> {
    assert_eq!(normals.len(), cloud.len(), "one normal slot per point");
    let frame = pose.frame()?;
    let bins = Bins::new(occlusion.bin_width_deg);
    let radius = occlusion.point_radius;
    let mut nearest = vec![f64::INFINITY; (bins.n_az * bins.n_el) as usize];

    struct Drawn {
        q: FrameCoords,
        n: FrameCoords,
        az: i64,
        el: i64,
        rho: f64,
    }

    let mut drawn: Vec<Option<Drawn>> = Vec::with_capacity(cloud.len());
    for (p, normal) in cloud.positions().iter().zip(normals) {
        let q = frame.to_frame(p);
        if !fov.contains(&q) {
            drawn.push(None);
            continue;
        }
        let rho = q.range();
        let n = match normal {
            Some(n) => FrameCoords {
                forward: n.dot(&frame.forward),
                right: n.dot(&frame.right),
                up: n.dot(&frame.up),
            },
            None => FrameCoords {
                forward: q.forward / rho,
                right: q.right / rho,
                up: q.up / rho,
            },
        };
        let (az_angle, el_angle) = (q.azimuth(), q.elevation());
        let d = Drawn {
            az: bins.az_of(az_angle),
            el: bins.el_of(el_angle),
            q,
            n,
            rho,
        };

        let own = bins.slot(d.az, d.el);
        let own_depth = if radius > 0.0 { own_depth(&bins, &d.q, &d.n, d.az, d.el, rho) } else { rho };
        nearest[own] = nearest[own].min(own_depth);

        if radius > 0.0 {
            let gamma = if rho > radius { (radius / rho).asin() } else { FRAC_PI_2 };
            let el_lo = bins.el_of(el_angle - gamma);
            let el_hi = bins.el_of(el_angle + gamma);
            let cos_el = (el_angle.abs() + gamma).min(FRAC_PI_2).cos();
            let az_span = if cos_el > 0.0 { gamma / cos_el } else { PI };
            let az_reach = (az_span / bins.width).ceil() as i64;
            let (az_lo, az_hi) = if 2 * az_reach + 1 >= bins.n_az {
                (0, bins.n_az - 1)
            } else {
                (d.az - az_reach, d.az + az_reach)
            };
            let r2 = radius * radius;
            for e in el_lo..=el_hi {
                for a in az_lo..=az_hi {
                    let c = bins.center(a, e);
                    let Some(t) = plane_depth(&c, &d.q, &d.n) else { continue };
                    let off = FrameCoords {
                        forward: c.forward * t - d.q.forward,
                        right: c.right * t - d.q.right,
                        up: c.up * t - d.q.up,
                    };
                    if dot(&off, &off) <= r2 {
                        let slot = &mut nearest[bins.slot(a, e)];
                        if t < *slot {
                            *slot = t;
                        }
                    }
                }
            }
        }
        drawn.push(Some(d));
    }

    Ok(drawn
        .into_iter()
        .map(|d| match d {
            Some(d) => {
                let depth = if radius > 0.0 { own_depth(&bins, &d.q, &d.n, d.az, d.el, d.rho).min(d.rho) } else { d.rho };
                depth <= nearest[bins.slot(d.az, d.el)] + occlusion.depth_tolerance
            }
            None => false,
        })
        .collect())
}

/// Depth of a point's own surface plane along its bin's center ray, or its
/// range when the ray misses the plane.
fn own_depth(bins: &Bins, q: &FrameCoords, n: &FrameCoords, az: i64, el: i64, rho: f64) -> f64 {
    plane_depth(&bins.center(az, el), q, n).unwrap_or(rho)
}

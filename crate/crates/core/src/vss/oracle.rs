//! Exact ray-cast visibility, used to validate the depth buffer.
//!
//! Every point is a disc of radius `r` lying in the local surface, with the
//! normal estimated from neighbors within [`NORMAL_RADIUS`]. Points too
//! isolated for a normal are spheres of radius `r`. A point `p` is hidden
//! when the segment from the camera to `p` crosses another point's disc
//! (or sphere) more than `r` before reaching `p`. Discs keep a sampled
//! surface from hiding itself at grazing incidence.
//!
//! [`visibility_oracle`] walks a uniform grid and returns the same mask as
//! the quadratic [`visibility_oracle_brute_force`].

use crate::cloud::{LabeledPointCloud, Vec3};
use crate::error::{Error, Result};
use crate::spatial::{estimate_normals, PointGrid};
use crate::vss::camera::{visible_range_mask, CameraPose, FovConfig};

/// Neighborhood radius for normal estimation, meters.
pub const NORMAL_RADIUS: f64 = 0.1;

/// Whether the occluder at `center` hides the far end of the segment
/// `origin + t * dir`, `t in (0, length)`.
fn blocks(origin: &Vec3, dir: &Vec3, length: f64, center: &Vec3, normal: Option<&Vec3>, radius: f64) -> bool {
    let oc = center - origin;
    match normal {
        Some(n) => {
            let den = dir.dot(n);
            if den == 0.0 {
                return false;
            }
            let t = oc.dot(n) / den;
            t > 0.0 && t < length - radius && (origin + dir * t - center).norm_squared() <= radius * radius
        }
        None => {
            let t = oc.dot(dir);
            let perp2 = oc.norm_squared() - t * t;
            let r2 = radius * radius;
            if perp2 >= r2 {
                return false;
            }
            let half = (r2 - perp2).sqrt();
            t + half > 0.0 && t - half < length - radius
        }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("point radius must be positive, got {r}")))
    }
}

/// Quadratic reference: test every other point against every in-range ray.
pub fn visibility_oracle_brute_force(
    cloud: &LabeledPointCloud,
    pose: &CameraPose,
    fov: &FovConfig,
    point_radius: f64,
) -> Result<Vec<bool>> {
    check_radius(point_radius)?;
    let mut mask = visible_range_mask(cloud, pose, fov)?;
    let pts = cloud.positions();
    let normals = estimate_normals(pts, NORMAL_RADIUS);
    let v = pose.position;
    for (i, p) in pts.iter().enumerate() {
        if !mask[i] {
            continue;
        }
        let seg = p - v;
        let length = seg.norm();
        if length == 0.0 {
            continue;
        }
        let dir = seg / length;
        mask[i] = !pts
            .iter()
            .enumerate()
            .any(|(j, q)| j != i && blocks(&v, &dir, length, q, normals[j].as_ref(), point_radius));
    }
    Ok(mask)
}

/// Ray-cast visibility of every point. The FOV mask is applied exactly as
/// in the depth buffer.
pub fn visibility_oracle(
    cloud: &LabeledPointCloud,
    pose: &CameraPose,
    fov: &FovConfig,
    point_radius: f64,
) -> Result<Vec<bool>> {
    check_radius(point_radius)?;
    let mut mask = visible_range_mask(cloud, pose, fov)?;
    if cloud.is_empty() {
        return Ok(mask);
    }
    let pts = cloud.positions();
    let normals = estimate_normals(pts, NORMAL_RADIUS);
    // An occluder touching the segment has its center within `cell` of one
    // of the samples taken every `cell` along it, so the 27 cells around
    // each sample cover every candidate.
    let cell = (2.0 * point_radius).max(0.08);
    let grid = PointGrid::build(pts, cell);
    let v = pose.position;
    let mut stamp = vec![usize::MAX; grid.n_cells()];

    for i in 0..pts.len() {
        if !mask[i] {
            continue;
        }
        let seg = pts[i] - v;
        let length = seg.norm();
        if length == 0.0 {
            continue;
        }
        let dir = seg / length;
        let steps = ((length / cell).ceil() as usize).max(1);
        let mut hidden = false;
        'walk: for s in 0..=steps {
            let c = grid.coords(&(v + dir * (length * s as f64 / steps as f64)));
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(id) = grid.cell_index([c[0] + dx, c[1] + dy, c[2] + dz]) else {
                            continue;
                        };
                        if stamp[id] == i {
                            continue;
                        }
                        stamp[id] = i;
                        for &j in grid.bucket(id) {
                            let j = j as usize;
                            if j != i && blocks(&v, &dir, length, &pts[j], normals[j].as_ref(), point_radius) {
                                hidden = true;
                                break 'walk;
                            }
                        }
                    }
                }
            }
        }
        mask[i] = !hidden;
    }
    Ok(mask)
}

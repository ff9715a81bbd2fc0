//! Uniform bucket grid for neighbor queries and per-point normal estimation.

use crate::geom::{smallest_eigenvector, Vec3};

/// Points bucketed into cubic cells of a fixed size, stored compactly.
#[derive(Debug, Clone)]
pub struct PointGrid {
    origin: Vec3,
    cell: f64,
    dims: [i64; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl PointGrid {
    /// Bucket `points` into cells of edge `cell`. An empty slice gives a
    /// single empty cell.
    pub fn build(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell must be positive");
        let (origin, dims) = match crate::cloud::Aabb::from_points(points) {
            Some(b) => (b.min, [0, 1, 2].map(|a| ((b.extent()[a] / cell).floor() as i64 + 1).max(1))),
            None => (Vec3::zeros(), [1, 1, 1]),
        };
        let total = (dims[0] * dims[1] * dims[2]) as usize;
        let mut grid = Self {
            origin,
            cell,
            dims,
            starts: vec![0; total + 1],
            items: vec![0; points.len()],
        };
        let ids: Vec<usize> = points.iter().map(|p| grid.flat(grid.coords(p))).collect();
        for &id in &ids {
            grid.starts[id + 1] += 1;
        }
        for k in 0..total {
            grid.starts[k + 1] += grid.starts[k];
        }
        let mut fill = grid.starts.clone();
        for (i, &id) in ids.iter().enumerate() {
            grid.items[fill[id] as usize] = i as u32;
            fill[id] += 1;
        }
        grid
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn n_cells(&self) -> usize {
        self.starts.len() - 1
    }

    /// Cell coordinates of `p`, clamped into the grid.
    pub fn coords(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|a| (((p[a] - self.origin[a]) / self.cell).floor() as i64).clamp(0, self.dims[a] - 1))
    }

    /// Flat index of in-grid cell coordinates, or `None` outside the grid.
    pub fn cell_index(&self, c: [i64; 3]) -> Option<usize> {
        if (0..3).any(|a| c[a] < 0 || c[a] >= self.dims[a]) {
            None
        } else {
            Some(self.flat(c))
        }
    }

    fn flat(&self, c: [i64; 3]) -> usize {
        ((c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]) as usize
    }

    /// Indices of the points in the cell with flat index `id`.
    pub fn bucket(&self, id: usize) -> &[u32] {
        &self.items[self.starts[id] as usize..self.starts[id + 1] as usize]
    }

    /// Call `f(j)` for every point `j` with `|points[j] - center| <= radius`.
    pub fn for_each_within(&self, points: &[Vec3], center: &Vec3, radius: f64, mut f: impl FnMut(usize)) {
        let reach = (radius / self.cell).ceil() as i64;
        let c = self.coords(center);
        let r2 = radius * radius;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(id) = self.cell_index([c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &j in self.bucket(id) {
                            if (points[j as usize] - center).norm_squared() <= r2 {
                                f(j as usize);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Unit surface normal of every point from the covariance of its neighbors
/// within `radius`. Points with fewer than three neighbors (themselves
/// included) get `None`. Sign is arbitrary.
pub fn estimate_normals(points: &[Vec3], radius: f64) -> Vec<Option<Vec3>> {
    let grid = PointGrid::build(points, radius);
    points
        .iter()
        .map(|p| {
            let mut n = 0usize;
            let mut sum = Vec3::zeros();
            let mut outer = [[0.0; 3]; 3];
            grid.for_each_within(points, p, radius, |j| {
                let d = points[j] - p;
                n += 1;
                sum += d;
                for a in 0..3 {
                    for b in 0..3 {
                        outer[a][b] += d[a] * d[b];
                    }
                }
            });
            if n < 3 {
                return None;
            }
            let mean = sum / n as f64;
            let mut cov = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    cov[a][b] = outer[a][b] / n as f64 - mean[a] * mean[b];
                }
            }
            Some(smallest_eigenvector(&cov))
        })
        .collect()
}

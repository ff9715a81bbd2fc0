//! Bird's-eye-view occupancy used to find camera positions.

use crate::cloud::{Label, LabeledPointCloud};
use crate::error::{Error, Result};

/// Labels that define the room shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuralClasses {
    pub floor: Label,
    pub ceiling: Label,
    pub wall: Label,
}

impl StructuralClasses {
    /// Resolve `floor`, `ceiling` and `wall` by name.
    pub fn from_taxonomy(taxonomy: &crate::cloud::ClassTaxonomy) -> Result<Self> {
        let find = |n: &str| {
            taxonomy
                .index_of(n)
                .ok_or_else(|| Error::InvalidTaxonomy(format!("taxonomy has no `{n}` class")))
        };
        Ok(Self {
            floor: find("floor")?,
            ceiling: find("ceiling")?,
            wall: find("wall")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockReason {
    /// The cell holds a point that is neither floor nor ceiling.
    Furniture,
    /// The cell touches the x-y bounding box of the scene.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Free,
    Blocked(BlockReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    origin: [f64; 2],
    cell_size: f64,
    dims: [usize; 2],
    cells: Vec<CellState>,
}

impl BevGrid {
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn state(&self, i: usize, j: usize) -> CellState {
        self.cells[i * self.dims[1] + j]
    }

    /// Cell containing `(x, y)`; coordinates on the far edge of the grid
    /// land in the last cell.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let idx = |v: f64, o: f64, n: usize| {
            let t = ((v - o) / self.cell_size).floor();
            if t < 0.0 { 0 } else { (t as usize).min(n - 1) }
        };
        (idx(x, self.origin[0], self.dims[0]), idx(y, self.origin[1], self.dims[1]))
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.cell_size,
            self.origin[1] + (j as f64 + 0.5) * self.cell_size,
        ]
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        self.iter_cells()
            .filter(|&(i, j)| self.state(i, j) == CellState::Free)
            .collect()
    }

    /// Free cells whose center is at least `clearance` away from every
    /// blocked cell.
    pub fn camera_cells(&self, clearance: f64) -> Vec<(usize, usize)> {
        let reach = (clearance / self.cell_size).ceil() as isize + 1;
        self.free_cells()
            .into_iter()
            .filter(|&(i, j)| {
                let c = self.center(i, j);
                for di in -reach..=reach {
                    for dj in -reach..=reach {
                        let (ni, nj) = (i as isize + di, j as isize + dj);
                        if ni < 0 || nj < 0 || ni >= self.dims[0] as isize || nj >= self.dims[1] as isize {
                            continue;
                        }
                        let (ni, nj) = (ni as usize, nj as usize);
                        if self.state(ni, nj) == CellState::Free {
                            continue;
                        }
                        if self.distance_to_cell(c, ni, nj) < clearance {
                            return false;
                        }
                    }
                }
                true
            })
            .collect()
    }

    fn distance_to_cell(&self, p: [f64; 2], i: usize, j: usize) -> f64 {
        let lo = [
            self.origin[0] + i as f64 * self.cell_size,
            self.origin[1] + j as f64 * self.cell_size,
        ];
        let dx = (lo[0] - p[0]).max(0.0).max(p[0] - (lo[0] + self.cell_size));
        let dy = (lo[1] - p[1]).max(0.0).max(p[1] - (lo[1] + self.cell_size));
        dx.hypot(dy)
    }

    fn iter_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let [nx, ny] = self.dims;
        (0..nx).flat_map(move |i| (0..ny).map(move |j| (i, j)))
    }
}

/// Project the scene onto a 2D grid and mark cells holding furniture or
/// touching the scene's x-y bounding box as blocked.
pub fn compute_free_space_bev(
    cloud: &LabeledPointCloud,
    cell_size: f64,
    structural: &StructuralClasses,
) -> Result<BevGrid> {
    if !(cell_size > 0.0) {
        return Err(Error::InvalidArgument(format!("BEV cell size must be positive, got {cell_size}")));
    }
    let bbox = crate::cloud::aabb_of(cloud)?;
    let ext = bbox.extent();
    let dims = [0, 1].map(|a| ((ext[a] / cell_size).ceil() as usize).max(1));
    let mut grid = BevGrid {
        origin: [bbox.min.x, bbox.min.y],
        cell_size,
        dims,
        cells: vec![CellState::Free; dims[0] * dims[1]],
    };
    for (p, &l) in cloud.positions().iter().zip(cloud.labels()) {
        if l == structural.floor || l == structural.ceiling {
            continue;
        }
        let (i, j) = grid.cell_of(p.x, p.y);
        grid.cells[i * dims[1] + j] = CellState::Blocked(BlockReason::Furniture);
    }
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            if i == 0 || j == 0 || i + 1 == dims[0] || j + 1 == dims[1] {
                grid.cells[i * dims[1] + j] = CellState::Blocked(BlockReason::Boundary);
            }
        }
    }
    if grid.cells.iter().all(|c| *c != CellState::Free) {
        return Err(Error::NoFreeSpace);
    }
    Ok(grid)
}

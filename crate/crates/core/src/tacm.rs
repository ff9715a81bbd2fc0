//! Tail-aware cuboid mixing.
//!
//! A source scene and a pseudo-labeled target scene are each cut into a
//! grid of cuboids with jittered boundaries. Each grid may be spatially
//! shuffled, then cells of the target are swapped for the source cuboid of
//! the same cell. Cuboids rich in rare classes are remembered in a FIFO
//! queue and pasted back in when a mixed scene holds too few of them.
//!
//! Cells are numbered with z fastest: `flat = (i * n_y + j) * n_z + k`.

use std::collections::VecDeque;
use std::ops::Range;

use crate::cloud::{Aabb, Label, LabeledPointCloud, Vec3};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, PartialEq)]
pub struct TacmConfig {
    /// Cells per axis `(n_x, n_y, n_z)`.
    pub partitions: [usize; 3],
    /// Half-range of the uniform boundary perturbation, meters.
    pub delta_phi: f64,
    /// Probability that a scene's cuboids are spatially permuted.
    pub rho_s: f64,
    /// Per-cell probability of taking the source cuboid.
    pub rho_m: f64,
    /// Tail queue capacity `N_q`.
    pub queue_capacity: usize,
    /// Number of tail classes `n_r`.
    pub n_tail_classes: usize,
    /// Minimum tail cuboids per mixed scene `u`.
    pub min_tail_cuboids: usize,
}

impl Default for TacmConfig {
    fn default() -> Self {
        Self {
            partitions: [2, 2, 1],
            delta_phi: 0.1,
            rho_s: 0.5,
            rho_m: 0.5,
            queue_capacity: 256,
            n_tail_classes: 2,
            min_tail_cuboids: 2,
        }
    }
}

impl TacmConfig {
    pub fn n_cells(&self) -> usize {
        self.partitions.iter().product()
    }

    /// Check ranges; `n_classes` bounds the tail class count.
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.partitions.contains(&0) {
            return Err(Error::Config(format!("partitions must be at least 1, got {:?}", self.partitions)));
        }
        if !(self.delta_phi >= 0.0 && self.delta_phi.is_finite()) {
            return Err(Error::Config(format!("delta_phi must be non-negative, got {}", self.delta_phi)));
        }
        for (name, p) in [("rho_s", self.rho_s), ("rho_m", self.rho_m)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.n_tail_classes > n_classes {
            return Err(Error::Config(format!(
                "{} tail classes requested but the taxonomy has {n_classes}",
                self.n_tail_classes
            )));
        }
        if self.min_tail_cuboids > self.n_cells() {
            return Err(Error::Config(format!(
                "min_tail_cuboids {} exceeds the {} cells",
                self.min_tail_cuboids,
                self.n_cells()
            )));
        }
        Ok(())
    }
}

/// Where a cuboid's points came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Source,
    Target,
    Queue,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Source => "source",
            Provenance::Target => "target",
            Provenance::Queue => "queue",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cuboid {
    /// Grid cell the cuboid occupies.
    pub cell: [usize; 3],
    /// Grid cell it was cut from; differs from `cell` after permutation.
    pub home: [usize; 3],
    /// The home cell's box, moved along with the points.
    pub bounds: Aabb,
    /// Indices into the owning set's cloud.
    pub members: Vec<usize>,
    pub provenance: Provenance,
}

/// A scene cut into cuboids.
#[derive(Debug, Clone, PartialEq)]
pub struct CuboidSet {
    cloud: LabeledPointCloud,
    boundaries: [Vec<f64>; 3],
    cuboids: Vec<Cuboid>,
    permutation: Option<Vec<usize>>,
}

impl CuboidSet {
    pub fn cloud(&self) -> &LabeledPointCloud {
        &self.cloud
    }

    /// Boundary positions per axis, `n_a + 1` each.
    pub fn boundaries(&self) -> &[Vec<f64>; 3] {
        &self.boundaries
    }

    /// Cuboids in cell order.
    pub fn cuboids(&self) -> &[Cuboid] {
        &self.cuboids
    }

    pub fn shape(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.boundaries[a].len() - 1)
    }

    pub fn n_cells(&self) -> usize {
        self.cuboids.len()
    }

    /// `Some(p)` when the cells were permuted: the cuboid now in cell `c`
    /// was cut from cell `p[c]` (flat indices).
    pub fn permutation(&self) -> Option<&[usize]> {
        self.permutation.as_deref()
    }

    pub fn flat_index(&self, cell: [usize; 3]) -> usize {
        flat_index(self.shape(), cell)
    }

    /// The grid box of a cell.
    pub fn cell_bounds(&self, flat: usize) -> Aabb {
        let c = unflatten(self.shape(), flat);
        let b = &self.boundaries;
        Aabb {
            min: Vec3::new(b[0][c[0]], b[1][c[1]], b[2][c[2]]),
            max: Vec3::new(b[0][c[0] + 1], b[1][c[1] + 1], b[2][c[2] + 1]),
        }
    }
}

fn flat_index(shape: [usize; 3], c: [usize; 3]) -> usize {
    (c[0] * shape[1] + c[1]) * shape[2] + c[2]
}

fn unflatten(shape: [usize; 3], flat: usize) -> [usize; 3] {
    [flat / (shape[1] * shape[2]), (flat / shape[2]) % shape[1], flat % shape[2]]
}

/// Cut a cloud into `n_x x n_y x n_z` cuboids. Outer boundaries are the
/// cloud's extrema; interior ones are equal divisions shifted by
/// independent uniform draws in `[-delta_phi, delta_phi]` (x first, then y,
/// then z). A point belongs to cell `i` when `b[i] <= p < b[i + 1]`, the
/// last cell of each axis being closed.
///
/// With `n > 1` parts the extent must exceed `2 * delta_phi` for two parts
/// and `2 * delta_phi * n` beyond, so that boundaries stay strictly
/// increasing for any draw.
pub fn partition_cuboids(
    cloud: &LabeledPointCloud,
    provenance: Provenance,
    config: &TacmConfig,
    rng: &mut RandomStream,
) -> Result<CuboidSet> {
    if config.partitions.contains(&0) {
        return Err(Error::Config(format!("partitions must be at least 1, got {:?}", config.partitions)));
    }
    let bbox = crate::cloud::aabb_of(cloud)?;
    let delta = config.delta_phi;
    let mut boundaries: [Vec<f64>; 3] = Default::default();
    for a in 0..3 {
        let n = config.partitions[a];
        let (lo, hi) = (bbox.min[a], bbox.max[a]);
        let extent = hi - lo;
        if n > 1 {
            let needed = if n == 2 { 2.0 * delta } else { 2.0 * delta * n as f64 };
            if !(extent > needed) {
                return Err(Error::DegeneratePartition {
                    axis: a,
                    extent,
                    parts: n,
                    perturbation: delta,
                });
            }
        }
        let mut b = Vec::with_capacity(n + 1);
        b.push(lo);
        for i in 1..n {
            let t = i as f64 / n as f64;
            b.push(t * hi + (1.0 - t) * lo + rng.uniform_range(-delta, delta));
        }
        if n > 0 {
            b.push(hi);
        }
        boundaries[a] = b;
    }

    let shape = config.partitions;
    let n_cells = config.n_cells();
    let mut members = vec![Vec::new(); n_cells];
    for (idx, p) in cloud.positions().iter().enumerate() {
        let c = [0, 1, 2].map(|a| {
            let b = &boundaries[a];
            b[1..b.len() - 1].iter().take_while(|&&x| x <= p[a]).count()
        });
        members[flat_index(shape, c)].push(idx);
    }
    let cuboids = members
        .into_iter()
        .enumerate()
        .map(|(flat, members)| {
            let c = unflatten(shape, flat);
            Cuboid {
                cell: c,
                home: c,
                bounds: Aabb {
                    min: Vec3::new(boundaries[0][c[0]], boundaries[1][c[1]], boundaries[2][c[2]]),
                    max: Vec3::new(boundaries[0][c[0] + 1], boundaries[1][c[1] + 1], boundaries[2][c[2] + 1]),
                },
                members,
                provenance,
            }
        })
        .collect();
    Ok(CuboidSet {
        cloud: cloud.clone(),
        boundaries,
        cuboids,
        permutation: None,
    })
}

/// With probability `rho_s` (one draw per scene) apply a uniformly random
/// permutation of the cells; otherwise return the set unchanged.
pub fn permute_cuboids(set: CuboidSet, rho_s: f64, rng: &mut RandomStream) -> CuboidSet {
    if rng.bernoulli(rho_s) {
        let perm = rng.permutation(set.n_cells());
        apply_permutation(set, &perm)
    } else {
        set
    }
}

/// Move the cuboid cut from cell `perm[c]` into cell `c`: its points are
/// translated so that its bounds' center lands on the center of cell `c`.
pub fn apply_permutation(set: CuboidSet, perm: &[usize]) -> CuboidSet {
    let n = set.n_cells();
    assert_eq!(perm.len(), n, "permutation length must equal the cell count");
    let mut seen = vec![false; n];
    for &p in perm {
        assert!(p < n && !std::mem::replace(&mut seen[p], true), "not a permutation: {perm:?}");
    }
    let shape = set.shape();
    let mut offsets = vec![Vec3::zeros(); set.cloud.len()];
    let mut cuboids = Vec::with_capacity(n);
    for (dest, &from) in perm.iter().enumerate() {
        let cub = &set.cuboids[from];
        let offset = set.cell_bounds(dest).center() - cub.bounds.center();
        for &m in &cub.members {
            offsets[m] = offset;
        }
        cuboids.push(Cuboid {
            cell: unflatten(shape, dest),
            home: cub.home,
            bounds: cub.bounds.translated(&offset),
            members: cub.members.clone(),
            provenance: cub.provenance,
        });
    }
    let cloud = set.cloud.map_positions(|i, p| p + offsets[i]);
    // Composing with an earlier permutation keeps `perm` relative to homes.
    let composed = match &set.permutation {
        Some(prev) => perm.iter().map(|&p| prev[p]).collect(),
        None => perm.to_vec(),
    };
    CuboidSet {
        cloud,
        boundaries: set.boundaries,
        cuboids,
        permutation: Some(composed),
    }
}

/// The `n_r` classes with the smallest positive ratio, ties going to the
/// lower index. Fewer are returned when fewer classes have a positive ratio.
pub fn tail_classes(ratios: &[f64], n_r: usize) -> Vec<Label> {
    let mut positive: Vec<usize> = (0..ratios.len()).filter(|&c| ratios[c] > 0.0).collect();
    positive.sort_by(|&a, &b| ratios[a].total_cmp(&ratios[b]).then(a.cmp(&b)));
    positive.truncate(n_r);
    positive.into_iter().map(|c| c as Label).collect()
}

/// Whether a cuboid with these labels holds more of some tail class, as a
/// fraction of its labeled points, than that class's dataset ratio.
fn is_tail<'a>(labels: impl Iterator<Item = &'a Label>, n_classes: usize, tails: &[Label], ratios: &[f64]) -> bool {
    let mut counts = vec![0usize; n_classes];
    let mut labeled = 0usize;
    for &l in labels {
        if let Some(c) = counts.get_mut(l as usize) {
            *c += 1;
            labeled += 1;
        }
    }
    labeled > 0
        && tails
            .iter()
            .any(|&t| counts[t as usize] as f64 / labeled as f64 > ratios[t as usize])
}

/// Tail flag of every cuboid, in cell order.
pub fn classify_tail_cuboids(set: &CuboidSet, ratios: &[f64], n_r: usize) -> Vec<bool> {
    let tails = tail_classes(ratios, n_r);
    let labels = set.cloud.labels();
    let n_classes = set.cloud.taxonomy().len().min(ratios.len());
    set.cuboids
        .iter()
        .map(|c| is_tail(c.members.iter().map(|&m| &labels[m]), n_classes, &tails, ratios))
        .collect()
}

/// A stored tail cuboid in its own frame: the bounds' min corner is the
/// origin and the bounds span `[0, extent]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueuedCuboid {
    /// Insertion counter, unique over the queue's lifetime.
    pub serial: u64,
    pub extent: Vec3,
    pub positions: Vec<Vec3>,
    pub labels: Vec<Label>,
}

/// Bounded FIFO of tail cuboids.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCuboidQueue {
    capacity: usize,
    entries: VecDeque<QueuedCuboid>,
    pushed: u64,
}

impl TailCuboidQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1024)),
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &QueuedCuboid> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&QueuedCuboid> {
        self.entries.get(i)
    }

    /// Total insertions so far, including evicted ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    /// Append a cuboid, evicting the oldest beyond capacity. Returns the
    /// serial it was given.
    pub fn push(&mut self, extent: Vec3, positions: Vec<Vec3>, labels: Vec<Label>) -> u64 {
        let serial = self.pushed;
        self.pushed += 1;
        self.entries.push_back(QueuedCuboid {
            serial,
            extent,
            positions,
            labels,
        });
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        serial
    }
}

/// Push every flagged cuboid of `set`, in cell order, as a copy moved into
/// its own frame.
pub fn update_tail_queue(queue: &mut TailCuboidQueue, set: &CuboidSet, flags: &[bool]) {
    assert_eq!(flags.len(), set.n_cells(), "one flag per cuboid");
    for (c, _) in set.cuboids.iter().zip(flags).filter(|(_, &f)| f) {
        let origin = c.bounds.min;
        let positions = c.members.iter().map(|&m| set.cloud.positions()[m] - origin).collect();
        let labels = c.members.iter().map(|&m| set.cloud.labels()[m]).collect();
        queue.push(c.bounds.extent(), positions, labels);
    }
}

/// One cell of a mixed scene.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSlot {
    pub cell: [usize; 3],
    pub provenance: Provenance,
    /// Where the slot's points sit in the mixed cloud.
    pub range: Range<usize>,
    /// Bounds of the placed cuboid, after translation.
    pub bounds: Aabb,
    /// Serial of the queued cuboid for `Provenance::Queue` slots.
    pub queue_serial: Option<u64>,
}

/// An intermediate-domain scene: target context with source and queued
/// cuboids pasted in. Source points carry ground truth, target and queued
/// points carry pseudo labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedScene {
    pub cloud: LabeledPointCloud,
    pub slots: Vec<MixedSlot>,
    pub source_permuted: bool,
    pub target_permuted: bool,
}

impl MixedScene {
    pub fn count(&self, provenance: Provenance) -> usize {
        self.slots.iter().filter(|s| s.provenance == provenance).count()
    }

    /// Provenance of every point.
    pub fn point_provenance(&self) -> Vec<Provenance> {
        let mut out = vec![Provenance::Target; self.cloud.len()];
        for s in &self.slots {
            out[s.range.clone()].fill(s.provenance);
        }
        out
    }
}

struct SlotContent {
    provenance: Provenance,
    bounds: Aabb,
    positions: Vec<Vec3>,
    labels: Vec<Label>,
    queue_serial: Option<u64>,
}

fn take_cuboid(set: &CuboidSet, flat: usize, offset: Vec3) -> SlotContent {
    let c = &set.cuboids[flat];
    SlotContent {
        provenance: c.provenance,
        bounds: c.bounds.translated(&offset),
        positions: c.members.iter().map(|&m| set.cloud.positions()[m] + offset).collect(),
        labels: c.members.iter().map(|&m| set.cloud.labels()[m]).collect(),
        queue_serial: None,
    }
}

fn mix_slots(source: &CuboidSet, target: &CuboidSet, rho_m: f64, rng: &mut RandomStream) -> Result<Vec<SlotContent>> {
    if source.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            source_shape: source.shape(),
            target_shape: target.shape(),
        });
    }
    if source.cloud.taxonomy() != target.cloud.taxonomy() {
        return Err(Error::InvalidArgument("source and target use different taxonomies".into()));
    }
    Ok((0..target.n_cells())
        .map(|flat| {
            if rng.bernoulli(rho_m) {
                let offset = target.cell_bounds(flat).center() - source.cuboids[flat].bounds.center();
                take_cuboid(source, flat, offset)
            } else {
                take_cuboid(target, flat, Vec3::zeros())
            }
        })
        .collect())
}

fn assemble(target: &CuboidSet, slots: Vec<SlotContent>, source_permuted: bool) -> MixedScene {
    let total = slots.iter().map(|s| s.positions.len()).sum();
    let mut positions = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut out = Vec::with_capacity(slots.len());
    for (flat, s) in slots.into_iter().enumerate() {
        let start = positions.len();
        positions.extend(s.positions);
        labels.extend(s.labels);
        out.push(MixedSlot {
            cell: unflatten(target.shape(), flat),
            provenance: s.provenance,
            range: start..positions.len(),
            bounds: s.bounds,
            queue_serial: s.queue_serial,
        });
    }
    MixedScene {
        cloud: LabeledPointCloud::from_parts_unchecked(positions, labels, target.cloud.taxonomy().clone()),
        slots: out,
        source_permuted,
        target_permuted: target.permutation.is_some(),
    }
}

/// Start from the target scene and, independently per cell with
/// probability `rho_m`, replace the target cuboid by the source cuboid of
/// the same cell, translated so its bounds' center lands on the target
/// cell's center. Points are ordered by cell.
pub fn mix_cuboids(source: &CuboidSet, target: &CuboidSet, rho_m: f64, rng: &mut RandomStream) -> Result<MixedScene> {
    let slots = mix_slots(source, target, rho_m, rng)?;
    Ok(assemble(target, slots, source.permutation.is_some()))
}

/// The full mixing step for one target scene.
///
/// Draw order: partition source, partition target, permute source, permute
/// target, mix, oversample. If the mixed scene has fewer than `u` tail
/// cuboids and the queue is non-empty, `min(u - tails, non-tail cells)`
/// uniformly chosen non-tail cells are replaced by queued cuboids, drawn
/// without replacement unless the queue is too small. Finally the target
/// set's tail cuboids are pushed onto the queue.
pub fn tacm_compose(
    source: &LabeledPointCloud,
    target: &LabeledPointCloud,
    ratios: &[f64],
    config: &TacmConfig,
    queue: &mut TailCuboidQueue,
    rng: &mut RandomStream,
) -> Result<MixedScene> {
    config.validate(target.taxonomy().len())?;
    let src = partition_cuboids(source, Provenance::Source, config, rng)?;
    let tgt = partition_cuboids(target, Provenance::Target, config, rng)?;
    let src = permute_cuboids(src, config.rho_s, rng);
    let tgt = permute_cuboids(tgt, config.rho_s, rng);
    let mut slots = mix_slots(&src, &tgt, config.rho_m, rng)?;

    let tails = tail_classes(ratios, config.n_tail_classes);
    let n_classes = target.taxonomy().len().min(ratios.len());
    let flags: Vec<bool> = slots
        .iter()
        .map(|s| is_tail(s.labels.iter(), n_classes, &tails, ratios))
        .collect();
    let have = flags.iter().filter(|&&f| f).count();
    if have < config.min_tail_cuboids && !queue.is_empty() {
        let mut free: Vec<usize> = (0..slots.len()).filter(|&i| !flags[i]).collect();
        let k = (config.min_tail_cuboids - have).min(free.len());
        // partial Fisher-Yates picks k distinct cells
        for i in 0..k {
            let j = i + rng.below(free.len() - i);
            free.swap(i, j);
        }
        let draws: Vec<usize> = if queue.len() >= k {
            let mut ids: Vec<usize> = (0..queue.len()).collect();
            for i in 0..k {
                let j = i + rng.below(ids.len() - i);
                ids.swap(i, j);
            }
            ids.truncate(k);
            ids
        } else {
            (0..k).map(|_| rng.below(queue.len())).collect()
        };
        for (&cell, &q) in free[..k].iter().zip(&draws) {
            let entry = queue.get(q).expect("draw within queue");
            let offset = tgt.cell_bounds(cell).center() - entry.extent * 0.5;
            slots[cell] = SlotContent {
                provenance: Provenance::Queue,
                bounds: Aabb {
                    min: offset,
                    max: offset + entry.extent,
                },
                positions: entry.positions.iter().map(|p| p + offset).collect(),
                labels: entry.labels.clone(),
                queue_serial: Some(entry.serial),
            };
        }
    }

    let target_flags = classify_tail_cuboids(&tgt, ratios, config.n_tail_classes);
    update_tail_queue(queue, &tgt, &target_flags);
    Ok(assemble(&tgt, slots, src.permutation.is_some()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::ClassTaxonomy;
    use std::sync::Arc;

    fn tax() -> Arc<ClassTaxonomy> {
        Arc::new(ClassTaxonomy::toy_indoor())
    }

    fn random_cloud(n: usize, labels: &[Label], rng: &mut RandomStream) -> LabeledPointCloud {
        let pts = (0..n)
            .map(|_| Vec3::new(rng.uniform_range(0.0, 4.0), rng.uniform_range(0.0, 3.0), rng.uniform_range(0.0, 2.5)))
            .collect();
        let l = (0..n).map(|_| labels[rng.below(labels.len())]).collect();
        LabeledPointCloud::new(pts, l, tax()).unwrap()
    }

    fn cfg(partitions: [usize; 3], delta_phi: f64) -> TacmConfig {
        TacmConfig { partitions, delta_phi, ..TacmConfig::default() }
    }

    #[test]
    fn single_cell_is_the_whole_cloud() {
        let mut rng = RandomStream::new(1);
        let c = random_cloud(200, &[0, 1], &mut rng);
        let set = partition_cuboids(&c, Provenance::Target, &cfg([1, 1, 1], 0.1), &mut rng).unwrap();
        assert_eq!(set.n_cells(), 1);
        assert_eq!(set.cuboids()[0].members, (0..200).collect::<Vec<_>>());
        assert_eq!(set.cuboids()[0].bounds, crate::cloud::aabb_of(&c).unwrap());
    }

    #[test]
    fn unperturbed_unit_cube_splits_at_half() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(0.5, 0.2, 0.3),
            Vec3::new(0.2, 0.5, 0.9),
            Vec3::new(0.7, 0.7, 0.1),
        ];
        let c = LabeledPointCloud::new(pts, vec![0; 5], tax()).unwrap();
        let set = partition_cuboids(&c, Provenance::Target, &cfg([2, 2, 1], 0.0), &mut RandomStream::new(0)).unwrap();
        assert_eq!(set.boundaries()[0], vec![0.0, 0.5, 1.0]);
        assert_eq!(set.boundaries()[1], vec![0.0, 0.5, 1.0]);
        let m: Vec<Vec<usize>> = set.cuboids().iter().map(|c| c.members.clone()).collect();
        // cells (0,0), (0,1), (1,0), (1,1)
        assert_eq!(m, vec![vec![0], vec![3], vec![2], vec![1, 4]]);
    }

    #[test]
    fn degenerate_extent_is_rejected() {
        let c = LabeledPointCloud::new(
            vec![Vec3::zeros(), Vec3::new(0.15, 1.0, 1.0)],
            vec![0, 0],
            tax(),
        )
        .unwrap();
        let err = partition_cuboids(&c, Provenance::Source, &cfg([2, 1, 1], 0.1), &mut RandomStream::new(0));
        assert!(matches!(err, Err(Error::DegeneratePartition { axis: 0, parts: 2, .. })));
        assert!(partition_cuboids(&c, Provenance::Source, &cfg([1, 2, 2], 0.1), &mut RandomStream::new(0)).is_ok());
        let flat = LabeledPointCloud::new(vec![Vec3::zeros(); 2], vec![0, 0], tax()).unwrap();
        assert!(partition_cuboids(&flat, Provenance::Source, &cfg([1, 1, 2], 0.0), &mut RandomStream::new(0)).is_err());
    }

    #[test]
    fn membership_matches_bound_checks() {
        let mut rng = RandomStream::new(5);
        let c = random_cloud(3000, &[0, 1, 3], &mut rng);
        let set = partition_cuboids(&c, Provenance::Target, &cfg([2, 2, 1], 0.1), &mut rng).unwrap();
        let b = set.boundaries();
        for (flat, cub) in set.cuboids().iter().enumerate() {
            let [i, j, k] = cub.cell;
            let inside = |v: f64, lo: f64, hi: f64, last: bool| v >= lo && (v < hi || (last && v <= hi));
            let want: Vec<usize> = (0..c.len())
                .filter(|&p| {
                    let q = c.positions()[p];
                    inside(q.x, b[0][i], b[0][i + 1], i + 1 == b[0].len() - 1)
                        && inside(q.y, b[1][j], b[1][j + 1], j + 1 == b[1].len() - 1)
                        && inside(q.z, b[2][k], b[2][k + 1], k + 1 == b[2].len() - 1)
                })
                .collect();
            assert_eq!(cub.members, want, "cell {flat}");
        }
    }

    #[test]
    fn forced_swap_exchanges_centers_rigidly() {
        let mut rng = RandomStream::new(8);
        let c = random_cloud(500, &[0, 1], &mut rng);
        let set = partition_cuboids(&c, Provenance::Target, &cfg([2, 1, 1], 0.1), &mut rng).unwrap();
        let centers = [set.cell_bounds(0).center(), set.cell_bounds(1).center()];
        let before = set.clone();
        let swapped = apply_permutation(set, &[1, 0]);
        assert_eq!(swapped.permutation(), Some(&[1, 0][..]));
        assert!((swapped.cuboids()[0].bounds.center() - centers[0]).norm() < 1e-12);
        assert!((swapped.cuboids()[1].bounds.center() - centers[1]).norm() < 1e-12);
        assert_eq!(swapped.cuboids()[0].members, before.cuboids()[1].members);
        for cub in swapped.cuboids() {
            let m = &cub.members;
            for w in m.windows(2) {
                let d0 = (before.cloud().positions()[w[0]] - before.cloud().positions()[w[1]]).norm();
                let d1 = (swapped.cloud().positions()[w[0]] - swapped.cloud().positions()[w[1]]).norm();
                assert!((d0 - d1).abs() <= 1e-9 * d0.max(1e-12));
            }
        }
        assert_eq!(swapped.cloud().labels(), before.cloud().labels());
    }

    #[test]
    fn zero_probability_permutation_is_identity() {
        let mut rng = RandomStream::new(9);
        let c = random_cloud(300, &[0], &mut rng);
        let set = partition_cuboids(&c, Provenance::Target, &TacmConfig::default(), &mut rng).unwrap();
        assert_eq!(permute_cuboids(set.clone(), 0.0, &mut rng), set);
    }

    #[test]
    fn tail_rule_examples() {
        assert_eq!(tail_classes(&[0.5, 0.3, 0.2], 2), vec![2, 1]);
        assert_eq!(tail_classes(&[0.4, 0.2, 0.2, 0.0, 0.2], 2), vec![1, 2]);
        assert_eq!(tail_classes(&[1.0, 0.0], 2), vec![0]);
        let tails = tail_classes(&[0.5, 0.3, 0.2], 2);
        let forty = [2u16, 2, 0, 0, 0];
        assert!(is_tail(forty.iter(), 3, &tails, &[0.5, 0.3, 0.2]));
        let none = [0u16, 0, 0];
        assert!(!is_tail(none.iter(), 3, &tails, &[0.5, 0.3, 0.2]));
        // ignored points do not count towards the fraction
        let ign = [2u16, IGNORE, IGNORE, IGNORE];
        assert!(is_tail(ign.iter(), 3, &tails, &[0.5, 0.3, 0.2]));
    }

    const IGNORE: Label = crate::cloud::IGNORE_LABEL;

    #[test]
    fn queue_is_fifo_and_bounded() {
        let mut q = TailCuboidQueue::new(256);
        for i in 0..300 {
            q.push(Vec3::zeros(), vec![Vec3::new(i as f64, 0.0, 0.0)], vec![0]);
        }
        assert_eq!(q.len(), 256);
        assert_eq!(q.iter().next().unwrap().serial, 44);
        assert_eq!(q.iter().last().unwrap().serial, 299);
        let mut zero = TailCuboidQueue::new(0);
        zero.push(Vec3::zeros(), vec![], vec![]);
        assert!(zero.is_empty());
    }

    #[test]
    fn queued_cuboids_are_in_their_own_frame() {
        let mut rng = RandomStream::new(10);
        let c = random_cloud(400, &[0, 5], &mut rng);
        let set = partition_cuboids(&c, Provenance::Target, &cfg([2, 2, 1], 0.1), &mut rng).unwrap();
        let mut q = TailCuboidQueue::new(8);
        update_tail_queue(&mut q, &set, &[false, true, false, true]);
        assert_eq!(q.len(), 2);
        for (entry, cub) in q.iter().zip([&set.cuboids()[1], &set.cuboids()[3]]) {
            assert_eq!(entry.positions.len(), cub.members.len());
            assert_eq!(entry.extent, cub.bounds.extent());
            for p in &entry.positions {
                assert!(p.iter().all(|v| v >= -1e-12));
                assert!((0..3).all(|a| p[a] <= entry.extent[a] + 1e-12));
            }
        }
        let before = q.clone();
        update_tail_queue(&mut q, &set, &[false; 4]);
        assert_eq!(q, before);
    }

    #[test]
    fn mixing_extremes() {
        let mut rng = RandomStream::new(11);
        let s = random_cloud(600, &[0, 1], &mut rng);
        let t = random_cloud(500, &[3, IGNORE], &mut rng);
        let c = cfg([2, 2, 1], 0.1);
        let src = partition_cuboids(&s, Provenance::Source, &c, &mut rng).unwrap();
        let tgt = partition_cuboids(&t, Provenance::Target, &c, &mut rng).unwrap();

        let none = mix_cuboids(&src, &tgt, 0.0, &mut rng).unwrap();
        assert_eq!(none.count(Provenance::Source), 0);
        let mut expect: Vec<Vec3> = Vec::new();
        for cub in tgt.cuboids() {
            expect.extend(cub.members.iter().map(|&m| tgt.cloud().positions()[m]));
        }
        assert_eq!(none.cloud.positions(), &expect[..]);

        let all = mix_cuboids(&src, &tgt, 1.0, &mut rng).unwrap();
        assert_eq!(all.count(Provenance::Source), 4);
        assert_eq!(all.cloud.len(), 600);
        assert!(all.cloud.labels().iter().all(|&l| l == 0 || l == 1));
        for (flat, slot) in all.slots.iter().enumerate() {
            assert!((slot.bounds.center() - tgt.cell_bounds(flat).center()).norm() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = RandomStream::new(12);
        let s = random_cloud(100, &[0], &mut rng);
        let a = partition_cuboids(&s, Provenance::Source, &cfg([2, 1, 1], 0.1), &mut rng).unwrap();
        let b = partition_cuboids(&s, Provenance::Target, &cfg([1, 2, 1], 0.1), &mut rng).unwrap();
        assert!(matches!(mix_cuboids(&a, &b, 0.5, &mut rng), Err(Error::ShapeMismatch { .. })));
    }

    fn scripted_scenes() -> (LabeledPointCloud, LabeledPointCloud) {
        let mut rng = RandomStream::new(13);
        (random_cloud(400, &[0, 1], &mut rng), random_cloud(400, &[0, 1], &mut rng))
    }

    #[test]
    fn empty_queue_means_plain_mixing() {
        let (s, t) = scripted_scenes();
        let c = TacmConfig::default();
        let mut q = TailCuboidQueue::new(8);
        let composed = tacm_compose(&s, &t, &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0], &c, &mut q, &mut RandomStream::new(3)).unwrap();
        let mut rng = RandomStream::new(3);
        let src = partition_cuboids(&s, Provenance::Source, &c, &mut rng).unwrap();
        let tgt = partition_cuboids(&t, Provenance::Target, &c, &mut rng).unwrap();
        let src = permute_cuboids(src, c.rho_s, &mut rng);
        let tgt = permute_cuboids(tgt, c.rho_s, &mut rng);
        let plain = mix_cuboids(&src, &tgt, c.rho_m, &mut rng).unwrap();
        assert_eq!(composed, plain);
    }

    #[test]
    fn scripted_oversampling_replaces_two_non_tail_cells() {
        // ratios make class 5 a tail class; the scenes hold none of it
        let (s, t) = scripted_scenes();
        let ratios = [0.45, 0.45, 0.0, 0.0, 0.0, 0.1, 0.0];
        let c = TacmConfig { n_tail_classes: 1, rho_m: 0.0, ..TacmConfig::default() };
        let mut q = TailCuboidQueue::new(8);
        for k in 0..2 {
            q.push(Vec3::new(1.0, 1.0, 1.0), vec![Vec3::new(0.5, 0.5, k as f64 * 0.5)], vec![5]);
        }
        let m = tacm_compose(&s, &t, &ratios, &c, &mut q, &mut RandomStream::new(4)).unwrap();
        assert_eq!(m.count(Provenance::Queue), 2);
        let mut serials: Vec<u64> = m.slots.iter().filter_map(|s| s.queue_serial).collect();
        serials.sort_unstable();
        assert_eq!(serials, vec![0, 1]);
        // the queue gains nothing: the target has no tail cuboid
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn enough_tail_cuboids_means_no_replacement() {
        let (s, t) = scripted_scenes();
        // class 1 is a tail class with a tiny ratio, so every cell is tail
        let ratios = [0.9, 0.01, 0.0, 0.0, 0.0, 0.09, 0.0];
        let c = TacmConfig::default();
        let mut q = TailCuboidQueue::new(8);
        q.push(Vec3::new(1.0, 1.0, 1.0), vec![Vec3::zeros()], vec![5]);
        let m = tacm_compose(&s, &t, &ratios, &c, &mut q, &mut RandomStream::new(5)).unwrap();
        assert_eq!(m.count(Provenance::Queue), 0);
        assert_eq!(q.len(), 5);
    }
}

//! Labeled point clouds, class taxonomies and bounding boxes.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use crate::error::{Error, Result};

pub use crate::geom::Vec3;

/// Per-point class index. Values `>= taxonomy.len()` other than the
/// taxonomy's ignore index are invalid.
pub type Label = u16;

/// The sentinel used for unlabeled or filtered points. It is also what the
/// file formats serialize for ignored points.
pub const IGNORE_LABEL: Label = u16::MAX;

/// Name of the built-in taxonomy used by the scene templates.
pub const TOY_INDOOR: &str = "toy-indoor";

/// An ordered list of class names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTaxonomy {
    name: String,
    names: Vec<String>,
    ignore_index: Label,
}

impl ClassTaxonomy {
    pub fn new(name: impl Into<String>, names: Vec<String>) -> Result<Self> {
        Self::with_ignore_index(name, names, IGNORE_LABEL)
    }

    pub fn with_ignore_index(
        name: impl Into<String>,
        names: Vec<String>,
        ignore_index: Label,
    ) -> Result<Self> {
        let name = name.into();
        if names.is_empty() {
            return Err(Error::InvalidTaxonomy(format!("`{name}` has no classes")));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidTaxonomy(format!("duplicate class name `{n}`")));
            }
        }
        if (ignore_index as usize) < names.len() {
            return Err(Error::InvalidTaxonomy(format!(
                "ignore index {ignore_index} collides with a class index"
            )));
        }
        Ok(Self {
            name,
            names,
            ignore_index,
        })
    }

    /// The seven-class indoor taxonomy produced by the scene generator:
    /// floor, wall, ceiling, cabinet, bed, table, shelf.
    pub fn toy_indoor() -> Self {
        let names = ["floor", "wall", "ceiling", "cabinet", "bed", "table", "shelf"];
        Self::new(TOY_INDOOR, names.iter().map(|s| s.to_string()).collect())
            .expect("built-in taxonomy is valid")
    }

    /// Look up a taxonomy shipped with the crate.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            TOY_INDOOR => Some(Self::toy_indoor()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of classes `c`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ignore_index(&self) -> Label {
        self.ignore_index
    }

    pub fn index_of(&self, class_name: &str) -> Option<Label> {
        self.names
            .iter()
            .position(|n| n == class_name)
            .map(|i| i as Label)
    }

    pub fn is_valid_class(&self, label: Label) -> bool {
        (label as usize) < self.names.len()
    }

    /// True for any class index or the ignore sentinel.
    pub fn accepts(&self, label: Label) -> bool {
        self.is_valid_class(label) || label == self.ignore_index
    }
}

/// Axis-aligned bounding box in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if (0..3).any(|a| !(min[a] <= max[a])) {
            return Err(Error::InvalidArgument(format!(
                "box min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (mut min, mut max) = (first, first);
        for p in it {
            min = min.inf(p);
            max = max.sup(p);
        }
        Some(Self { min, max })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn translated(&self, offset: &Vec3) -> Aabb {
        Aabb {
            min: self.min + offset,
            max: self.max + offset,
        }
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    /// True when the interiors intersect (touching faces do not count).
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] < other.max[a] && other.min[a] < self.max[a])
    }
}

/// Positions plus one label per point.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    positions: Vec<Vec3>,
    labels: Vec<Label>,
    taxonomy: Arc<ClassTaxonomy>,
}

impl LabeledPointCloud {
    pub fn new(
        positions: Vec<Vec3>,
        labels: Vec<Label>,
        taxonomy: Arc<ClassTaxonomy>,
    ) -> Result<Self> {
        if positions.len() != labels.len() {
            return Err(Error::Dimension {
                expected: positions.len(),
                actual: labels.len(),
            });
        }
        if let Some(p) = positions.iter().find(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument(format!("non-finite position {p:?}")));
        }
        if let Some(&l) = labels.iter().find(|&&l| !taxonomy.accepts(l)) {
            return Err(Error::unknown_label(l));
        }
        Ok(Self {
            positions,
            labels,
            taxonomy,
        })
    }

    pub fn empty(taxonomy: Arc<ClassTaxonomy>) -> Self {
        Self {
            positions: Vec::new(),
            labels: Vec::new(),
            taxonomy,
        }
    }

    /// Internal constructor for callers that already uphold the invariants.
    pub(crate) fn from_parts_unchecked(
        positions: Vec<Vec3>,
        labels: Vec<Label>,
        taxonomy: Arc<ClassTaxonomy>,
    ) -> Self {
        debug_assert_eq!(positions.len(), labels.len());
        Self {
            positions,
            labels,
            taxonomy,
        }
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn taxonomy(&self) -> &Arc<ClassTaxonomy> {
        &self.taxonomy
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn into_parts(self) -> (Vec<Vec3>, Vec<Label>, Arc<ClassTaxonomy>) {
        (self.positions, self.labels, self.taxonomy)
    }

    /// Same positions with a different label vector.
    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Self> {
        Self::new(self.positions.clone(), labels, self.taxonomy.clone())
    }

    /// Same labels with displaced positions; the closure sees each point.
    pub fn map_positions(&self, mut f: impl FnMut(usize, &Vec3) -> Vec3) -> Self {
        let positions = self
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| f(i, p))
            .collect();
        Self::from_parts_unchecked(positions, self.labels.clone(), self.taxonomy.clone())
    }

    /// The points selected by `mask`, in input order.
    pub fn select_mask(&self, mask: &[bool]) -> Self {
        assert_eq!(mask.len(), self.len(), "mask length must match the cloud");
        let idx: Vec<usize> = (0..self.len()).filter(|&i| mask[i]).collect();
        self.select(&idx)
    }

    /// The points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self::from_parts_unchecked(
            indices.iter().map(|&i| self.positions[i]).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.taxonomy.clone(),
        )
    }

    pub fn is_ignored(&self, i: usize) -> bool {
        self.labels[i] == self.taxonomy.ignore_index()
    }

    /// Per-class point counts (ignored points excluded).
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.taxonomy.len()];
        for &l in &self.labels {
            if let Some(c) = counts.get_mut(l as usize) {
                *c += 1;
            }
        }
        counts
    }
}

/// Tight bounding box of a non-empty cloud.
pub fn aabb_of(cloud: &LabeledPointCloud) -> Result<Aabb> {
    Aabb::from_points(cloud.positions()).ok_or(Error::EmptyInput("point cloud"))
}

/// A relabeling from one taxonomy into a condensed one.
#[derive(Debug, Clone)]
pub struct LabelMapping {
    target: Arc<ClassTaxonomy>,
    table: BTreeMap<Label, Label>,
}

impl LabelMapping {
    /// `table` maps source class indices to target class indices or to the
    /// target taxonomy's ignore index.
    pub fn new(target: Arc<ClassTaxonomy>, table: BTreeMap<Label, Label>) -> Result<Self> {
        for (&from, &to) in &table {
            if !target.accepts(to) {
                return Err(Error::UnknownLabel {
                    label: to.into(),
                    context: Some(format!("mapping target for source class {from}")),
                });
            }
        }
        Ok(Self { target, table })
    }

    /// Maps each class onto itself.
    pub fn identity(taxonomy: Arc<ClassTaxonomy>) -> Self {
        let table = (0..taxonomy.len() as Label).map(|l| (l, l)).collect();
        Self {
            target: taxonomy,
            table,
        }
    }

    pub fn target(&self) -> &Arc<ClassTaxonomy> {
        &self.target
    }

    pub fn get(&self, label: Label) -> Option<Label> {
        self.table.get(&label).copied()
    }
}

/// Replace every label according to `mapping`. Ignored points stay ignored.
pub fn map_labels(cloud: &LabeledPointCloud, mapping: &LabelMapping) -> Result<LabeledPointCloud> {
    let source_ignore = cloud.taxonomy().ignore_index();
    let target_ignore = mapping.target().ignore_index();
    let labels = cloud
        .labels()
        .iter()
        .map(|&l| {
            if l == source_ignore {
                Ok(target_ignore)
            } else {
                mapping.get(l).ok_or_else(|| Error::UnknownLabel {
                    label: l.into(),
                    context: Some("no entry in label mapping".into()),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledPointCloud::from_parts_unchecked(
        cloud.positions().to_vec(),
        labels,
        mapping.target().clone(),
    ))
}

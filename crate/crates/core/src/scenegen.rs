//! Synthetic indoor rooms sampled as labeled point clouds.
//!
//! A room spans `[0, width] x [0, depth] x [0, height]`. Floor, ceiling and
//! the four walls are sampled as rectangles; furniture is a list of
//! axis-aligned boxes whose exposed faces are sampled the same way.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::cloud::{Aabb, ClassTaxonomy, Label, LabeledPointCloud, Vec3};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Surface density used by default, points per square meter.
pub const DEFAULT_DENSITY: f64 = 1250.0;

/// A planar parallelogram `origin + a * edge_u + b * edge_v`, `a, b in [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub origin: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
}

impl Rect {
    pub fn new(origin: Vec3, edge_u: Vec3, edge_v: Vec3) -> Self {
        Self {
            origin,
            edge_u,
            edge_v,
        }
    }

    pub fn area(&self) -> f64 {
        self.edge_u.cross(&self.edge_v).norm()
    }

    /// Distance from `p` to the rectangle (as a filled 2D region).
    pub fn distance(&self, p: &Vec3) -> f64 {
        let d = p - self.origin;
        let uu = self.edge_u.norm_squared();
        let vv = self.edge_v.norm_squared();
        let a = if uu > 0.0 { (d.dot(&self.edge_u) / uu).clamp(0.0, 1.0) } else { 0.0 };
        let b = if vv > 0.0 { (d.dot(&self.edge_v) / vv).clamp(0.0, 1.0) } else { 0.0 };
        // Edges are axis-aligned and orthogonal in every face we build.
        (self.origin + self.edge_u * a + self.edge_v * b - p).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FurnitureBox {
    pub bounds: Aabb,
    pub class: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub furniture: Vec<FurnitureBox>,
    pub floor_class: Label,
    pub wall_class: Label,
    pub ceiling_class: Label,
    /// Points per square meter.
    pub density: f64,
    pub taxonomy: Arc<ClassTaxonomy>,
}

impl SceneSpec {
    /// An empty room using the toy taxonomy's structural classes.
    pub fn empty_room(width: f64, depth: f64, height: f64) -> Self {
        let taxonomy = Arc::new(ClassTaxonomy::toy_indoor());
        Self {
            width,
            depth,
            height,
            furniture: Vec::new(),
            floor_class: taxonomy.index_of("floor").unwrap(),
            wall_class: taxonomy.index_of("wall").unwrap(),
            ceiling_class: taxonomy.index_of("ceiling").unwrap(),
            density: DEFAULT_DENSITY,
            taxonomy,
        }
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }

    pub fn with_box(mut self, min: [f64; 3], max: [f64; 3], class: Label) -> Self {
        self.furniture.push(FurnitureBox {
            bounds: Aabb {
                min: Vec3::from(min),
                max: Vec3::from(max),
            },
            class,
        });
        self
    }

    pub fn room_bounds(&self) -> Aabb {
        Aabb {
            min: Vec3::zeros(),
            max: Vec3::new(self.width, self.depth, self.height),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.depth > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "room dimensions must be positive, got {} x {} x {}",
                self.width, self.depth, self.height
            )));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "surface density must be positive, got {}",
                self.density
            )));
        }
        for l in [self.floor_class, self.wall_class, self.ceiling_class] {
            if !self.taxonomy.is_valid_class(l) {
                return Err(Error::unknown_label(l));
            }
        }
        let room = self.room_bounds();
        for (i, f) in self.furniture.iter().enumerate() {
            if !self.taxonomy.is_valid_class(f.class) {
                return Err(Error::unknown_label(f.class));
            }
            if Aabb::new(f.bounds.min, f.bounds.max).is_err()
                || !room.contains(&f.bounds.min)
                || !room.contains(&f.bounds.max)
            {
                return Err(Error::InvalidArgument(format!(
                    "furniture box {i} {:?} is not inside the room",
                    f.bounds
                )));
            }
        }
        for i in 0..self.furniture.len() {
            for j in (i + 1)..self.furniture.len() {
                if self.furniture[i].bounds.overlaps(&self.furniture[j].bounds) {
                    return Err(Error::Overlap { first: i, second: j });
                }
            }
        }
        Ok(())
    }

    /// Every sampled face paired with its class, in generation order.
    pub fn faces(&self) -> Vec<(Rect, Label)> {
        let (w, d, h) = (self.width, self.depth, self.height);
        let x = Vec3::x();
        let y = Vec3::y();
        let z = Vec3::z();
        let mut faces = vec![
            (Rect::new(Vec3::zeros(), x * w, y * d), self.floor_class),
            (Rect::new(Vec3::new(0.0, 0.0, h), x * w, y * d), self.ceiling_class),
            (Rect::new(Vec3::zeros(), y * d, z * h), self.wall_class),
            (Rect::new(Vec3::new(w, 0.0, 0.0), y * d, z * h), self.wall_class),
            (Rect::new(Vec3::zeros(), x * w, z * h), self.wall_class),
            (Rect::new(Vec3::new(0.0, d, 0.0), x * w, z * h), self.wall_class),
        ];
        let room = self.room_bounds();
        for f in &self.furniture {
            for (rect, axis, coord) in box_faces(&f.bounds) {
                // Faces flush against the room shell are never exposed.
                if coord == room.min[axis] || coord == room.max[axis] {
                    continue;
                }
                faces.push((rect, f.class));
            }
        }
        faces
    }

    /// Serialize as `key=value` lines with repeated `box=` entries.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "taxonomy={}", self.taxonomy.name());
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "depth={}", self.depth);
        let _ = writeln!(s, "height={}", self.height);
        let _ = writeln!(s, "density={}", self.density);
        let _ = writeln!(s, "floor_class={}", self.floor_class);
        let _ = writeln!(s, "wall_class={}", self.wall_class);
        let _ = writeln!(s, "ceiling_class={}", self.ceiling_class);
        for f in &self.furniture {
            let (a, b) = (f.bounds.min, f.bounds.max);
            let _ = writeln!(
                s,
                "box={},{},{},{},{},{},{}",
                a.x, a.y, a.z, b.x, b.y, b.z, f.class
            );
        }
        s
    }

    /// Parse the `key=value` form. Class fields accept an index or a class
    /// name; unknown taxonomies must be supplied through `taxonomy`.
    pub fn from_text(text: &str, taxonomy: Option<Arc<ClassTaxonomy>>) -> Result<Self> {
        let mut taxonomy = taxonomy;
        let mut width = None;
        let mut depth = None;
        let mut height = None;
        let mut density = DEFAULT_DENSITY;
        let mut classes: [Option<String>; 3] = [None, None, None];
        let mut boxes: Vec<(usize, [f64; 6], String)> = Vec::new();

        let parse_err = |line: usize, message: String| Error::Parse {
            source_name: "scene spec".into(),
            location: crate::error::ParseLocation::Line(line),
            message,
        };
        let num = |line: usize, v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("bad number `{v}`: {e}")))
        };

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, format!("expected key=value, got `{line}`")))?;
            let value = value.trim();
            match key.trim() {
                "taxonomy" => {
                    if taxonomy.as_ref().map(|t| t.name() != value).unwrap_or(true) {
                        taxonomy = Some(Arc::new(ClassTaxonomy::builtin(value).ok_or_else(
                            || parse_err(line_no, format!("unknown taxonomy `{value}`")),
                        )?));
                    }
                }
                "width" => width = Some(num(line_no, value)?),
                "depth" => depth = Some(num(line_no, value)?),
                "height" => height = Some(num(line_no, value)?),
                "density" => density = num(line_no, value)?,
                "floor_class" => classes[0] = Some(value.to_string()),
                "wall_class" => classes[1] = Some(value.to_string()),
                "ceiling_class" => classes[2] = Some(value.to_string()),
                "box" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != 7 {
                        return Err(parse_err(
                            line_no,
                            format!("box needs 7 fields, got {}", parts.len()),
                        ));
                    }
                    let mut c = [0.0; 6];
                    for (k, slot) in c.iter_mut().enumerate() {
                        *slot = num(line_no, parts[k])?;
                    }
                    boxes.push((line_no, c, parts[6].to_string()));
                }
                other => return Err(parse_err(line_no, format!("unknown key `{other}`"))),
            }
        }

        let taxonomy = taxonomy.unwrap_or_else(|| Arc::new(ClassTaxonomy::toy_indoor()));
        let resolve = |name: &str| -> Result<Label> {
            if let Ok(i) = name.parse::<Label>() {
                if taxonomy.is_valid_class(i) {
                    return Ok(i);
                }
                return Err(Error::unknown_label(i));
            }
            taxonomy.index_of(name).ok_or_else(|| Error::UnknownLabel {
                label: u32::MAX,
                context: Some(format!("class name `{name}`")),
            })
        };
        let default_class = |slot: &Option<String>, fallback: &str| -> Result<Label> {
            resolve(slot.as_deref().unwrap_or(fallback))
        };
        let missing = |k: &str| parse_err(0, format!("missing required key `{k}`"));
        let mut spec = SceneSpec {
            width: width.ok_or_else(|| missing("width"))?,
            depth: depth.ok_or_else(|| missing("depth"))?,
            height: height.ok_or_else(|| missing("height"))?,
            furniture: Vec::new(),
            floor_class: default_class(&classes[0], "floor")?,
            wall_class: default_class(&classes[1], "wall")?,
            ceiling_class: default_class(&classes[2], "ceiling")?,
            density,
            taxonomy: taxonomy.clone(),
        };
        for (_, c, class) in boxes {
            spec = spec.with_box([c[0], c[1], c[2]], [c[3], c[4], c[5]], resolve(&class)?);
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// The six faces of a box as `(rect, normal axis, plane coordinate)`.
fn box_faces(b: &Aabb) -> Vec<(Rect, usize, f64)> {
    let (lo, hi) = (b.min, b.max);
    let e = b.extent();
    let ex = Vec3::new(e.x, 0.0, 0.0);
    let ey = Vec3::new(0.0, e.y, 0.0);
    let ez = Vec3::new(0.0, 0.0, e.z);
    vec![
        (Rect::new(lo, ey, ez), 0, lo.x),
        (Rect::new(Vec3::new(hi.x, lo.y, lo.z), ey, ez), 0, hi.x),
        (Rect::new(lo, ex, ez), 1, lo.y),
        (Rect::new(Vec3::new(lo.x, hi.y, lo.z), ex, ez), 1, hi.y),
        (Rect::new(lo, ex, ey), 2, lo.z),
        (Rect::new(Vec3::new(lo.x, lo.y, hi.z), ex, ey), 2, hi.z),
    ]
}

/// Draw `floor(density * area)` points, plus one more with probability equal
/// to the fractional part, uniformly on `face`.
pub fn sample_primitive_surface(face: &Rect, density: f64, rng: &mut RandomStream) -> Vec<Vec3> {
    let expected = density * face.area();
    if !(expected > 0.0) {
        return Vec::new();
    }
    let whole = expected.floor();
    let n = whole as usize + usize::from(rng.bernoulli(expected - whole));
    (0..n)
        .map(|_| {
            let a = rng.uniform();
            let b = rng.uniform();
            face.origin + face.edge_u * a + face.edge_v * b
        })
        .collect()
}

/// Sample every face of the room and its furniture.
pub fn generate_scene(spec: &SceneSpec, rng: &mut RandomStream) -> Result<LabeledPointCloud> {
    spec.validate()?;
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    for (face, class) in spec.faces() {
        let pts = sample_primitive_surface(&face, spec.density, rng);
        labels.extend(std::iter::repeat_n(class, pts.len()));
        positions.extend(pts);
    }
    Ok(LabeledPointCloud::from_parts_unchecked(
        positions,
        labels,
        spec.taxonomy.clone(),
    ))
}

/// Parametric room layouts used by the examples, tests and the toy benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneTemplate {
    EmptyRoom,
    OneOccluder,
    Cluttered,
    Corridor,
    TailHeavy,
    TwoRoom,
}

impl SceneTemplate {
    pub const ALL: [SceneTemplate; 6] = [
        SceneTemplate::EmptyRoom,
        SceneTemplate::OneOccluder,
        SceneTemplate::Cluttered,
        SceneTemplate::Corridor,
        SceneTemplate::TailHeavy,
        SceneTemplate::TwoRoom,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SceneTemplate::EmptyRoom => "empty",
            SceneTemplate::OneOccluder => "one-occluder",
            SceneTemplate::Cluttered => "cluttered",
            SceneTemplate::Corridor => "corridor",
            SceneTemplate::TailHeavy => "tail-heavy",
            SceneTemplate::TwoRoom => "two-room",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    /// The fixed reference layout of this template.
    pub fn canonical(&self) -> SceneSpec {
        let t = ClassTaxonomy::toy_indoor();
        let c = |n: &str| t.index_of(n).unwrap();
        match self {
            SceneTemplate::EmptyRoom => SceneSpec::empty_room(4.0, 4.0, 2.5),
            SceneTemplate::OneOccluder => SceneSpec::empty_room(4.0, 4.0, 2.5).with_box(
                [1.5, 1.5, 0.0],
                [2.5, 2.5, 1.2],
                c("cabinet"),
            ),
            SceneTemplate::Cluttered => SceneSpec::empty_room(5.0, 4.0, 2.6)
                .with_box([0.3, 0.3, 0.0], [2.3, 1.9, 0.5], c("bed"))
                .with_box([3.4, 0.0, 0.0], [4.4, 0.5, 1.9], c("cabinet"))
                .with_box([2.8, 2.4, 0.0], [4.0, 3.2, 0.75], c("table"))
                .with_box([0.0, 3.0, 0.0], [1.4, 3.35, 1.8], c("shelf"))
                .with_box([1.6, 2.6, 0.0], [2.1, 3.1, 1.0], c("cabinet")),
            SceneTemplate::Corridor => SceneSpec::empty_room(7.0, 2.0, 2.5)
                .with_box([2.0, 0.0, 0.0], [2.6, 0.45, 1.9], c("cabinet"))
                .with_box([4.5, 1.6, 0.0], [5.6, 2.0, 1.6], c("shelf")),
            SceneTemplate::TailHeavy => SceneSpec::empty_room(4.5, 4.0, 2.5)
                .with_box([0.4, 0.4, 0.0], [2.4, 2.0, 0.5], c("bed"))
                .with_box([3.2, 3.0, 0.0], [4.1, 3.6, 0.75], c("table"))
                .with_box([3.8, 0.3, 0.0], [4.5, 0.6, 1.2], c("shelf")),
            SceneTemplate::TwoRoom => SceneSpec::empty_room(6.0, 4.0, 2.5)
                // partition wall with a 1 m doorway
                .with_box([2.9, 0.0, 0.0], [3.1, 2.2, 2.5], c("wall"))
                .with_box([2.9, 3.2, 0.0], [3.1, 4.0, 2.5], c("wall"))
                .with_box([0.5, 0.5, 0.0], [1.7, 1.3, 0.75], c("table"))
                .with_box([4.2, 2.2, 0.0], [6.0, 3.8, 0.5], c("bed")),
        }
    }

    /// A randomized variant: room size and furniture placement drawn from
    /// `rng`, furniture kept non-overlapping with a free walkway.
    pub fn randomized(&self, rng: &mut RandomStream) -> SceneSpec {
        let t = ClassTaxonomy::toy_indoor();
        let c = |n: &str| t.index_of(n).unwrap();
        let (w, d, h) = match self {
            SceneTemplate::Corridor => (
                rng.uniform_range(6.0, 8.0),
                rng.uniform_range(1.8, 2.4),
                rng.uniform_range(2.4, 2.8),
            ),
            SceneTemplate::TwoRoom => (
                rng.uniform_range(5.5, 7.0),
                rng.uniform_range(3.5, 4.5),
                rng.uniform_range(2.4, 2.8),
            ),
            _ => (
                rng.uniform_range(3.5, 5.5),
                rng.uniform_range(3.0, 4.5),
                rng.uniform_range(2.4, 2.8),
            ),
        };
        let mut spec = SceneSpec::empty_room(w, d, h);
        // (class, footprint x, footprint y, height) ranges
        let catalog: Vec<(Label, [f64; 2], [f64; 2], [f64; 2])> = match self {
            SceneTemplate::EmptyRoom => vec![],
            SceneTemplate::OneOccluder => {
                vec![(c("cabinet"), [0.6, 1.2], [0.6, 1.2], [1.0, 1.6])]
            }
            SceneTemplate::Cluttered => vec![
                (c("bed"), [1.8, 2.1], [1.4, 1.7], [0.4, 0.6]),
                (c("cabinet"), [0.8, 1.2], [0.4, 0.6], [1.7, 2.1]),
                (c("table"), [0.9, 1.4], [0.6, 0.9], [0.7, 0.8]),
                (c("shelf"), [0.8, 1.4], [0.25, 0.4], [1.4, 2.0]),
            ],
            SceneTemplate::Corridor => vec![
                (c("cabinet"), [0.5, 0.8], [0.35, 0.5], [1.7, 2.0]),
                (c("shelf"), [0.8, 1.4], [0.25, 0.4], [1.4, 1.9]),
            ],
            SceneTemplate::TailHeavy => vec![
                (c("bed"), [1.8, 2.1], [1.4, 1.7], [0.4, 0.6]),
                (c("table"), [0.7, 1.0], [0.5, 0.7], [0.7, 0.8]),
                (c("shelf"), [0.5, 0.8], [0.25, 0.35], [1.0, 1.4]),
            ],
            SceneTemplate::TwoRoom => vec![
                (c("table"), [0.9, 1.3], [0.6, 0.9], [0.7, 0.8]),
                (c("bed"), [1.8, 2.1], [1.4, 1.7], [0.4, 0.6]),
                (c("cabinet"), [0.8, 1.2], [0.4, 0.6], [1.7, 2.1]),
            ],
        };
        if *self == SceneTemplate::TwoRoom {
            let xw = w * rng.uniform_range(0.45, 0.55);
            let door = rng.uniform_range(0.9, 1.2);
            let door_y = rng.uniform_range(0.4, d - door - 0.4);
            spec = spec
                .with_box([xw - 0.1, 0.0, 0.0], [xw + 0.1, door_y, h], c("wall"))
                .with_box([xw - 0.1, door_y + door, 0.0], [xw + 0.1, d, h], c("wall"));
        }
        for (class, fx, fy, fz) in catalog {
            let sx = rng.uniform_range(fx[0], fx[1]).min(w - 0.6);
            let sy = rng.uniform_range(fy[0], fy[1]).min(d - 0.6);
            let sz = rng.uniform_range(fz[0], fz[1]).min(h - 0.2);
            for _attempt in 0..40 {
                // Alternate between wall-flush and free-standing placement.
                let against_wall = rng.bernoulli(0.5);
                let x0 = if against_wall && rng.bernoulli(0.5) {
                    if rng.bernoulli(0.5) { 0.0 } else { w - sx }
                } else {
                    rng.uniform_range(0.3, (w - sx - 0.3).max(0.3))
                };
                let y0 = if against_wall {
                    if rng.bernoulli(0.5) { 0.0 } else { d - sy }
                } else {
                    rng.uniform_range(0.3, (d - sy - 0.3).max(0.3))
                };
                let candidate = Aabb {
                    min: Vec3::new(x0, y0, 0.0),
                    max: Vec3::new(x0 + sx, y0 + sy, sz),
                };
                if !spec.room_bounds().contains(&candidate.max) {
                    continue;
                }
                // Keep 0.4 m of clearance between pieces.
                let padded = Aabb {
                    min: candidate.min - Vec3::new(0.4, 0.4, 0.0),
                    max: candidate.max + Vec3::new(0.4, 0.4, 0.0),
                };
                if spec.furniture.iter().any(|f| f.bounds.overlaps(&padded)) {
                    continue;
                }
                spec.furniture.push(FurnitureBox {
                    bounds: candidate,
                    class,
                });
                break;
            }
        }
        spec
    }
}

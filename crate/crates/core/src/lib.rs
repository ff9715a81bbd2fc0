pub mod augment;
pub mod cloud;
pub mod config;
pub mod error;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod pseudo;
pub mod rng;
pub mod scenegen;
pub mod segmenter;
pub mod spatial;
pub mod tacm;
pub mod vss;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::augment::{standard_augment, AugmentConfig};
    pub use crate::cloud::{aabb_of, map_labels, Aabb, ClassTaxonomy, Label, LabelMapping, LabeledPointCloud, Vec3, IGNORE_LABEL};
    pub use crate::error::{Error, Result};
    pub use crate::rng::RandomStream;
    pub use crate::scenegen::{generate_scene, sample_primitive_surface, Rect, SceneSpec, SceneTemplate};
    pub use crate::vss::{
        jitter_points, simulate_scan, simulate_scan_prepared, virtual_scan, virtual_scan_prepared, visibility_oracle, visible_points, visible_range_mask,
        CameraPose, FovConfig, ScanPrep, StructuralClasses, ViewingMode, VssConfig,
    };
}

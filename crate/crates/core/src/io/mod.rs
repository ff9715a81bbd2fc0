//! Point files and dataset manifests.
//!
//! Three point formats are supported, all carrying positions in meters and
//! one label per point. Ignored points are stored with label 65535 whatever
//! the taxonomy's own ignore index is.
//!
//! * `ply_ascii`: PLY with `double` coordinates and a `ushort label`.
//! * `ply_binary_le`: little-endian PLY with `float` coordinates and a
//!   `ushort label`.
//! * `xyzl_text`: one `x y z label` line per point.

mod manifest;
mod ply;
mod xyzl;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub use manifest::{load_manifest, write_manifest, DatasetManifest, DomainRole, ManifestEntry};

use crate::cloud::{ClassTaxonomy, Label, LabeledPointCloud, IGNORE_LABEL};
use crate::error::{Error, ParseLocation, Result};
use std::sync::Arc;

/// Label value written to files for ignored points.
pub const FILE_IGNORE_LABEL: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FileFormat {
    PlyAscii,
    PlyBinaryLe,
    XyzlText,
}

impl FileFormat {
    pub const ALL: [FileFormat; 3] = [FileFormat::PlyAscii, FileFormat::PlyBinaryLe, FileFormat::XyzlText];

    pub fn as_str(&self) -> &'static str {
        match self {
            FileFormat::PlyAscii => "ply_ascii",
            FileFormat::PlyBinaryLe => "ply_binary_le",
            FileFormat::XyzlText => "xyzl_text",
        }
    }

    /// Conventional file extension, without the dot.
    pub fn extension(&self) -> &'static str {
        match self {
            FileFormat::PlyAscii | FileFormat::PlyBinaryLe => "ply",
            FileFormat::XyzlText => "xyzl",
        }
    }

    /// Format of an existing file: `.ply` files are told apart by their
    /// header, anything else is read as `xyzl_text`.
    pub fn detect(path: &Path) -> Result<FileFormat> {
        let is_ply = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
        if !is_ply {
            return Ok(FileFormat::XyzlText);
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ply::detect(&bytes, &path.display().to_string())
    }
}

impl fmt::Display for FileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ply_ascii" => Ok(FileFormat::PlyAscii),
            "ply_binary_le" => Ok(FileFormat::PlyBinaryLe),
            "xyzl_text" => Ok(FileFormat::XyzlText),
            other => Err(Error::Config(format!(
                "unknown file format `{other}` (expected ply_ascii, ply_binary_le or xyzl_text)"
            ))),
        }
    }
}

/// Serialize a cloud in memory.
pub fn encode_points(cloud: &LabeledPointCloud, format: FileFormat) -> Vec<u8> {
    let ignore = cloud.taxonomy().ignore_index();
    let labels = cloud.labels().iter().map(|&l| if l == ignore { FILE_IGNORE_LABEL } else { l });
    match format {
        FileFormat::PlyAscii => ply::encode_ascii(cloud.positions(), labels, cloud.taxonomy().name()),
        FileFormat::PlyBinaryLe => ply::encode_binary(cloud.positions(), labels, cloud.taxonomy().name()),
        FileFormat::XyzlText => xyzl::encode(cloud.positions(), labels),
    }
}

/// Parse a cloud from memory. `source_name` only appears in errors.
pub fn decode_points(
    bytes: &[u8],
    format: FileFormat,
    taxonomy: Arc<ClassTaxonomy>,
    source_name: &str,
) -> Result<LabeledPointCloud> {
    let raw = match format {
        FileFormat::PlyAscii | FileFormat::PlyBinaryLe => ply::decode(bytes, format, source_name)?,
        FileFormat::XyzlText => xyzl::decode(bytes, source_name)?,
    };
    let mut labels = Vec::with_capacity(raw.labels.len());
    for (k, &(value, location)) in raw.labels.iter().enumerate() {
        labels.push(file_label(value, &taxonomy).ok_or_else(|| Error::UnknownLabel {
            label: value,
            context: Some(format!("point {k} of {source_name}, {location}")),
        })?);
    }
    LabeledPointCloud::new(raw.positions, labels, taxonomy)
}

fn file_label(value: u32, taxonomy: &ClassTaxonomy) -> Option<Label> {
    if value == FILE_IGNORE_LABEL as u32 {
        return Some(taxonomy.ignore_index());
    }
    let l = Label::try_from(value).ok()?;
    (l != IGNORE_LABEL && taxonomy.is_valid_class(l)).then_some(l)
}

/// Positions and raw label values as read from a file, each label with the
/// place it was read from.
struct RawPoints {
    positions: Vec<crate::cloud::Vec3>,
    labels: Vec<(u32, ParseLocation)>,
}

fn parse_error(source_name: &str, location: ParseLocation, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        location,
        message: message.into(),
    }
}

pub fn read_point_file(path: impl AsRef<Path>, format: FileFormat, taxonomy: Arc<ClassTaxonomy>) -> Result<LabeledPointCloud> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_points(&bytes, format, taxonomy, &path.display().to_string())
}

pub fn write_point_file(cloud: &LabeledPointCloud, path: impl AsRef<Path>, format: FileFormat) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_points(cloud, format)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Vec3;

    fn taxonomy() -> Arc<ClassTaxonomy> {
        Arc::new(ClassTaxonomy::toy_indoor())
    }

    #[test]
    fn format_names_round_trip() {
        for f in FileFormat::ALL {
            assert_eq!(f.as_str().parse::<FileFormat>().unwrap(), f);
        }
        assert!("obj".parse::<FileFormat>().is_err());
    }

    #[test]
    fn ignored_points_are_stored_as_65535() {
        let t = Arc::new(ClassTaxonomy::with_ignore_index("t", vec!["a".into(), "b".into()], 255).unwrap());
        let c = LabeledPointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0), Vec3::zeros()], vec![255, 1], t.clone()).unwrap();
        let text = String::from_utf8(encode_points(&c, FileFormat::XyzlText)).unwrap();
        assert_eq!(text, "1 2 3 65535\n0 0 0 1\n");
        for f in FileFormat::ALL {
            let back = decode_points(&encode_points(&c, f), f, t.clone(), "mem").unwrap();
            assert_eq!(back.labels(), &[255, 1]);
        }
    }

    #[test]
    fn out_of_range_label_is_unknown() {
        let err = decode_points(b"0 0 0 7\n", FileFormat::XyzlText, taxonomy(), "mem").unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { label: 7, .. }), "{err}");
        let err = decode_points(b"0 0 0 70000\n", FileFormat::XyzlText, taxonomy(), "mem").unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { label: 70000, .. }), "{err}");
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let c = LabeledPointCloud::new(vec![Vec3::new(0.5, 1.0, 2.0)], vec![3], taxonomy()).unwrap();
        for f in FileFormat::ALL {
            let path = dir.path().join(format!("a_{}.{}", f.as_str(), f.extension()));
            write_point_file(&c, &path, f).unwrap();
            assert_eq!(FileFormat::detect(&path).unwrap(), f);
            assert_eq!(read_point_file(&path, f, taxonomy()).unwrap(), c);
        }
        let missing = read_point_file(dir.path().join("nope.ply"), FileFormat::PlyAscii, taxonomy());
        assert!(matches!(missing, Err(Error::Io { .. })));
    }
}

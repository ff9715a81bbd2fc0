use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use super::{parse_error, read_point_file, FileFormat};
use crate::cloud::{ClassTaxonomy, LabeledPointCloud};
use crate::error::{Error, ParseLocation, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainRole {
    Source,
    Target,
}

impl DomainRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            DomainRole::Source => "source",
            DomainRole::Target => "target",
        }
    }
}

impl fmt::Display for DomainRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(DomainRole::Source),
            "target" => Ok(DomainRole::Target),
            other => Err(Error::Config(format!("unknown domain role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    /// Path as resolved against the manifest's directory.
    pub path: PathBuf,
}

/// A list of scenes forming one domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub role: DomainRole,
    pub taxonomy: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The built-in taxonomy named by the manifest.
    pub fn builtin_taxonomy(&self) -> Result<Arc<ClassTaxonomy>> {
        ClassTaxonomy::builtin(&self.taxonomy)
            .map(Arc::new)
            .ok_or_else(|| Error::InvalidTaxonomy(format!("unknown taxonomy `{}`", self.taxonomy)))
    }

    /// Read scene `i`, detecting its format from the file.
    pub fn load_scene(&self, i: usize, taxonomy: Arc<ClassTaxonomy>) -> Result<LabeledPointCloud> {
        let path = &self.entries[i].path;
        read_point_file(path, FileFormat::detect(path)?, taxonomy)
    }

    /// Manifest text with entry paths written relative to `base` when they
    /// lie beneath it.
    pub fn to_text(&self, base: &Path) -> String {
        let mut s = format!("role={} taxonomy={}\n", self.role, self.taxonomy);
        for e in &self.entries {
            let rel = e.path.strip_prefix(base).unwrap_or(&e.path);
            s.push_str(&format!("{}\t{}\n", e.id, rel.display()));
        }
        s
    }

    /// Parse manifest text, resolving relative paths against `base`. Paths
    /// are not checked.
    pub fn parse(text: &str, base: &Path, source_name: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (role, taxonomy) = loop {
            let Some((k, line)) = lines.next() else {
                return Err(parse_error(source_name, ParseLocation::Line(1), "missing header line"));
            };
            if !line.trim().is_empty() {
                break parse_header(line, source_name, k + 1)?;
            }
        };
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (k, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let Some((id, rel)) = line.split_once('\t') else {
                return Err(parse_error(source_name, ParseLocation::Line(k + 1), "expected `scene_id<TAB>path`"));
            };
            let (id, rel) = (id.trim(), rel.trim());
            if id.is_empty() || rel.is_empty() {
                return Err(parse_error(source_name, ParseLocation::Line(k + 1), "empty scene id or path"));
            }
            if !seen.insert(id.to_string()) {
                return Err(Error::DuplicateScene(id.to_string()));
            }
            entries.push(ManifestEntry {
                id: id.to_string(),
                path: base.join(rel),
            });
        }
        Ok(Self { role, taxonomy, entries })
    }
}

fn parse_header(line: &str, source: &str, line_no: usize) -> Result<(DomainRole, String)> {
    let err = |msg: String| parse_error(source, ParseLocation::Line(line_no), msg);
    let mut role = None;
    let mut taxonomy = None;
    for word in line.split_whitespace() {
        match word.split_once('=') {
            Some(("role", v)) => role = Some(v.parse::<DomainRole>().map_err(|_| err(format!("bad role `{v}`")))?),
            Some(("taxonomy", v)) if !v.is_empty() => taxonomy = Some(v.to_string()),
            _ => return Err(err(format!("unexpected header field `{word}`"))),
        }
    }
    match (role, taxonomy) {
        (Some(r), Some(t)) => Ok((r, t)),
        _ => Err(err("header must be `role=<source|target> taxonomy=<name>`".into())),
    }
}

/// Read a manifest and check that every entry's file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let manifest = DatasetManifest::parse(&text, base, &path.display().to_string())?;
    if let Some(e) = manifest.entries.iter().find(|e| !e.path.is_file()) {
        return Err(Error::MissingFile {
            id: e.id.clone(),
            path: e.path.clone(),
        });
    }
    Ok(manifest)
}

/// Write a manifest with paths relative to its own directory.
pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    std::fs::write(path, manifest.to_text(base)).map_err(|e| Error::io(path, e))
}

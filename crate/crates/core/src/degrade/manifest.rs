use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{QualityClass, QualityTaxonomy};
use crate::error::{Error, Result};
use crate::imageio::{load_image, Raster};

/// Axis-aligned box as `[x, y, w, h]` in pixels.
pub type BoxXywh = [f64; 4];

/// Task labels carried unchanged through every degradation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<BoxXywh>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub class: QualityClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<BoxXywh>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<u32>,
}

impl ManifestEntry {
    pub fn payload(&self) -> Payload {
        Payload { boxes: self.boxes.clone(), identity: self.identity }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub seed: u64,
    pub taxonomy: QualityTaxonomy,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        self.taxonomy.validate()?;
        let mut seen = HashSet::new();
        for e in &self.entries {
            self.taxonomy.check(e.class)?;
            if !seen.insert(e.path.as_str()) {
                return Err(Error::InvalidManifest(format!("duplicate path {}", e.path)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_json(&text)
    }

    /// Concatenates manifests that share a taxonomy; the first seed is kept.
    pub fn merge(manifests: &[DatasetManifest]) -> Result<DatasetManifest> {
        let first = manifests.first().ok_or(Error::EmptyCorpus)?;
        if manifests.iter().any(|m| m.taxonomy != first.taxonomy) {
            return Err(Error::InvalidManifest("cannot merge manifests with different taxonomies".into()));
        }
        let merged = DatasetManifest {
            seed: first.seed,
            taxonomy: first.taxonomy.clone(),
            entries: manifests.iter().flat_map(|m| m.entries.iter().cloned()).collect(),
        };
        merged.validate()?;
        Ok(merged)
    }
}

/// Resolves an entry path: as written, else relative to the manifest's directory.
pub fn resolve_entry_path(entry: &ManifestEntry, manifest_dir: Option<&Path>) -> PathBuf {
    let p = PathBuf::from(&entry.path);
    if p.is_absolute() || p.exists() {
        return p;
    }
    match manifest_dir {
        Some(dir) => dir.join(p),
        None => p,
    }
}

pub fn load_entry(entry: &ManifestEntry, manifest_dir: Option<&Path>) -> Result<Raster> {
    load_image(resolve_entry_path(entry, manifest_dir))
}

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Analyzer, AnalyzerInput, AnalyzerOutput, IdentityScores};
use crate::degrade::{enumerate_classes, QualityClass, QualityTaxonomy};
use crate::error::{Error, Result};
use crate::eval::{SyntheticAnalyzer, SyntheticAnalyzerProfile};
use crate::imageio::{resize, Filter};
use crate::neuralnet::{load_checkpoint, Network};
use crate::qualitynet::patch_tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Detect,
    Recognize,
}

/// Where a registry entry's analyzer comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnalyzerSource {
    /// Path to a network checkpoint, relative to the registry file.
    Checkpoint(String),
    Synthetic { synthetic_profile: SyntheticAnalyzerProfile },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub class: QualityClass,
    pub checkpoint: AnalyzerSource,
}

/// On-disk registry manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryFile {
    pub task: Task,
    pub models: Vec<ModelEntry>,
}

/// Whole-image recognizer: resizes the image to the network input and returns its
/// class probabilities as identity scores.
#[derive(Clone, Debug)]
pub struct CnnRecognizer {
    pub net: Network,
}

impl Analyzer for CnnRecognizer {
    fn task(&self) -> Task {
        Task::Recognize
    }

    fn run(&self, input: &AnalyzerInput) -> Result<AnalyzerOutput> {
        let img = input.image.ok_or_else(|| Error::IncompleteInputs("CNN recognizer needs image pixels".into()))?;
        let shape = self.net.arch().input;
        if img.channels() != shape.channels {
            return Err(Error::ChannelMismatch(format!(
                "image has {} channels, recognizer expects {}",
                img.channels(),
                shape.channels
            )));
        }
        let resized = resize(img, shape.width, shape.height, Filter::Bilinear)?;
        let probs = self.net.predict(&patch_tensor(&resized))?;
        Ok(AnalyzerOutput::Identities(IdentityScores { scores: probs.into_iter().map(f64::from).collect() }))
    }
}

/// One analyzer per quality class of a taxonomy.
pub struct AnalyzerRegistry {
    task: Task,
    taxonomy: QualityTaxonomy,
    entries: BTreeMap<QualityClass, Box<dyn Analyzer>>,
}

impl fmt::Debug for AnalyzerRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyzerRegistry")
            .field("task", &self.task)
            .field("classes", &self.entries.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl AnalyzerRegistry {
    pub fn new(task: Task, taxonomy: QualityTaxonomy) -> Self {
        Self { task, taxonomy, entries: BTreeMap::new() }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn taxonomy(&self) -> &QualityTaxonomy {
        &self.taxonomy
    }

    pub fn insert(&mut self, class: QualityClass, analyzer: Box<dyn Analyzer>) -> Result<()> {
        self.taxonomy.check(class)?;
        if analyzer.task() != self.task {
            return Err(Error::InvalidManifest(format!("{class} analyzer does not perform {:?}", self.task)));
        }
        if self.entries.insert(class, analyzer).is_some() {
            return Err(Error::InvalidManifest(format!("more than one analyzer for {class}")));
        }
        Ok(())
    }

    pub fn get(&self, class: QualityClass) -> Result<&dyn Analyzer> {
        self.entries.get(&class).map(|a| a.as_ref()).ok_or_else(|| Error::MissingAnalyzer(class.to_string()))
    }

    /// Fails with the first taxonomy class that has no analyzer.
    pub fn check_complete(&self) -> Result<()> {
        match enumerate_classes(&self.taxonomy).into_iter().find(|c| !self.entries.contains_key(c)) {
            Some(c) => Err(Error::MissingAnalyzer(c.to_string())),
            None => Ok(()),
        }
    }

    /// Synthetic analyzers for every class, all built from `base` with their class swapped in.
    pub fn synthetic(task: Task, taxonomy: &QualityTaxonomy, base: &SyntheticAnalyzerProfile) -> Result<Self> {
        let mut reg = Self::new(task, taxonomy.clone());
        for c in enumerate_classes(taxonomy) {
            let profile = SyntheticAnalyzerProfile { model_class: c, ..base.clone() };
            reg.insert(c, Box::new(SyntheticAnalyzer::new(profile, task, taxonomy)?))?;
        }
        Ok(reg)
    }

    /// Builds a complete registry from a manifest; checkpoint paths resolve against `base_dir`.
    pub fn from_file(file: &RegistryFile, taxonomy: &QualityTaxonomy, base_dir: Option<&Path>) -> Result<Self> {
        let mut reg = Self::new(file.task, taxonomy.clone());
        for entry in &file.models {
            let analyzer: Box<dyn Analyzer> = match &entry.checkpoint {
                AnalyzerSource::Synthetic { synthetic_profile } => {
                    let profile = SyntheticAnalyzerProfile { model_class: entry.class, ..synthetic_profile.clone() };
                    Box::new(SyntheticAnalyzer::new(profile, file.task, taxonomy)?)
                }
                AnalyzerSource::Checkpoint(path) => {
                    if file.task != Task::Recognize {
                        return Err(Error::InvalidManifest(format!(
                            "{}: checkpoint analyzers are recognizers; detection needs a synthetic profile",
                            entry.class
                        )));
                    }
                    let p = Path::new(path);
                    let p = match base_dir {
                        Some(dir) if p.is_relative() => dir.join(p),
                        _ => p.to_path_buf(),
                    };
                    Box::new(CnnRecognizer { net: load_checkpoint(p)? })
                }
            };
            reg.insert(entry.class, analyzer)?;
        }
        reg.check_complete()?;
        Ok(reg)
    }

    pub fn load(path: impl AsRef<Path>, taxonomy: &QualityTaxonomy) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let file: RegistryFile = serde_json::from_str(&text)?;
        Self::from_file(&file, taxonomy, path.parent())
    }
}

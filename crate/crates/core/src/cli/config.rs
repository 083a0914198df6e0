use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::degrade::{QualityClass, QualityTaxonomy};
use crate::error::{Error, Result};
use crate::eval::{CrossQualityConfig, MixedExperimentConfig, SimulatedEstimator, SyntheticAnalyzerProfile};
use crate::neuralnet::TrainConfig;
use crate::qualitynet::{ArchProfile, PredictorConfig};
use crate::routing::{RoutingConfig, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_dir: Option<PathBuf>,
    /// Every relative path and every output lives under this directory.
    pub work_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { corpus_dir: None, work_dir: PathBuf::from(".") }
    }
}

/// Settings for the synthetic-analyzer experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub task: Task,
    /// Size of the mixed-quality test set.
    pub items: usize,
    /// Test items per class in the cross-quality matrix.
    pub items_per_class: usize,
    pub image_size: usize,
    pub identities: u32,
    pub profile: SyntheticAnalyzerProfile,
    pub estimator_accuracy: f64,
    pub estimator_decay: f64,
    pub ks: Vec<usize>,
    pub iou_thresh: f64,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let est = SimulatedEstimator::default();
        let exp = MixedExperimentConfig::default();
        Self {
            task: Task::Detect,
            items: 600,
            items_per_class: 200,
            image_size: 128,
            identities: 8,
            profile: SyntheticAnalyzerProfile::default(),
            estimator_accuracy: est.accuracy,
            estimator_decay: est.decay,
            ks: exp.ks,
            iou_thresh: exp.iou_thresh,
            epsilon: exp.epsilon,
            tolerance: exp.tolerance,
        }
    }
}

/// One document governing a run. The top-level `seed` drives every random stream;
/// seeds inside the sections are overwritten by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub taxonomy: QualityTaxonomy,
    pub predictor: PredictorConfig,
    pub train: TrainConfig,
    pub arch: ArchProfile,
    /// Random crops drawn from each training image per epoch.
    pub crops_per_image: usize,
    pub routing: RoutingConfig,
    pub simulation: SimulationConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            taxonomy: QualityTaxonomy::default(),
            predictor: PredictorConfig::default(),
            train: TrainConfig::default(),
            arch: ArchProfile::default(),
            crops_per_image: 2,
            routing: RoutingConfig::default(),
            simulation: SimulationConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs: Vec<String> = self.taxonomy.validation_errors().into_iter().map(|e| format!("taxonomy: {e}")).collect();
        let classes = errs.is_empty().then(|| self.taxonomy.class_count());
        errs.extend(self.predictor.validation_errors().into_iter().map(|e| format!("predictor: {e}")));
        errs.extend(self.train.validation_errors().into_iter().map(|e| format!("train: {e}")));
        errs.extend(self.routing.validation_errors(classes));
        if self.crops_per_image == 0 {
            errs.push("crops_per_image must be positive".into());
        }
        let sim = &self.simulation;
        if errs.iter().all(|e| !e.starts_with("taxonomy")) {
            let probe = SyntheticAnalyzerProfile { model_class: QualityClass::G, ..sim.profile.clone() };
            errs.extend(probe.validation_errors(&self.taxonomy).into_iter().map(|e| format!("simulation.profile: {e}")));
        }
        if sim.items == 0 {
            errs.push("simulation.items must be positive".into());
        }
        if sim.items_per_class == 0 {
            errs.push("simulation.items_per_class must be positive".into());
        }
        if sim.image_size < 16 {
            errs.push(format!("simulation.image_size must be at least 16, got {}", sim.image_size));
        }
        if sim.identities as usize != sim.profile.identities {
            errs.push(format!(
                "simulation.identities ({}) must equal simulation.profile.identities ({})",
                sim.identities, sim.profile.identities
            ));
        }
        if !(0.0..=1.0).contains(&sim.estimator_accuracy) {
            errs.push(format!("simulation.estimator_accuracy must be in [0, 1], got {}", sim.estimator_accuracy));
        }
        if !(sim.estimator_decay > 0.0 && sim.estimator_decay < 1.0) {
            errs.push(format!("simulation.estimator_decay must be in (0, 1), got {}", sim.estimator_decay));
        }
        if sim.ks.is_empty() {
            errs.push("simulation.ks must not be empty".into());
        }
        for &k in &sim.ks {
            if k == 0 || classes.is_some_and(|c| k > c) {
                errs.push(format!("simulation.ks entry {k} outside 1..=number of classes"));
            }
        }
        if !(sim.iou_thresh > 0.0 && sim.iou_thresh < 1.0) {
            errs.push(format!("simulation.iou_thresh must be in (0, 1), got {}", sim.iou_thresh));
        }
        if let Some(dir) = &self.paths.corpus_dir {
            if !dir.is_dir() {
                errs.push(format!("paths.corpus_dir {} does not exist", dir.display()));
            }
        }
        if !self.paths.work_dir.is_dir() {
            errs.push(format!("paths.work_dir {} does not exist", self.paths.work_dir.display()));
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::ValidationErrors(errs))
        }
    }

    /// Copies the top-level seed into every section.
    pub fn seeded(mut self) -> Self {
        self.train.seed = self.seed;
        self.predictor.seed = self.seed;
        self.simulation.profile.seed = self.seed;
        self
    }

    pub fn estimator(&self) -> SimulatedEstimator {
        SimulatedEstimator {
            taxonomy: self.taxonomy.clone(),
            accuracy: self.simulation.estimator_accuracy,
            decay: self.simulation.estimator_decay,
            seed: self.seed,
        }
    }

    pub fn experiment(&self, ks: Vec<usize>) -> MixedExperimentConfig {
        let sim = &self.simulation;
        MixedExperimentConfig {
            ks,
            routing: self.routing.clone(),
            iou_thresh: sim.iou_thresh,
            epsilon: sim.epsilon,
            tolerance: sim.tolerance,
            seed: self.seed,
        }
    }

    pub fn cross_quality(&self) -> CrossQualityConfig {
        let sim = &self.simulation;
        CrossQualityConfig {
            taxonomy: self.taxonomy.clone(),
            task: sim.task,
            profile: SyntheticAnalyzerProfile { seed: self.seed, ..sim.profile.clone() },
            items_per_class: sim.items_per_class,
            image_size: sim.image_size,
            iou_thresh: sim.iou_thresh,
            seed: self.seed,
        }
    }
}

/// Parses and validates a config file. Relative paths inside it resolve against
/// `base` (the work directory when one is set).
pub fn parse_config_in(path: impl AsRef<Path>, base: Option<&Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::ValidationErrors(vec![e.to_string()]))?;
    if let Some(base) = base {
        if cfg.paths.work_dir.is_relative() {
            cfg.paths.work_dir = base.join(&cfg.paths.work_dir);
        }
        if let Some(dir) = cfg.paths.corpus_dir.as_mut().filter(|d| d.is_relative()) {
            *dir = base.join(&*dir);
        }
    }
    cfg.validate()?;
    Ok(cfg.seeded())
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    parse_config_in(path, None)
}

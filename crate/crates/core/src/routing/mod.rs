//! Quality-aware model routing: pick the analyzers whose quality classes carry the
//! most predicted mass, run them, and merge what they return.

mod registry;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use registry::{
    AnalyzerRegistry, AnalyzerSource, CnnRecognizer, ModelEntry, RegistryFile, Task,
};

use crate::degrade::{BoxXywh, Payload, QualityClass, QualityTaxonomy};
use crate::error::{Error, Result};
use crate::imageio::Raster;
use crate::qualitynet::{predict_quality, FusedQualityVector, QualityPredictor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoxXywh,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BoxXywh, score: f64) -> Self {
        Self { bbox, score }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityScores {
    pub scores: Vec<f64>,
}

impl IdentityScores {
    /// Highest-scoring identity; ties go to the lower index.
    pub fn top(&self) -> usize {
        crate::neuralnet::argmax(&self.scores)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzerOutput {
    Detections(Vec<Detection>),
    Identities(IdentityScores),
}

/// What an analyzer gets to see about one test item.
#[derive(Clone, Copy, Debug)]
pub struct AnalyzerInput<'a> {
    /// Pixels, when available. Simulated analyzers only need the dimensions.
    pub image: Option<&'a Raster>,
    pub width: usize,
    pub height: usize,
    /// Ground truth, for simulated analyzers and scoring.
    pub truth: Option<&'a Payload>,
    pub true_class: Option<QualityClass>,
    /// Stable per-item key for seeded draws.
    pub key: u64,
}

impl<'a> AnalyzerInput<'a> {
    pub fn from_image(image: &'a Raster, key: u64) -> Self {
        Self { image: Some(image), width: image.width(), height: image.height(), truth: None, true_class: None, key }
    }
}

/// A detector or recognizer specialised to one quality class.
pub trait Analyzer: Send + Sync {
    fn task(&self) -> Task;
    fn run(&self, input: &AnalyzerInput) -> Result<AnalyzerOutput>;
}

/// Anything that yields a fused quality vector for an input.
pub trait QualityEstimator: Sync {
    fn estimate(&self, input: &AnalyzerInput) -> Result<FusedQualityVector>;
}

impl QualityEstimator for QualityPredictor {
    fn estimate(&self, input: &AnalyzerInput) -> Result<FusedQualityVector> {
        let img = input
            .image
            .ok_or_else(|| Error::IncompleteInputs("the trained predictor needs image pixels".into()))?;
        Ok(predict_quality(self, img, &self.config)?.fused)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingConfig {
    pub k: usize,
    pub nms_iou: f64,
    /// Multiply detection scores by their model's routing weight before NMS.
    pub weighted_scores: bool,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self { k: 3, nms_iou: 0.5, weighted_scores: false }
    }
}

impl RoutingConfig {
    pub fn validation_errors(&self, classes: Option<usize>) -> Vec<String> {
        let mut errs = Vec::new();
        if self.k == 0 || classes.is_some_and(|c| self.k > c) {
            errs.push(format!("routing.k must be in 1..={}, got {}", classes.map_or("classes".into(), |c| c.to_string()), self.k));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            errs.push(format!("routing.nms_iou must be in (0, 1), got {}", self.nms_iou));
        }
        errs
    }
}

/// The `k` most probable classes with their probabilities rescaled to sum to 1.
/// Zero-probability classes are never selected.
pub fn select_top_k(p: &FusedQualityVector, k: usize, tax: &QualityTaxonomy) -> Result<Vec<(QualityClass, f64)>> {
    let classes = tax.class_count();
    if k == 0 || k > classes {
        return Err(Error::InvalidK { k, classes });
    }
    if p.probs.len() != classes {
        return Err(Error::DimensionMismatch(format!("{} probabilities for {classes} classes", p.probs.len())));
    }
    let mut order: Vec<usize> = (0..classes).collect();
    // stable sort keeps lower canonical index first on ties
    order.sort_by(|&a, &b| p.probs[b].total_cmp(&p.probs[a]));
    let picked: Vec<usize> = order.into_iter().take(k).filter(|&i| p.probs[i] > 0.0).collect();
    let total: f64 = picked.iter().map(|&i| p.probs[i]).sum();
    picked.into_iter().map(|i| Ok((tax.class_at(i)?, p.probs[i] / total))).collect()
}

pub fn iou(a: &BoxXywh, b: &BoxXywh) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Greedy non-maximum suppression. Equal scores keep input order; the result is
/// sorted by descending score.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        if kept.iter().all(|k| iou(&k.bbox, &dets[i].bbox) <= iou_thresh) {
            kept.push(dets[i]);
        }
    }
    kept
}

fn canonical_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.bbox.iter().zip(&b.bbox).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal))
}

/// Pools every model's detections and suppresses duplicates. The pool is put in a
/// canonical order first, so the listing order of models does not matter.
pub fn fuse_detections(per_model: &[(f64, Vec<Detection>)], cfg: &RoutingConfig) -> Vec<Detection> {
    let mut pool: Vec<Detection> = per_model
        .iter()
        .flat_map(|(w, dets)| {
            dets.iter().map(move |d| if cfg.weighted_scores { Detection::new(d.bbox, d.score * w) } else { *d })
        })
        .collect();
    pool.sort_by(canonical_order);
    nms(&pool, cfg.nms_iou)
}

/// Weighted sum of identity score vectors.
pub fn fuse_recognition(per_model: &[(f64, IdentityScores)]) -> Result<IdentityScores> {
    let (_, first) = per_model.first().ok_or_else(|| Error::BadWeights("no models to fuse".into()))?;
    let dim = first.scores.len();
    if let Some((_, s)) = per_model.iter().find(|(_, s)| s.scores.len() != dim) {
        return Err(Error::DimensionMismatch(format!("identity vectors of length {dim} and {}", s.scores.len())));
    }
    if per_model.iter().any(|(w, _)| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::BadWeights("weights must be finite and nonnegative".into()));
    }
    let total: f64 = per_model.iter().map(|(w, _)| w).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::BadWeights(format!("weights sum to {total}, expected 1")));
    }
    let mut scores = vec![0.0; dim];
    for (w, s) in per_model {
        for (acc, v) in scores.iter_mut().zip(&s.scores) {
            *acc += w * v;
        }
    }
    Ok(IdentityScores { scores })
}

/// Runs the analyzers for `selected` and merges their outputs. Selected classes are
/// processed in canonical order so floating-point sums are reproducible.
pub fn route(
    reg: &AnalyzerRegistry,
    selected: &[(QualityClass, f64)],
    input: &AnalyzerInput,
    cfg: &RoutingConfig,
) -> Result<AnalyzerOutput> {
    let mut selected = selected.to_vec();
    selected.sort_by_key(|(c, _)| reg.taxonomy().index_of(*c).unwrap_or(usize::MAX));
    let mut outputs = Vec::with_capacity(selected.len());
    for (c, w) in &selected {
        outputs.push((*w, reg.get(*c)?.run(input)?));
    }
    match reg.task() {
        Task::Detect => {
            let per_model = outputs
                .into_iter()
                .map(|(w, o)| match o {
                    AnalyzerOutput::Detections(d) => Ok((w, d)),
                    AnalyzerOutput::Identities(_) => Err(Error::DimensionMismatch("detector returned identities".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AnalyzerOutput::Detections(fuse_detections(&per_model, cfg)))
        }
        Task::Recognize => {
            let per_model = outputs
                .into_iter()
                .map(|(w, o)| match o {
                    AnalyzerOutput::Identities(s) => Ok((w, s)),
                    AnalyzerOutput::Detections(_) => Err(Error::DimensionMismatch("recognizer returned boxes".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AnalyzerOutput::Identities(fuse_recognition(&per_model)?))
        }
    }
}

/// Estimates quality, selects the top-K analyzers and fuses their outputs.
pub fn analyze(
    reg: &AnalyzerRegistry,
    estimator: &dyn QualityEstimator,
    input: &AnalyzerInput,
    cfg: &RoutingConfig,
) -> Result<AnalyzerOutput> {
    let fused = estimator.estimate(input)?;
    let selected = select_top_k(&fused, cfg.k, reg.taxonomy())?;
    route(reg, &selected, input, cfg)
}

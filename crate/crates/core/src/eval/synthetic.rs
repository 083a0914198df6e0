use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::degrade::{enumerate_classes, BoxXywh, QualityClass, QualityTaxonomy};
use crate::error::{Error, Result};
use crate::qualitynet::{level_distance, FusedQualityVector};
use crate::routing::{Analyzer, AnalyzerInput, AnalyzerOutput, Detection, IdentityScores, QualityEstimator, Task};
use crate::seed;

/// `clamp(intercept + slope * d, min, max)`; missing bounds are open.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearCurve {
    pub intercept: f64,
    pub slope: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl LinearCurve {
    pub fn new(intercept: f64, slope: f64, min: Option<f64>, max: Option<f64>) -> Self {
        Self { intercept, slope, min, max }
    }

    pub fn constant(v: f64) -> Self {
        Self::new(v, 0.0, None, None)
    }

    pub fn at(&self, d: f64) -> f64 {
        let v = self.intercept + self.slope * d;
        let v = self.min.map_or(v, |m| v.max(m));
        self.max.map_or(v, |m| v.min(m))
    }
}

/// Statistical stand-in for an analyzer trained on `model_class` images. Performance
/// depends only on the quality distance between the model class and the input class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticAnalyzerProfile {
    pub model_class: QualityClass,
    /// Probability of finding the true box or identity.
    pub hit_rate: LinearCurve,
    /// Box jitter in pixels.
    pub localization_noise_sigma: LinearCurve,
    /// Expected spurious boxes per image.
    pub false_positive_rate: LinearCurve,
    /// Centre of the score band for true hits; spurious boxes score below 0.5.
    pub hit_score: LinearCurve,
    /// Length of emitted identity score vectors.
    pub identities: usize,
    pub seed: u64,
}

impl Default for SyntheticAnalyzerProfile {
    fn default() -> Self {
        Self {
            model_class: QualityClass::G,
            hit_rate: LinearCurve::new(0.97, -0.08, Some(0.2), Some(1.0)),
            localization_noise_sigma: LinearCurve::new(1.0, 1.0, Some(0.0), None),
            false_positive_rate: LinearCurve::new(0.05, 0.05, Some(0.0), None),
            hit_score: LinearCurve::new(0.9, -0.05, Some(0.55), Some(0.95)),
            identities: 8,
            seed: 0,
        }
    }
}

impl SyntheticAnalyzerProfile {
    pub fn validation_errors(&self, tax: &QualityTaxonomy) -> Vec<String> {
        let mut errs = Vec::new();
        if !tax.contains(self.model_class) {
            errs.push(format!("profile class {} not in taxonomy", self.model_class));
        }
        if self.hit_rate.slope > 0.0 {
            errs.push("hit_rate must not increase with quality distance".into());
        }
        let dmax = tax.max_distance();
        for d in 0..=dmax {
            let d = d as f64;
            let h = self.hit_rate.at(d);
            if !(0.0..=1.0).contains(&h) {
                errs.push(format!("hit_rate({d}) = {h} outside [0, 1]"));
                break;
            }
            if !(self.localization_noise_sigma.at(d) >= 0.0 && self.localization_noise_sigma.at(d).is_finite()) {
                errs.push(format!("localization_noise_sigma({d}) must be finite and nonnegative"));
                break;
            }
            if !(0.5..=1.0).contains(&self.hit_score.at(d)) {
                errs.push(format!("hit_score({d}) outside [0.5, 1]"));
                break;
            }
            if !(self.false_positive_rate.at(d) >= 0.0 && self.false_positive_rate.at(d).is_finite()) {
                errs.push(format!("false_positive_rate({d}) must be finite and nonnegative"));
                break;
            }
        }
        if self.identities < 2 {
            errs.push(format!("identities must be at least 2, got {}", self.identities));
        }
        errs
    }

    pub fn validate(&self, tax: &QualityTaxonomy) -> Result<()> {
        let errs = self.validation_errors(tax);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::ValidationErrors(errs))
        }
    }
}

/// Level difference within a family; `d_max` across families or between G and a
/// degraded class.
pub fn quality_distance(model: QualityClass, test: QualityClass, tax: &QualityTaxonomy) -> usize {
    match (model, test) {
        (QualityClass::G, QualityClass::G) => 0,
        (QualityClass::BJ(a), QualityClass::BJ(b)) | (QualityClass::BL(a), QualityClass::BL(b)) => a.abs_diff(b),
        _ => tax.max_distance(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Rates {
    hit: f64,
    sigma: f64,
    fp: f64,
    score: f64,
    /// Score boost of the peaked identity.
    margin: f64,
}

/// Simulated analyzer. A pooled analyzer stands for one model trained on every quality
/// class at once: its rates are averages over all class-specific models.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticAnalyzer {
    profile: SyntheticAnalyzerProfile,
    task: Task,
    taxonomy: QualityTaxonomy,
    pooled: bool,
}

impl SyntheticAnalyzer {
    pub fn new(profile: SyntheticAnalyzerProfile, task: Task, tax: &QualityTaxonomy) -> Result<Self> {
        profile.validate(tax)?;
        Ok(Self { profile, task, taxonomy: tax.clone(), pooled: false })
    }

    pub fn pooled(profile: SyntheticAnalyzerProfile, task: Task, tax: &QualityTaxonomy) -> Result<Self> {
        Ok(Self { pooled: true, ..Self::new(profile, task, tax)? })
    }

    pub fn profile(&self) -> &SyntheticAnalyzerProfile {
        &self.profile
    }

    fn rates_at(&self, d: usize) -> Rates {
        let p = &self.profile;
        let d = d as f64;
        Rates {
            hit: p.hit_rate.at(d),
            sigma: p.localization_noise_sigma.at(d),
            fp: p.false_positive_rate.at(d),
            score: p.hit_score.at(d),
            margin: 0.5 + 0.5 / (1.0 + d),
        }
    }

    fn rates(&self, test: QualityClass) -> Rates {
        if !self.pooled {
            return self.rates_at(quality_distance(self.profile.model_class, test, &self.taxonomy));
        }
        let classes = enumerate_classes(&self.taxonomy);
        let all: Vec<Rates> =
            classes.iter().map(|&m| self.rates_at(quality_distance(m, test, &self.taxonomy))).collect();
        let mean = |f: fn(&Rates) -> f64| all.iter().map(f).sum::<f64>() / all.len() as f64;
        Rates { hit: mean(|r| r.hit), sigma: mean(|r| r.sigma), fp: mean(|r| r.fp), score: mean(|r| r.score), margin: mean(|r| r.margin) }
    }

    fn stream(&self, key: u64) -> ChaCha8Rng {
        let tag = if self.pooled { "pooled".to_string() } else { self.profile.model_class.tag() };
        seed::rng(self.profile.seed, &[seed::hash_str(&tag), key])
    }
}

impl Analyzer for SyntheticAnalyzer {
    fn task(&self) -> Task {
        self.task
    }

    fn run(&self, input: &AnalyzerInput) -> Result<AnalyzerOutput> {
        simulate_analyzer(self, input)
    }
}

/// Snaps `b` to whole pixels inside the image, at least one pixel wide and tall.
fn clamp_box(b: BoxXywh, width: usize, height: usize) -> BoxXywh {
    let (w, h) = (width as f64, height as f64);
    let x0 = b[0].round().clamp(0.0, w - 1.0);
    let y0 = b[1].round().clamp(0.0, h - 1.0);
    let x1 = (b[0] + b[2]).round().clamp(x0 + 1.0, w);
    let y1 = (b[1] + b[3]).round().clamp(y0 + 1.0, h);
    [x0, y0, x1 - x0, y1 - y0]
}

fn jitter(b: BoxXywh, sigma: f64, rng: &mut ChaCha8Rng) -> BoxXywh {
    let n = Normal::new(0.0, sigma).expect("sigma validated");
    [b[0] + n.sample(rng), b[1] + n.sample(rng), b[2] + n.sample(rng), b[3] + n.sample(rng)]
}

/// One seeded draw of `analyzer` on `input`; identical inputs give identical outputs.
pub fn simulate_analyzer(analyzer: &SyntheticAnalyzer, input: &AnalyzerInput) -> Result<AnalyzerOutput> {
    let class = input.true_class.ok_or_else(|| Error::MissingGroundTruth("quality class".into()))?;
    let truth = input.truth.ok_or_else(|| Error::MissingGroundTruth("payload".into()))?;
    let rates = analyzer.rates(class);
    let mut rng = analyzer.stream(input.key);
    match analyzer.task {
        Task::Detect => {
            if input.width < 2 || input.height < 2 {
                return Err(Error::IncompleteInputs(format!("image size {}x{}", input.width, input.height)));
            }
            let boxes = truth.boxes.as_ref().ok_or_else(|| Error::MissingGroundTruth("boxes".into()))?;
            let mut dets = Vec::new();
            for b in boxes {
                if rng.random_bool(rates.hit) {
                    let score = (rates.score + rng.random_range(-0.05..0.05)).clamp(0.5, 1.0);
                    let bbox = if rates.sigma == 0.0 { *b } else { clamp_box(jitter(*b, rates.sigma, &mut rng), input.width, input.height) };
                    dets.push(Detection::new(bbox, score));
                }
            }
            let spurious = if rates.fp > 0.0 { Poisson::new(rates.fp).expect("rate validated").sample(&mut rng) as usize } else { 0 };
            let (w, h) = (input.width as f64, input.height as f64);
            for _ in 0..spurious {
                let bw = rng.random_range(0.1..0.35) * w;
                let bh = rng.random_range(0.1..0.35) * h;
                let b = [rng.random_range(0.0..w - bw), rng.random_range(0.0..h - bh), bw, bh];
                dets.push(Detection::new(clamp_box(b, input.width, input.height), rng.random_range(0.0..0.5)));
            }
            Ok(AnalyzerOutput::Detections(dets))
        }
        Task::Recognize => {
            let k = analyzer.profile.identities;
            let id = truth.identity.ok_or_else(|| Error::MissingGroundTruth("identity".into()))? as usize;
            if id >= k {
                return Err(Error::DimensionMismatch(format!("identity {id} for {k} identity scores")));
            }
            let mut scores: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..0.5)).collect();
            let peak = if rng.random_bool(rates.hit) {
                id
            } else {
                (id + rng.random_range(1..k)) % k
            };
            scores[peak] += rates.margin;
            Ok(AnalyzerOutput::Identities(IdentityScores { scores }))
        }
    }
}

/// Stand-in for the trained predictor: a seeded quality vector peaked on the true class
/// (or, with probability `1 - accuracy`, on a neighbour of it) whose mass falls off by
/// `decay` per level away from the peak. Across families the levels add up through G.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatedEstimator {
    pub taxonomy: QualityTaxonomy,
    pub accuracy: f64,
    pub decay: f64,
    pub seed: u64,
}

impl Default for SimulatedEstimator {
    fn default() -> Self {
        Self { taxonomy: QualityTaxonomy::default(), accuracy: 0.9, decay: 0.35, seed: 0 }
    }
}

fn ladder_gap(a: QualityClass, b: QualityClass) -> usize {
    level_distance(a, b).unwrap_or_else(|| a.level().unwrap_or(0) + b.level().unwrap_or(0))
}

impl QualityEstimator for SimulatedEstimator {
    fn estimate(&self, input: &AnalyzerInput) -> Result<FusedQualityVector> {
        let truth = input.true_class.ok_or_else(|| Error::MissingGroundTruth("quality class".into()))?;
        let tax = &self.taxonomy;
        tax.check(truth)?;
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::ValidationErrors(vec![format!("estimator decay must be in (0, 1), got {}", self.decay)]));
        }
        let classes = enumerate_classes(tax);
        let mut rng = seed::rng(self.seed, &[seed::hash_str("estimator"), input.key]);
        let peak = if rng.random_bool(self.accuracy.clamp(0.0, 1.0)) {
            truth
        } else {
            let near: Vec<QualityClass> = classes.iter().copied().filter(|&c| ladder_gap(truth, c) == 1).collect();
            near[rng.random_range(0..near.len())]
        };
        let weights: Vec<f64> = classes.iter().map(|&c| self.decay.powi(ladder_gap(peak, c) as i32)).collect();
        let total: f64 = weights.iter().sum();
        Ok(FusedQualityVector { probs: weights.into_iter().map(|w| w / total).collect() })
    }
}

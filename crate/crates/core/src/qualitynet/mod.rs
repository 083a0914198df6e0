//! Hierarchical quality prediction: a type network over {G, BJ, BL}, one level
//! network per degraded family, and their fusion into a single class distribution.

mod bundle;
mod training;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bundle::{load_predictor, save_predictor, write_predictor_file, PredictorFile, PREDICTOR_FILE};
pub use training::{
    crop_dataset, head_label, head_samples, init_head_network, train_predictor, train_quality_net, ArchProfile,
    PredictorHistory, QualityHead,
};

use crate::degrade::{QualityClass, QualityKind, QualityTaxonomy};
use crate::error::{Error, Result};
use crate::imageio::Raster;
use crate::neuralnet::{forward, Network};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub patch_size: usize,
    pub patches_per_image: usize,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self { patch_size: 32, patches_per_image: 8, seed: 0 }
    }
}

impl PredictorConfig {
    pub fn full_scale() -> Self {
        Self { patch_size: 157, ..Self::default() }
    }

    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.patch_size < 8 {
            errs.push(format!("patch_size must be at least 8, got {}", self.patch_size));
        }
        if self.patches_per_image == 0 {
            errs.push("patches_per_image must be positive".into());
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
}

fn check_patchable(r: &Raster, patch: usize) -> Result<()> {
    if r.width().min(r.height()) < patch {
        return Err(Error::ImageTooSmall { width: r.width(), height: r.height(), patch });
    }
    Ok(())
}

/// Top-left corners of `count` uniformly placed `patch`-sized windows.
pub(crate) fn patch_positions(
    width: usize,
    height: usize,
    patch: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<(usize, usize)> {
    (0..count).map(|_| (rng.random_range(0..=width - patch), rng.random_range(0..=height - patch))).collect()
}

/// `cfg.patches_per_image` square crops at seeded uniform positions.
pub fn sample_patches(r: &Raster, cfg: &PredictorConfig) -> Result<Vec<Raster>> {
    cfg.validate()?;
    check_patchable(r, cfg.patch_size)?;
    let mut rng = seed::rng(cfg.seed, &[seed::hash_str("patches"), r.width() as u64, r.height() as u64]);
    patch_positions(r.width(), r.height(), cfg.patch_size, cfg.patches_per_image, &mut rng)
        .into_iter()
        .map(|(x, y)| r.crop(x, y, cfg.patch_size, cfg.patch_size))
        .collect()
}

/// Channels-first network input: each pixel minus the mean of its 3×3
/// neighbourhood (clamped at the patch border), divided by 16. Degradations show
/// up as changes in this local residual far more than in absolute intensity.
pub fn patch_tensor(r: &Raster) -> Vec<f32> {
    let (w, h, c) = (r.width(), r.height(), r.channels());
    let px = r.pixels();
    let at = |x: usize, y: usize, ch: usize| px[(y * w + x) * c + ch] as f32;
    let mut out = vec![0.0f32; w * h * c];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0.0;
                for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        sum += at(xx, yy, ch);
                    }
                }
                let n = ((y + 1).min(h - 1) - y.saturating_sub(1) + 1) * ((x + 1).min(w - 1) - x.saturating_sub(1) + 1);
                out[ch * w * h + y * w + x] = (at(x, y, ch) - sum / n as f32) / 16.0;
            }
        }
    }
    out
}

/// Column means of `rows`. Each column is summed in sorted order, so the result
/// does not depend on row order.
pub fn mean_rows(rows: &[Vec<f32>]) -> Vec<f64> {
    let k = rows.first().map_or(0, Vec::len);
    (0..k)
        .map(|j| {
            let mut col: Vec<f64> = rows.iter().map(|r| r[j] as f64).collect();
            col.sort_by(f64::total_cmp);
            col.iter().sum::<f64>() / rows.len() as f64
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeScores {
    pub p_g: f64,
    pub p_bj: f64,
    pub p_bl: f64,
}

impl TypeScores {
    pub fn new(p_g: f64, p_bj: f64, p_bl: f64) -> Self {
        Self { p_g, p_bj, p_bl }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.p_g, self.p_bj, self.p_bl]
    }

    /// Most likely family; ties go to the earlier of G, BJ, BL.
    pub fn argmax(self) -> QualityKind {
        QualityKind::ALL[crate::neuralnet::argmax(&self.to_array())]
    }
}

/// Level-network output: index 0 is the pristine class, `1..` the severity levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelScores {
    pub family: QualityKind,
    pub probs: Vec<f64>,
}

impl LevelScores {
    /// Severity probabilities rescaled to sum to 1, dropping the pristine entry.
    /// Falls back to uniform when all mass sits on the pristine entry.
    pub fn severity(&self) -> Vec<f64> {
        let sev = &self.probs[1.min(self.probs.len())..];
        let total: f64 = sev.iter().sum();
        if total > 0.0 && total.is_finite() {
            sev.iter().map(|p| p / total).collect()
        } else {
            vec![1.0 / sev.len() as f64; sev.len()]
        }
    }
}

/// Probabilities over every quality class, in canonical class order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedQualityVector {
    pub probs: Vec<f64>,
}

impl FusedQualityVector {
    /// Index of the largest entry; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        crate::neuralnet::argmax(&self.probs)
    }

    pub fn argmax_class(&self, tax: &QualityTaxonomy) -> Result<QualityClass> {
        tax.class_at(self.argmax())
    }
}

/// `[p_G, p_BJ · sev_BJ(1..m), p_BL · sev_BL(1..n)]`.
pub fn fuse_quality(t: &TypeScores, lj: &LevelScores, ll: &LevelScores) -> Result<FusedQualityVector> {
    if lj.family != QualityKind::BJ || ll.family != QualityKind::BL {
        return Err(Error::InvalidClass(format!("level scores must be BJ then BL, got {:?} and {:?}", lj.family, ll.family)));
    }
    if lj.probs.len() < 2 || ll.probs.len() < 2 {
        return Err(Error::DimensionMismatch("level scores need a pristine entry and at least one level".into()));
    }
    let mut probs = Vec::with_capacity(lj.probs.len() + ll.probs.len() - 1);
    probs.push(t.p_g);
    probs.extend(lj.severity().into_iter().map(|s| t.p_bj * s));
    probs.extend(ll.severity().into_iter().map(|s| t.p_bl * s));
    Ok(FusedQualityVector { probs })
}

/// The three networks and the configuration they were trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityPredictor {
    pub config: PredictorConfig,
    pub taxonomy: QualityTaxonomy,
    pub type_net: Network,
    pub bj_net: Network,
    pub bl_net: Network,
}

impl QualityPredictor {
    pub fn new(
        config: PredictorConfig,
        taxonomy: QualityTaxonomy,
        type_net: Network,
        bj_net: Network,
        bl_net: Network,
    ) -> Result<Self> {
        config.validate()?;
        taxonomy.validate()?;
        let expected = [(&type_net, 3, "type"), (&bj_net, 1 + taxonomy.m(), "BJ level"), (&bl_net, 1 + taxonomy.n(), "BL level")];
        let channels = type_net.arch().input.channels;
        for (net, classes, name) in expected {
            if net.num_classes() != classes {
                return Err(Error::ShapeMismatch(format!(
                    "{name} network has {} outputs, taxonomy needs {classes}",
                    net.num_classes()
                )));
            }
            let input = net.arch().input;
            if input.height != config.patch_size || input.width != config.patch_size || input.channels != channels {
                return Err(Error::ShapeMismatch(format!(
                    "{name} network input {input:?} does not match {channels}-channel {0}x{0} patches",
                    config.patch_size
                )));
            }
        }
        Ok(Self { config, taxonomy, type_net, bj_net, bl_net })
    }

    pub fn channels(&self) -> usize {
        self.type_net.arch().input.channels
    }

    fn level_net(&self, family: QualityKind) -> Result<&Network> {
        match family {
            QualityKind::BJ => Ok(&self.bj_net),
            QualityKind::BL => Ok(&self.bl_net),
            QualityKind::G => Err(Error::InvalidClass("G has no level network".into())),
        }
    }
}

fn patch_inputs(nets: &QualityPredictor, r: &Raster, cfg: &PredictorConfig) -> Result<Vec<Vec<f32>>> {
    if r.channels() != nets.channels() {
        return Err(Error::ChannelMismatch(format!(
            "image has {} channels, predictor expects {}",
            r.channels(),
            nets.channels()
        )));
    }
    if cfg.patch_size != nets.config.patch_size {
        return Err(Error::ShapeMismatch(format!(
            "patch size {} differs from the trained {}",
            cfg.patch_size, nets.config.patch_size
        )));
    }
    Ok(sample_patches(r, cfg)?.iter().map(patch_tensor).collect())
}

fn mean_prediction(net: &Network, patches: &[Vec<f32>]) -> Result<Vec<f64>> {
    Ok(mean_rows(&forward(net, patches)?))
}

pub fn predict_type(nets: &QualityPredictor, r: &Raster, cfg: &PredictorConfig) -> Result<TypeScores> {
    let p = mean_prediction(&nets.type_net, &patch_inputs(nets, r, cfg)?)?;
    Ok(TypeScores::new(p[0], p[1], p[2]))
}

pub fn predict_level(
    nets: &QualityPredictor,
    r: &Raster,
    family: QualityKind,
    cfg: &PredictorConfig,
) -> Result<LevelScores> {
    let net = nets.level_net(family)?;
    Ok(LevelScores { family, probs: mean_prediction(net, &patch_inputs(nets, r, cfg)?)? })
}

/// Every intermediate score for one image, plus the fused result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityPrediction {
    pub class: QualityClass,
    pub fused: FusedQualityVector,
    pub type_scores: TypeScores,
    pub bj_levels: LevelScores,
    pub bl_levels: LevelScores,
}

/// Runs all three networks on one shared set of patches and fuses their outputs.
pub fn predict_quality(nets: &QualityPredictor, r: &Raster, cfg: &PredictorConfig) -> Result<QualityPrediction> {
    let patches = patch_inputs(nets, r, cfg)?;
    let t = mean_prediction(&nets.type_net, &patches)?;
    let type_scores = TypeScores::new(t[0], t[1], t[2]);
    let bj_levels = LevelScores { family: QualityKind::BJ, probs: mean_prediction(&nets.bj_net, &patches)? };
    let bl_levels = LevelScores { family: QualityKind::BL, probs: mean_prediction(&nets.bl_net, &patches)? };
    let fused = fuse_quality(&type_scores, &bj_levels, &bl_levels)?;
    let class = fused.argmax_class(&nets.taxonomy)?;
    Ok(QualityPrediction { class, fused, type_scores, bj_levels, bl_levels })
}

pub fn classify_quality(
    nets: &QualityPredictor,
    r: &Raster,
    cfg: &PredictorConfig,
) -> Result<(QualityClass, FusedQualityVector)> {
    let p = predict_quality(nets, r, cfg)?;
    Ok((p.class, p.fused))
}

/// Level distance treating G as level 0 of both families; `None` across families.
pub fn level_distance(a: QualityClass, b: QualityClass) -> Option<usize> {
    match (a, b) {
        (QualityClass::G, QualityClass::G) => Some(0),
        (QualityClass::G, x) | (x, QualityClass::G) => x.level(),
        (x, y) if x.kind() == y.kind() => Some(x.level()?.abs_diff(y.level()?)),
        _ => None,
    }
}

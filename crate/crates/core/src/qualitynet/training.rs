use serde::{Deserialize, Serialize};

use super::{patch_positions, patch_tensor, PredictorConfig, QualityPredictor};
use crate::degrade::{QualityClass, QualityKind, QualityTaxonomy};
use crate::error::{Error, Result};
use crate::imageio::Raster;
use crate::neuralnet::{build_network, train, ArchSpec, EpochStats, LabeledPatch, Network, TrainConfig};
use crate::seed;

/// Which of the three networks a sample is for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QualityHead {
    Type,
    Level(QualityKind),
}

impl QualityHead {
    pub fn classes(self, tax: &QualityTaxonomy) -> usize {
        match self {
            QualityHead::Type => 3,
            QualityHead::Level(QualityKind::BJ) => 1 + tax.m(),
            QualityHead::Level(_) => 1 + tax.n(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QualityHead::Type => "type",
            QualityHead::Level(QualityKind::BJ) => "bj-level",
            QualityHead::Level(_) => "bl-level",
        }
    }

    /// Checkpoint file name inside a predictor bundle.
    pub const fn file_name(self) -> &'static str {
        match self {
            QualityHead::Type => "type.ckpt",
            QualityHead::Level(QualityKind::BJ) => "bj_level.ckpt",
            QualityHead::Level(_) => "bl_level.ckpt",
        }
    }

    pub const ALL: [QualityHead; 3] =
        [QualityHead::Type, QualityHead::Level(QualityKind::BJ), QualityHead::Level(QualityKind::BL)];

    fn key(self) -> u64 {
        match self {
            QualityHead::Type => 0,
            QualityHead::Level(k) => 1 + k.index() as u64,
        }
    }
}

/// Training label of `class` for `head`. Level networks see G as their pristine
/// class 0 and ignore the other family.
pub fn head_label(head: QualityHead, class: QualityClass) -> Option<usize> {
    match head {
        QualityHead::Type => Some(class.kind().index()),
        QualityHead::Level(family) => match class {
            QualityClass::G => Some(0),
            c if c.kind() == family => c.level(),
            _ => None,
        },
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchProfile {
    #[default]
    Desk,
    Full,
}

impl ArchProfile {
    pub fn arch(self, channels: usize, classes: usize) -> ArchSpec {
        match self {
            ArchProfile::Desk => ArchSpec::desk_scale(channels, classes),
            ArchProfile::Full => ArchSpec::full_scale(channels, classes),
        }
    }
}

/// `per_image` random crops from every image, with its label.
pub fn crop_dataset(samples: &[(Raster, usize)], patch: usize, per_image: usize, seed: u64) -> Result<Vec<LabeledPatch>> {
    let mut out = Vec::with_capacity(samples.len() * per_image);
    for (i, (img, label)) in samples.iter().enumerate() {
        if img.width().min(img.height()) < patch {
            return Err(Error::ImageTooSmall { width: img.width(), height: img.height(), patch });
        }
        let mut rng = seed::rng(seed, &[i as u64]);
        for (x, y) in patch_positions(img.width(), img.height(), patch, per_image, &mut rng) {
            out.push(LabeledPatch { data: patch_tensor(&img.crop(x, y, patch, patch)?), label: *label });
        }
    }
    Ok(out)
}

/// Trains `net` for `tcfg.epochs` epochs, drawing fresh crops every epoch. The crop
/// seed depends on the network's running epoch count, so training can be resumed.
pub fn train_quality_net(
    mut net: Network,
    samples: &[(Raster, usize)],
    pcfg: &PredictorConfig,
    tcfg: &TrainConfig,
    crops_per_image: usize,
) -> Result<(Network, Vec<EpochStats>)> {
    tcfg.validate()?;
    pcfg.validate()?;
    if samples.is_empty() && tcfg.epochs > 0 {
        return Err(Error::EmptyDataset);
    }
    let one = TrainConfig { epochs: 1, ..tcfg.clone() };
    let mut history = Vec::with_capacity(tcfg.epochs);
    for _ in 0..tcfg.epochs {
        let crop_seed = seed::derive(tcfg.seed, &[seed::hash_str("crops"), net.epochs_trained()]);
        let data = crop_dataset(samples, pcfg.patch_size, crops_per_image.max(1), crop_seed)?;
        let (next, h) = train(net, &data, &one)?;
        net = next;
        history.extend(h);
    }
    Ok((net, history))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictorHistory {
    pub type_net: Vec<EpochStats>,
    pub bj_net: Vec<EpochStats>,
    pub bl_net: Vec<EpochStats>,
}

/// The images `head` has a label for, keeping at most as many per label as the
/// rarest present label has (earliest images first).
pub fn head_samples(images: &[(Raster, QualityClass)], head: QualityHead, tax: &QualityTaxonomy) -> Vec<(Raster, usize)> {
    balanced_samples(images, head, head.classes(tax))
}

fn balanced_samples(images: &[(Raster, QualityClass)], head: QualityHead, classes: usize) -> Vec<(Raster, usize)> {
    let labeled: Vec<(&Raster, usize)> =
        images.iter().filter_map(|(img, c)| head_label(head, *c).map(|l| (img, l))).collect();
    let mut counts = vec![0usize; classes];
    for (_, l) in &labeled {
        counts[*l] += 1;
    }
    let cap = counts.iter().copied().filter(|&n| n > 0).min().unwrap_or(0);
    let mut taken = vec![0usize; classes];
    labeled
        .into_iter()
        .filter(|(_, l)| {
            taken[*l] += 1;
            taken[*l] <= cap
        })
        .map(|(img, l)| (img.clone(), l))
        .collect()
}

/// Freshly initialised network for `head` on `pcfg.patch_size` patches.
pub fn init_head_network(
    head: QualityHead,
    tax: &QualityTaxonomy,
    channels: usize,
    pcfg: &PredictorConfig,
    profile: ArchProfile,
    seed: u64,
) -> Result<Network> {
    let mut arch = profile.arch(channels, head.classes(tax));
    arch.input.height = pcfg.patch_size;
    arch.input.width = pcfg.patch_size;
    build_network(&arch, seed::derive(seed, &[seed::hash_str("head"), head.key()]))
}

/// Trains all three networks from labeled images. Each network sees the images its
/// head has a label for, balanced across labels.
pub fn train_predictor(
    images: &[(Raster, QualityClass)],
    tax: &QualityTaxonomy,
    pcfg: &PredictorConfig,
    profile: ArchProfile,
    tcfg: &TrainConfig,
    crops_per_image: usize,
) -> Result<(QualityPredictor, PredictorHistory)> {
    tax.validate()?;
    let channels = images.first().ok_or(Error::EmptyDataset)?.0.channels();
    if let Some((img, _)) = images.iter().find(|(img, _)| img.channels() != channels) {
        return Err(Error::ChannelMismatch(format!("mixed {channels}- and {}-channel images", img.channels())));
    }
    let mut nets = Vec::new();
    let mut history = PredictorHistory::default();
    for head in QualityHead::ALL {
        let samples = head_samples(images, head, tax);
        let net = init_head_network(head, tax, channels, pcfg, profile, tcfg.seed)?;
        let (net, h) = train_quality_net(net, &samples, pcfg, tcfg, crops_per_image)?;
        match head {
            QualityHead::Type => history.type_net = h,
            QualityHead::Level(QualityKind::BJ) => history.bj_net = h,
            QualityHead::Level(_) => history.bl_net = h,
        }
        nets.push(net);
    }
    let bl = nets.pop().unwrap();
    let bj = nets.pop().unwrap();
    let ty = nets.pop().unwrap();
    Ok((QualityPredictor::new(pcfg.clone(), tax.clone(), ty, bj, bl)?, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_labels() {
        let bj = QualityHead::Level(QualityKind::BJ);
        assert_eq!(head_label(QualityHead::Type, QualityClass::BL(3)), Some(2));
        assert_eq!(head_label(bj, QualityClass::G), Some(0));
        assert_eq!(head_label(bj, QualityClass::BJ(4)), Some(4));
        assert_eq!(head_label(bj, QualityClass::BL(4)), None);
    }

    #[test]
    fn level_heads_are_balanced() {
        let tax = QualityTaxonomy::desk();
        let img = Raster::filled(8, 8, 1, 0).unwrap();
        let images: Vec<_> = (0..30).map(|i| (img.clone(), crate::corpus::balanced_class(i, &tax))).collect();
        let bj = balanced_samples(&images, QualityHead::Level(QualityKind::BJ), 6);
        assert_eq!(bj.len(), 12);
        assert_eq!(bj.iter().filter(|(_, l)| *l == 0).count(), 2);
        assert_eq!(balanced_samples(&images, QualityHead::Type, 3).len(), 30);
    }

    #[test]
    fn crops_are_seeded() {
        let img = crate::corpus::synthesize(&Default::default(), 0).image;
        let samples = vec![(img, 1)];
        let a = crop_dataset(&samples, 32, 3, 5).unwrap();
        assert_eq!(a, crop_dataset(&samples, 32, 3, 5).unwrap());
        assert_ne!(a, crop_dataset(&samples, 32, 3, 6).unwrap());
        assert!(a.iter().all(|p| p.data.len() == 3 * 32 * 32 && p.label == 1));
    }
}

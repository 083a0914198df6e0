//! The quality taxonomy, degradation ladders, and labeled dataset builders.

mod manifest;
mod taxonomy;

use std::fs;
use std::path::Path;

use rand::Rng;

pub use manifest::{load_entry, resolve_entry_path, BoxXywh, DatasetManifest, ManifestEntry, Payload};
pub use taxonomy::{enumerate_classes, QualityClass, QualityKind, QualityTaxonomy};

use crate::error::{Error, Result};
use crate::imageio::{encode_image, jpeg_decode, jpeg_encode, resize, Filter, ImageFormat, Raster};
use crate::seed;

/// A source image with its task labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub name: String,
    pub image: Raster,
    pub payload: Payload,
}

/// Applies class `c` to `r`. Dimensions and channel count never change.
pub fn degrade(r: &Raster, c: QualityClass, tax: &QualityTaxonomy) -> Result<Raster> {
    Ok(degrade_encoded(r, c, tax)?.0)
}

/// Like [`degrade`], also returning the JPEG stream for `BJ` classes.
fn degrade_encoded(r: &Raster, c: QualityClass, tax: &QualityTaxonomy) -> Result<(Raster, Option<Vec<u8>>)> {
    tax.check(c)?;
    match c {
        QualityClass::G => Ok((r.clone(), None)),
        QualityClass::BJ(level) => {
            let bytes = jpeg_encode(r, tax.jpeg_quality(level)?)?;
            Ok((jpeg_decode(&bytes)?, Some(bytes)))
        }
        QualityClass::BL(level) => {
            let size = tax.downsample_size(level)?;
            let small = resize(r, size, size, Filter::Bilinear)?;
            Ok((resize(&small, r.width(), r.height(), Filter::Bilinear)?, None))
        }
    }
}

/// Degrades `img` to `c` and writes it under `dir`, returning its manifest entry.
/// `BJ` images are stored as the JPEG stream itself; the rest as PGM/PPM.
fn materialize(img: &LabeledImage, c: QualityClass, tax: &QualityTaxonomy, dir: &Path) -> Result<ManifestEntry> {
    let (raster, jpeg) = degrade_encoded(&img.image, c, tax)?;
    let (bytes, ext) = match jpeg {
        Some(b) => (b, "jpg"),
        None => {
            let fmt = ImageFormat::lossless_for(&raster);
            (encode_image(&raster, fmt)?, fmt.extension())
        }
    };
    let path = dir.join(format!("{}_{}.{ext}", img.name, c.tag()));
    fs::write(&path, bytes)?;
    Ok(ManifestEntry {
        path: path.to_string_lossy().into_owned(),
        class: c,
        boxes: img.payload.boxes.clone(),
        identity: img.payload.identity,
    })
}

fn check_corpus(corpus: &[LabeledImage], tax: &QualityTaxonomy) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    tax.validate()
}

/// Every corpus image degraded to `c`, written to `out_dir`.
pub fn build_class_dataset(
    corpus: &[LabeledImage],
    tax: &QualityTaxonomy,
    c: QualityClass,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    check_corpus(corpus, tax)?;
    tax.check(c)?;
    fs::create_dir_all(out_dir.as_ref())?;
    let entries = corpus.iter().map(|img| materialize(img, c, tax, out_dir.as_ref())).collect::<Result<_>>()?;
    Ok(DatasetManifest { seed: 0, taxonomy: tax.clone(), entries })
}

/// One manifest per class, each holding every corpus image degraded to that class.
/// Images land in `out_dir/<class tag>/`.
pub fn build_per_class_datasets(
    corpus: &[LabeledImage],
    tax: &QualityTaxonomy,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<DatasetManifest>> {
    check_corpus(corpus, tax)?;
    enumerate_classes(tax)
        .into_iter()
        .map(|c| build_class_dataset(corpus, tax, c, out_dir.as_ref().join(c.tag())))
        .collect()
}

/// Draws one class per image, uniformly over all 1+m+n classes.
pub fn assign_mixed_classes(count: usize, tax: &QualityTaxonomy, seed: u64) -> Vec<QualityClass> {
    let classes = enumerate_classes(tax);
    let mut rng = seed::rng(seed, &[seed::hash_str("mixed-assignment")]);
    (0..count).map(|_| classes[rng.random_range(0..classes.len())]).collect()
}

/// Degrades each corpus image to one uniformly drawn class and writes it to `out_dir`.
pub fn build_mixed_dataset(
    corpus: &[LabeledImage],
    tax: &QualityTaxonomy,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    check_corpus(corpus, tax)?;
    fs::create_dir_all(out_dir.as_ref())?;
    let classes = assign_mixed_classes(corpus.len(), tax, seed);
    let entries = corpus
        .iter()
        .zip(classes)
        .map(|(img, c)| materialize(img, c, tax, out_dir.as_ref()))
        .collect::<Result<_>>()?;
    Ok(DatasetManifest { seed, taxonomy: tax.clone(), entries })
}

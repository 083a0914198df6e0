//! Baseline sequential JPEG: Annex-K tables scaled by IJG quality, 4:2:0 chroma for color.

mod dct;
mod decoder;
mod encoder;
pub mod tables;

use crate::error::{Error, Result};
use crate::imageio::Raster;

/// An 8×8 quantization table in natural (row-major) order, entries in 1..=255.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantTable([u16; 64]);

impl QuantTable {
    pub fn new(values: [u16; 64]) -> Result<Self> {
        if values.iter().any(|&v| !(1..=255).contains(&v)) {
            return Err(Error::InvalidRaster("quantization entries must lie in 1..=255".into()));
        }
        Ok(Self(values))
    }

    pub fn standard_luma() -> Self {
        Self(tables::LUMA_QUANT)
    }

    pub fn standard_chroma() -> Self {
        Self(tables::CHROMA_QUANT)
    }

    pub fn values(&self) -> &[u16; 64] {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.0[row * 8 + col]
    }
}

/// IJG quality scaling: S = 5000/Q below 50, 200 − 2Q otherwise;
/// entries become clamp(⌊(b·S + 50)/100⌋, 1, 255).
pub fn jpeg_quant_table(base: &QuantTable, quality: i32) -> Result<QuantTable> {
    if !(1..=100).contains(&quality) {
        return Err(Error::QualityOutOfRange(quality));
    }
    let scale = if quality < 50 { 5000 / quality } else { 200 - 2 * quality };
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(base.values()) {
        *o = ((b as i32 * scale + 50) / 100).clamp(1, 255) as u16;
    }
    Ok(QuantTable(out))
}

/// Encodes `r` as a baseline JFIF stream at IJG quality `quality`.
pub fn jpeg_encode(r: &Raster, quality: i32) -> Result<Vec<u8>> {
    if r.width() > u16::MAX as usize || r.height() > u16::MAX as usize {
        return Err(Error::UnsupportedFormat("JPEG dimensions exceed 65535".into()));
    }
    encoder::encode(r, quality)
}

/// Decodes any baseline sequential Huffman JPEG with 1 or 3 components.
pub fn jpeg_decode(bytes: &[u8]) -> Result<Raster> {
    decoder::decode(bytes)
}

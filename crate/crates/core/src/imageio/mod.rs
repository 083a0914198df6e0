//! Rasters, PGM/PPM files, the baseline JPEG codec, and bilinear resampling.

pub mod jpeg;
mod pnm;
mod raster;
mod resize;

use std::fs;
use std::path::Path;

pub use jpeg::{jpeg_decode, jpeg_encode, jpeg_quant_table, QuantTable};
pub use pnm::{decode_pnm, encode_pnm};
pub use raster::Raster;
pub use resize::{resize, Filter};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Ppm,
    /// Baseline JPEG at the given IJG quality (1..=100).
    Jpeg { quality: i32 },
}

impl ImageFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Ppm => "ppm",
            ImageFormat::Jpeg { .. } => "jpg",
        }
    }

    /// The lossless format matching a raster's channel count.
    pub fn lossless_for(r: &Raster) -> Self {
        if r.channels() == 1 {
            ImageFormat::Pgm
        } else {
            ImageFormat::Ppm
        }
    }
}

/// Decodes PGM, PPM, or baseline JPEG bytes, sniffing the format from the magic number.
pub fn decode_image(bytes: &[u8]) -> Result<Raster> {
    match bytes.get(..2) {
        Some(b"P5") | Some(b"P6") => decode_pnm(bytes),
        Some([0xFF, 0xD8]) => jpeg_decode(bytes),
        _ => Err(Error::UnsupportedFormat("unrecognized magic number".into())),
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_image(&bytes)
}

pub fn encode_image(r: &Raster, fmt: ImageFormat) -> Result<Vec<u8>> {
    match fmt {
        ImageFormat::Pgm if r.channels() != 1 => {
            Err(Error::ChannelMismatch(format!("PGM needs 1 channel, raster has {}", r.channels())))
        }
        ImageFormat::Ppm if r.channels() != 3 => {
            Err(Error::ChannelMismatch(format!("PPM needs 3 channels, raster has {}", r.channels())))
        }
        ImageFormat::Pgm | ImageFormat::Ppm => Ok(encode_pnm(r)),
        ImageFormat::Jpeg { quality } => jpeg_encode(r, quality),
    }
}

pub fn save_image(r: &Raster, path: impl AsRef<Path>, fmt: ImageFormat) -> Result<()> {
    let bytes = encode_image(r, fmt)?;
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.pgm");
        let r = Raster::new(1, 1, 1, vec![7]).unwrap();
        save_image(&r, &path, ImageFormat::Pgm).unwrap();
        assert_eq!(load_image(&path).unwrap(), r);
    }

    #[test]
    fn color_as_pgm_is_channel_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::filled(2, 2, 3, 1).unwrap();
        let err = save_image(&r, dir.path().join("x.pgm"), ImageFormat::Pgm).unwrap_err();
        assert!(matches!(err, Error::ChannelMismatch(_)));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_image("/nonexistent/qcia.pgm"), Err(Error::FileNotFound(_))));
    }

    #[test]
    fn unknown_magic() {
        assert!(matches!(decode_image(b"GIF89a"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn jpeg_file_of_constant_gray() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.jpg");
        let r = Raster::filled(16, 16, 1, 90).unwrap();
        save_image(&r, &path, ImageFormat::Jpeg { quality: 95 }).unwrap();
        let back = load_image(&path).unwrap();
        assert!(back.max_abs_diff(&r) <= 1);
    }
}

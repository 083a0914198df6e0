use crate::error::{Error, Result};

/// An 8-bit image, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!("zero dimension {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidRaster(format!("{channels} channels (expected 1 or 3)")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::InvalidRaster(format!(
                "{} samples for {width}x{height}x{channels}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, channels, pixels })
    }

    /// A raster with every sample set to `value`.
    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Copies the `w`×`h` window whose top-left corner is (`x`, `y`).
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Raster> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::InvalidRaster(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{}",
                self.width, self.height
            )));
        }
        let row = w * self.channels;
        let mut pixels = Vec::with_capacity(row * h);
        for yy in y..y + h {
            let start = (yy * self.width + x) * self.channels;
            pixels.extend_from_slice(&self.pixels[start..start + row]);
        }
        Raster::new(w, h, self.channels, pixels)
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Mean absolute per-sample difference. Panics if shapes differ.
    pub fn mean_abs_diff(&self, other: &Raster) -> f64 {
        assert!(self.same_shape(other), "mean_abs_diff on rasters of different shape");
        let total: u64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as u64)
            .sum();
        total as f64 / self.pixels.len() as f64
    }

    /// Largest per-sample absolute difference. Panics if shapes differ.
    pub fn max_abs_diff(&self, other: &Raster) -> u8 {
        assert!(self.same_shape(other), "max_abs_diff on rasters of different shape");
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| (a as i16 - b as i16).unsigned_abs() as u8)
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths_and_channels() {
        assert!(Raster::new(2, 2, 1, vec![0; 3]).is_err());
        assert!(Raster::new(2, 2, 2, vec![0; 8]).is_err());
        assert!(Raster::new(0, 2, 1, vec![]).is_err());
        assert!(Raster::new(2, 2, 3, vec![0; 12]).is_ok());
    }

    #[test]
    fn crop_copies_window() {
        let r = Raster::new(3, 2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let c = r.crop(1, 0, 2, 2).unwrap();
        assert_eq!(c.pixels(), &[2, 3, 5, 6]);
        assert!(r.crop(2, 0, 2, 1).is_err());
    }
}

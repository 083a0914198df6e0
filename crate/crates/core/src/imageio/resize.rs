use crate::error::{Error, Result};
use crate::imageio::Raster;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Filter {
    #[default]
    Bilinear,
}

/// Source taps for one output coordinate: (i0, i1, weight of i1).
fn taps(dst: usize, src: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            // half-pixel centers, clamped at the borders
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

pub fn resize(r: &Raster, width: usize, height: usize, filter: Filter) -> Result<Raster> {
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension(width, height));
    }
    let Filter::Bilinear = filter;
    if width == r.width() && height == r.height() {
        return Ok(r.clone());
    }
    let c = r.channels();
    let xs = taps(width, r.width());
    let ys = taps(height, r.height());
    let src = r.pixels();
    let row = r.width() * c;
    let mut out = Vec::with_capacity(width * height * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p = |x: usize, y: usize| src[y * row + x * c + ch] as f64;
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Raster::new(width, height, c, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let r = Raster::filled(17, 9, 3, 77).unwrap();
        for (w, h) in [(40, 40), (3, 5), (1, 1), (100, 2)] {
            let out = resize(&r, w, h, Filter::Bilinear).unwrap();
            assert_eq!((out.width(), out.height()), (w, h));
            assert!(out.pixels().iter().all(|&v| v == 77));
        }
    }

    #[test]
    fn upsample_two_to_three() {
        // x = (1 + 0.5)·2/3 − 0.5 = 0.5 → halfway between 0 and 255
        let r = Raster::new(2, 1, 1, vec![0, 255]).unwrap();
        let out = resize(&r, 3, 1, Filter::Bilinear).unwrap();
        assert_eq!(out.pixels()[0], 0);
        assert_eq!(out.pixels()[1], 128);
        assert_eq!(out.pixels()[2], 255);
    }

    #[test]
    fn same_size_is_identity() {
        let px: Vec<u8> = (0..5 * 4).map(|i| (i * 11) as u8).collect();
        let r = Raster::new(5, 4, 1, px).unwrap();
        assert_eq!(resize(&r, 5, 4, Filter::Bilinear).unwrap(), r);
    }

    #[test]
    fn zero_target_is_rejected() {
        let r = Raster::filled(4, 4, 1, 0).unwrap();
        assert!(matches!(resize(&r, 0, 3, Filter::Bilinear), Err(Error::ZeroDimension(0, 3))));
    }

    #[test]
    fn taps_weights_are_convex() {
        for (dst, src) in [(40, 512), (3, 2), (512, 40), (7, 7)] {
            for (i0, i1, f) in taps(dst, src) {
                assert!((0.0..1.0).contains(&f) || (i0 == i1));
                assert!(i0 < src && i1 < src);
            }
        }
    }
}

//! Procedural desk corpus: textured natural-looking scenes, each with one labeled
//! face-like object (bounding box + identity). Fully determined by the seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::degrade::{degrade, LabeledImage, Payload, QualityClass, QualityTaxonomy};
use crate::error::Result;
use crate::imageio::Raster;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub count: usize,
    /// Square side length in pixels.
    pub size: usize,
    pub channels: usize,
    pub identities: u32,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { count: 12, size: 128, channels: 3, identities: 8, seed: 2018 }
    }
}

struct ValueNoise {
    cells: usize,
    grid: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, cells: usize) -> Self {
        let n = cells + 2;
        Self { cells, grid: (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect() }
    }

    /// `u`, `v` in [0, 1].
    fn at(&self, u: f64, v: f64) -> f64 {
        let n = self.cells + 2;
        let (x, y) = (u * self.cells as f64, v * self.cells as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (fx, fy) = (smooth(x - x0 as f64), smooth(y - y0 as f64));
        let g = |i: usize, j: usize| self.grid[j.min(n - 1) * n + i.min(n - 1)];
        let top = g(x0, y0) * (1.0 - fx) + g(x0 + 1, y0) * fx;
        let bottom = g(x0, y0 + 1) * (1.0 - fx) + g(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Per-identity appearance of the face object.
fn identity_look(identity: u32) -> ([f64; 3], f64, usize) {
    let mut rng = seed::rng(0x1D, &[identity as u64]);
    let skin = [rng.random_range(90.0..230.0), rng.random_range(70.0..200.0), rng.random_range(50.0..180.0)];
    let eye_spacing = rng.random_range(0.22..0.38);
    let stripes = rng.random_range(2..6);
    (skin, eye_spacing, stripes)
}

/// Generates image `index` of the corpus described by `spec`.
pub fn synthesize(spec: &CorpusSpec, index: usize) -> LabeledImage {
    let mut rng = seed::rng(spec.seed, &[seed::hash_str("corpus"), index as u64]);
    let s = spec.size;
    let sf = s as f64;
    let octaves: Vec<(ValueNoise, f64)> = [(2usize, 60.0), (4, 38.0), (8, 24.0), (16, 14.0), (32, 9.0)]
        .into_iter()
        .filter(|&(cells, _)| cells <= s)
        .map(|(cells, amp)| (ValueNoise::new(&mut rng, cells), amp))
        .collect();
    let tint = [ValueNoise::new(&mut rng, 3), ValueNoise::new(&mut rng, 3), ValueNoise::new(&mut rng, 3)];
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(80.0..170.0));

    let mut canvas = vec![[0.0f64; 3]; s * s];
    for y in 0..s {
        for x in 0..s {
            let (u, v) = (x as f64 / sf, y as f64 / sf);
            let lum: f64 = octaves.iter().map(|(n, a)| a * n.at(u, v)).sum();
            for c in 0..3 {
                canvas[y * s + x][c] = base[c] + lum + 30.0 * tint[c].at(u, v);
            }
        }
    }

    // occluding shapes with hard edges, some striped
    let shapes = rng.random_range(3..8);
    for _ in 0..shapes {
        let (cx, cy) = (rng.random_range(0.0..sf), rng.random_range(0.0..sf));
        let (rx, ry) = (rng.random_range(0.05..0.25) * sf, rng.random_range(0.05..0.25) * sf);
        let color: [f64; 3] = std::array::from_fn(|_| rng.random_range(20.0..235.0));
        let ellipse = rng.random_bool(0.5);
        let stripe = if rng.random_bool(0.4) { Some(rng.random_range(2.0..7.0)) } else { None };
        fill_shape(&mut canvas, s, (cx, cy, rx, ry), ellipse, |x, y| match stripe {
            Some(p) if ((x + y) / p).floor() as i64 % 2 == 0 => color.map(|c| c * 0.7),
            _ => color,
        });
    }

    // the labeled object
    let identity = (index as u32) % spec.identities.max(1);
    let (skin, eye_spacing, stripes) = identity_look(identity);
    let fw = rng.random_range(0.25..0.42) * sf;
    let fh = fw * rng.random_range(1.1..1.3);
    let fx = rng.random_range(0.0..(sf - fw).max(1.0));
    let fy = rng.random_range(0.0..(sf - fh).max(1.0));
    let (cx, cy) = (fx + fw / 2.0, fy + fh / 2.0);
    fill_shape(&mut canvas, s, (cx, cy, fw / 2.0, fh / 2.0), true, |_, y| {
        let band = (((y - fy) / fh * stripes as f64 * 2.0).floor() as i64 % 2) as f64;
        skin.map(|c| c - 12.0 * band)
    });
    for side in [-1.0, 1.0] {
        let ex = cx + side * eye_spacing * fw;
        fill_shape(&mut canvas, s, (ex, cy - 0.12 * fh, 0.08 * fw, 0.05 * fh), true, |_, _| [25.0, 20.0, 30.0]);
    }
    fill_shape(&mut canvas, s, (cx, cy + 0.25 * fh, 0.22 * fw, 0.04 * fh), false, |_, _| [120.0, 30.0, 40.0]);

    let channels = spec.channels;
    let mut px = Vec::with_capacity(s * s * channels);
    for rgb in &canvas {
        let grain = rng.random_range(-9.0..9.0);
        if channels == 1 {
            px.push((0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2] + grain).round().clamp(0.0, 255.0) as u8);
        } else {
            for &v in rgb {
                px.push((v + grain).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    LabeledImage {
        name: format!("img{index:05}"),
        image: Raster::new(s, s, channels, px).expect("corpus raster is well formed"),
        payload: Payload { boxes: Some(vec![[fx, fy, fw, fh]]), identity: Some(identity) },
    }
}

fn fill_shape(
    canvas: &mut [[f64; 3]],
    s: usize,
    (cx, cy, rx, ry): (f64, f64, f64, f64),
    ellipse: bool,
    color: impl Fn(f64, f64) -> [f64; 3],
) {
    let x0 = (cx - rx).floor().max(0.0) as usize;
    let y0 = (cy - ry).floor().max(0.0) as usize;
    let x1 = ((cx + rx).ceil() as usize).min(s);
    let y1 = ((cy + ry).ceil() as usize).min(s);
    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let inside = if ellipse {
                ((px - cx) / rx).powi(2) + ((py - cy) / ry).powi(2) <= 1.0
            } else {
                (px - cx).abs() <= rx && (py - cy).abs() <= ry
            };
            if inside {
                canvas[y * s + x] = color(px, py);
            }
        }
    }
}

pub fn desk_corpus(spec: &CorpusSpec) -> Vec<LabeledImage> {
    (0..spec.count).map(|i| synthesize(spec, i)).collect()
}

/// Class of image `i` in a balanced set: families cycle G, BJ, BL and levels cycle
/// within each family.
pub fn balanced_class(i: usize, tax: &QualityTaxonomy) -> QualityClass {
    let j = i / 3;
    match i % 3 {
        0 => QualityClass::G,
        1 => QualityClass::BJ(j % tax.m() + 1),
        _ => QualityClass::BL(j % tax.n() + 1),
    }
}

/// `spec.count` corpus images, each degraded to its [`balanced_class`].
pub fn degraded_quality_set(spec: &CorpusSpec, tax: &QualityTaxonomy) -> Result<Vec<(Raster, QualityClass)>> {
    tax.validate()?;
    (0..spec.count)
        .map(|i| {
            let c = balanced_class(i, tax);
            Ok((degrade(&synthesize(spec, i).image, c, tax)?, c))
        })
        .collect()
}

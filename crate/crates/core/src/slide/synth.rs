//! Synthetic slides with exactly known tissue: stain-colored ellipses on a
//! near-white background.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};

use super::writer::{write_pyramid, WriteOptions};
use crate::error::{Error, Result};
use crate::raster::{box_downsample, BitMap, RgbImage};
use crate::seed::rng_for;

/// Stain-like base colors (hematoxylin purples, eosin pinks, PAS magentas).
/// Every channel stays at or below 200 after jitter and noise.
const PALETTE: [[u8; 3]; 5] = [
    [110, 70, 150],
    [180, 100, 160],
    [150, 60, 130],
    [185, 120, 175],
    [90, 60, 120],
];

/// Per-pixel noise amplitude on every channel.
const NOISE: i32 = 3;

#[derive(Debug, Clone)]
pub struct SynthSlide {
    pub path: PathBuf,
    /// Level-0 ground truth: true where a pixel center lies in some ellipse.
    pub truth: BitMap,
}

impl SynthSlide {
    pub fn tissue_fraction(&self) -> f64 {
        self.truth.count_ones() as f64 / self.truth.bits.len() as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    color: [u8; 3],
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        u * u + v * v <= 1.0
    }
}

/// Generates a deterministic three-level slide (downsamples 1, 4, 16) at
/// `path` and returns its level-0 tissue map.
pub fn synth_slide(
    path: impl AsRef<Path>,
    seed: u64,
    width: u32,
    height: u32,
    n_blobs: usize,
) -> Result<SynthSlide> {
    if width < 512 || height < 512 {
        return Err(Error::InvalidInput(format!(
            "synthetic slides must be at least 512x512, got {width}x{height}"
        )));
    }
    let mut layout = rng_for(seed, 0);
    let background = 240 + layout.random_range(0..=10u8);
    let short_side = width.min(height) as f64;
    let blobs: Vec<Ellipse> = (0..n_blobs)
        .map(|_| {
            let base = PALETTE[layout.random_range(0..PALETTE.len())];
            let mut color = [0u8; 3];
            for c in 0..3 {
                let jitter = layout.random_range(-10i32..=10);
                color[c] = (base[c] as i32 + jitter).clamp(0, 200 - NOISE) as u8;
            }
            let angle = layout.random_range(0.0..PI);
            Ellipse {
                cx: layout.random_range(0.1..0.9) * width as f64,
                cy: layout.random_range(0.1..0.9) * height as f64,
                a: layout.random_range(short_side / 20.0..short_side / 7.0),
                b: layout.random_range(short_side / 20.0..short_side / 7.0),
                cos: angle.cos(),
                sin: angle.sin(),
                color,
            }
        })
        .collect();

    let mut level0 = RgbImage::filled(width, height, [background; 3]);
    let mut truth = BitMap::new(width, height);
    for blob in &blobs {
        let r = blob.a.max(blob.b);
        let x0 = (blob.cx - r).floor().max(0.0) as u32;
        let x1 = ((blob.cx + r).ceil() as u32).min(width);
        let y0 = (blob.cy - r).floor().max(0.0) as u32;
        let y1 = ((blob.cy + r).ceil() as u32).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                if blob.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    truth.set(x, y, true);
                    level0.put_pixel(x, y, blob.color);
                }
            }
        }
    }

    let mut noise = rng_for(seed, 1);
    let mut row_noise = vec![0u8; width as usize * 3];
    let span = (2 * NOISE + 1) as u8;
    for row in level0.data.chunks_exact_mut(width as usize * 3) {
        noise.fill_bytes(&mut row_noise);
        for (v, n) in row.iter_mut().zip(&row_noise) {
            let delta = (n % span) as i32 - NOISE;
            *v = (*v as i32 + delta).clamp(0, 255) as u8;
        }
    }

    let level1 = box_downsample(&level0, 4);
    let level2 = box_downsample(&level1, 4);
    write_pyramid(path.as_ref(), &[level0, level1, level2], &WriteOptions::default())?;
    Ok(SynthSlide {
        path: path.as_ref().to_path_buf(),
        truth,
    })
}

//! Tissue detection on the slide thumbnail: luminance, box blur, Otsu
//! threshold, binary erosion.

mod cache;
mod png;

use crate::error::{Error, Result};
use crate::raster::{box_downsample, BitMap, GrayMap, RgbImage};
use crate::slide::SlidePyramid;

pub use cache::{load_or_build_mask, mask_path_for, MaskSource};
pub use png::{decode_mask_png, decode_mask_png_with_text, encode_mask_png, encode_mask_png_with_text};

/// Largest thumbnail edge the mask is computed on.
pub const MAX_THUMBNAIL_EDGE: u32 = 2048;

/// Binary tissue map at thumbnail scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueMask {
    bits: BitMap,
    mask_downsample: f64,
    tissue_pixels: usize,
}

impl TissueMask {
    pub fn new(bits: BitMap, mask_downsample: f64) -> Result<Self> {
        if !(mask_downsample.is_finite() && mask_downsample >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "mask downsample {mask_downsample} must be a finite value >= 1"
            )));
        }
        let tissue_pixels = bits.count_ones();
        Ok(Self {
            bits,
            mask_downsample,
            tissue_pixels,
        })
    }

    pub fn bits(&self) -> &BitMap {
        &self.bits
    }

    pub fn width(&self) -> u32 {
        self.bits.width
    }

    pub fn height(&self) -> u32 {
        self.bits.height
    }

    /// Level-0 pixels per mask pixel.
    pub fn mask_downsample(&self) -> f64 {
        self.mask_downsample
    }

    pub fn tissue_pixel_count(&self) -> usize {
        self.tissue_pixels
    }

    pub fn tissue_fraction(&self) -> f64 {
        self.tissue_pixels as f64 / self.bits.bits.len() as f64
    }

    #[inline]
    pub fn is_tissue(&self, col: u32, row: u32) -> bool {
        self.bits.get(col, row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskParams {
    pub blur_radius: u32,
    pub erode_iters: u32,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            blur_radius: 2,
            erode_iters: 1,
        }
    }
}

/// Result of [`build_mask`]. `degenerate` is set when the thumbnail
/// histogram had a single populated bin, in which case the mask is empty.
#[derive(Debug, Clone)]
pub struct MaskBuild {
    pub mask: TissueMask,
    pub threshold: Option<u8>,
    pub degenerate: bool,
}

/// Per-pixel `round(0.299 R + 0.587 G + 0.114 B)`, in exact integer
/// arithmetic.
pub fn grayscale(img: &RgbImage) -> GrayMap {
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8)
        .collect();
    GrayMap {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Mean over the `(2r+1)²` window with clamped edges, rounded half up.
pub fn box_blur(map: &GrayMap, radius: u32) -> GrayMap {
    if radius == 0 {
        return map.clone();
    }
    let (w, h) = (map.width as i64, map.height as i64);
    let r = radius as i64;
    let clamp = |v: i64, hi: i64| v.clamp(0, hi - 1) as usize;
    // Horizontal window sums, then vertical sums of those. Both passes are
    // exact integers; rounding happens once.
    let mut rows = vec![0u32; map.data.len()];
    for y in 0..h {
        let line = &map.data[(y * w) as usize..((y + 1) * w) as usize];
        for x in 0..w {
            rows[(y * w + x) as usize] = (x - r..=x + r).map(|xx| line[clamp(xx, w)] as u32).sum();
        }
    }
    let n = ((2 * r + 1) * (2 * r + 1)) as u32;
    let mut out = vec![0u8; map.data.len()];
    for y in 0..h {
        for x in 0..w {
            let s: u32 = (y - r..=y + r)
                .map(|yy| rows[clamp(yy, h) * w as usize + x as usize])
                .sum();
            out[(y * w + x) as usize] = ((s + n / 2) / n) as u8;
        }
    }
    GrayMap {
        width: map.width,
        height: map.height,
        data: out,
    }
}

pub fn histogram(map: &GrayMap) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &v in &map.data {
        h[v as usize] += 1;
    }
    h
}

/// Class statistics at the chosen threshold. Class 0 is the bins `0..=t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OtsuStats {
    pub histogram: [u64; 256],
    pub threshold: u8,
    pub w0: f64,
    pub w1: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub sigma_b2: f64,
}

/// Otsu's threshold: the `t` in `0..=254` maximizing the between-class
/// variance `w0·w1·(mu0−mu1)²`, smallest `t` on ties.
pub fn otsu_threshold(histogram: &[u64; 256]) -> Result<OtsuStats> {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return Err(Error::DegenerateHistogram);
    }
    let sum: u128 = histogram.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let n = total as f64;

    let mut n0: u64 = 0;
    let mut s0: u128 = 0;
    let mut best_t = 0u8;
    let mut best = 0.0f64;
    for (t, &count) in histogram.iter().enumerate().take(255) {
        n0 += count;
        s0 += t as u128 * count as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // w0·w1·(mu0−mu1)² = (N·S0 − n0·S)² / (N² · n0 · n1); the numerator
        // is formed exactly so equal partitions score bit-identically.
        let d = (total as i128 * s0 as i128 - n0 as i128 * sum as i128) as f64;
        let score = d * d / (n * n * n0 as f64 * n1 as f64);
        if score > best {
            best = score;
            best_t = t as u8;
        }
    }
    if best <= 0.0 {
        return Err(Error::DegenerateHistogram);
    }

    let t = best_t as usize;
    let n0: u64 = histogram[..=t].iter().sum();
    let s0: u128 = (0..=t).map(|i| i as u128 * histogram[i] as u128).sum();
    let n1 = total - n0;
    let mu0 = s0 as f64 / n0 as f64;
    let mu1 = (sum - s0) as f64 / n1 as f64;
    Ok(OtsuStats {
        histogram: *histogram,
        threshold: best_t,
        w0: n0 as f64 / n,
        w1: n1 as f64 / n,
        mu0,
        mu1,
        sigma_b2: best,
    })
}

/// `iterations` rounds of 3×3 erosion; pixels outside the map count as
/// background.
pub fn binary_erode(bits: &BitMap, iterations: u32) -> BitMap {
    let mut cur = bits.clone();
    let (w, h) = (bits.width as i64, bits.height as i64);
    for _ in 0..iterations {
        let prev = cur.clone();
        let on = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && prev.get(x as u32, y as u32);
        for y in 0..h {
            for x in 0..w {
                if !prev.get(x as u32, y as u32) {
                    continue;
                }
                let keep = (-1..=1).all(|dy| (-1..=1).all(|dx| on(x + dx, y + dy)));
                cur.set(x as u32, y as u32, keep);
            }
        }
    }
    cur
}

/// Thumbnail the mask is computed on: the coarsest level, box-reduced if
/// its longer edge exceeds [`MAX_THUMBNAIL_EDGE`].
pub fn thumbnail(slide: &SlidePyramid) -> Result<RgbImage> {
    let level = slide.read_level(slide.thumbnail_level())?;
    let edge = level.width.max(level.height);
    if edge <= MAX_THUMBNAIL_EDGE {
        return Ok(level);
    }
    Ok(box_downsample(&level, edge.div_ceil(MAX_THUMBNAIL_EDGE)))
}

/// Blur, Otsu, erode. Tissue is darker than background: a pixel is tissue
/// when its blurred luminance falls in Otsu's lower class (`<= t`).
pub fn build_mask(slide: &SlidePyramid, params: MaskParams) -> Result<MaskBuild> {
    let thumb = thumbnail(slide)?;
    let mask_downsample = slide.dimensions().0 as f64 / thumb.width as f64;
    mask_from_thumbnail(&thumb, mask_downsample, params)
}

pub fn mask_from_thumbnail(thumb: &RgbImage, mask_downsample: f64, params: MaskParams) -> Result<MaskBuild> {
    let blurred = box_blur(&grayscale(thumb), params.blur_radius);
    let (w, h) = (thumb.width, thumb.height);
    match otsu_threshold(&histogram(&blurred)) {
        Ok(stats) => {
            let t = stats.threshold;
            let raw = BitMap::from_bits(w, h, blurred.data.iter().map(|&v| v <= t).collect())?;
            Ok(MaskBuild {
                mask: TissueMask::new(binary_erode(&raw, params.erode_iters), mask_downsample)?,
                threshold: Some(t),
                degenerate: false,
            })
        }
        Err(Error::DegenerateHistogram) => Ok(MaskBuild {
            mask: TissueMask::new(BitMap::new(w, h), mask_downsample)?,
            threshold: None,
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

//! Patch coordinates: uniform random draws over tissue, and the fixed grid
//! used for holdout prediction. Also pyramid level selection and the
//! read-and-resize step that turns a coordinate into a patch.

use std::str::FromStr;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::{bilinear_resize, box_downsample};
use crate::slide::{Patch, PixelRegion, SlidePyramid};
use crate::tissue::TissueMask;

/// Square patch request: `patch_size` output pixels per edge, each covering
/// `downsample` level-0 pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSpec {
    pub patch_size: u32,
    pub downsample: f64,
    pub seed: u64,
}

impl PatchSpec {
    /// Edge of the patch footprint in level-0 pixels.
    pub fn footprint(&self) -> u32 {
        (self.patch_size as f64 * self.downsample).round() as u32
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::InvalidInput("patch size must be at least 1".into()));
        }
        if !(self.downsample.is_finite() && self.downsample >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "downsample {} must be finite and >= 1",
                self.downsample
            )));
        }
        Ok(())
    }

    pub fn validate_for(&self, slide: &SlidePyramid) -> Result<()> {
        self.validate()?;
        let (w, h) = slide.dimensions();
        if self.patch_size as f64 * self.downsample > w.min(h) as f64 {
            return Err(Error::InvalidInput(format!(
                "patch footprint {}x{} exceeds slide {} ({w}x{h})",
                self.patch_size, self.downsample,
                slide.slide_id()
            )));
        }
        Ok(())
    }
}

/// Row-major indices of the tissue pixels of a mask.
#[derive(Debug, Clone)]
pub struct TissueIndex {
    indices: Vec<u32>,
    mask_width: u32,
    mask_downsample: f64,
    bounds: (u32, u32),
}

pub fn build_index(mask: &TissueMask) -> Result<TissueIndex> {
    let indices: Vec<u32> = mask
        .bits()
        .bits
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i as u32))
        .collect();
    if indices.is_empty() {
        return Err(Error::NoTissue("mask has no tissue pixels".into()));
    }
    let ds = mask.mask_downsample();
    Ok(TissueIndex {
        indices,
        mask_width: mask.width(),
        mask_downsample: ds,
        bounds: (
            (mask.width() as f64 * ds).ceil() as u32,
            (mask.height() as f64 * ds).ceil() as u32,
        ),
    })
}

impl TissueIndex {
    /// Limits sampled coordinates to a level-0 extent. Mask footprints on the
    /// last row or column can overhang the slide by a fraction of a pixel.
    pub fn clamped_to(mut self, width: u32, height: u32) -> Self {
        self.bounds = (width, height);
        self
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn mask_downsample(&self) -> f64 {
        self.mask_downsample
    }

    /// (col, row) of a flat mask index.
    pub fn mask_position(&self, index: u32) -> (u32, u32) {
        (index % self.mask_width, index / self.mask_width)
    }

    /// Mask pixel containing a level-0 coordinate.
    pub fn mask_pixel_of(&self, x: u32, y: u32) -> (u32, u32) {
        (
            (x as f64 / self.mask_downsample).floor() as u32,
            (y as f64 / self.mask_downsample).floor() as u32,
        )
    }
}

/// Uniform tissue pixel, then a uniform position inside its level-0
/// footprint.
pub fn sample_coordinate<R: Rng + ?Sized>(index: &TissueIndex, rng: &mut R) -> (u32, u32) {
    let pick = index.indices[rng.random_range(0..index.indices.len())];
    let (col, row) = index.mask_position(pick);
    let ds = index.mask_downsample;
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let x = ((col as f64 + u) * ds).floor() as u32;
    let y = ((row as f64 + v) * ds).floor() as u32;
    (x.min(index.bounds.0 - 1), y.min(index.bounds.1 - 1))
}

/// Level with the largest downsample not exceeding `downsample`; level 0
/// when every level is finer than requested.
pub fn best_level(slide: &SlidePyramid, downsample: f64) -> usize {
    best_level_of(slide.levels().iter().map(|l| l.downsample), downsample)
}

pub(crate) fn best_level_of(downsamples: impl Iterator<Item = f64>, d: f64) -> usize {
    // Level downsamples come from integer width ratios; tolerate the last
    // few ulps so that e.g. 4096/1024 always selects for d = 4.
    let tol = d * 1e-9;
    let mut best = 0;
    for (i, ds) in downsamples.enumerate() {
        if ds <= d + tol {
            best = i;
        }
    }
    best
}

/// Reads the patch centered at level-0 `center`, shifted as needed to stay
/// inside the slide, and resizes it to `spec.patch_size`².
pub fn extract_patch(slide: &SlidePyramid, center: (u32, u32), spec: &PatchSpec) -> Result<Patch> {
    spec.validate_for(slide)?;
    let level = best_level(slide, spec.downsample);
    let info = slide.level(level)?;
    let ratio = spec.downsample / info.downsample;
    let k = ratio.round();
    let integer = (ratio - k).abs() < 1e-9;
    let read = if integer {
        spec.patch_size * k as u32
    } else {
        (spec.patch_size as f64 * ratio).round() as u32
    };
    if read > info.width || read > info.height {
        return Err(Error::OutOfBounds(format!(
            "{read}px read does not fit level {level} ({}x{}) of {}",
            info.width,
            info.height,
            slide.slide_id()
        )));
    }
    let place = |c: u32, extent: u32| -> u32 {
        let start = (c as f64 / info.downsample - read as f64 / 2.0).round();
        start.clamp(0.0, (extent - read) as f64) as u32
    };
    let lx = place(center.0, info.width);
    let ly = place(center.1, info.height);
    let mut patch = slide.read_region(level, lx, ly, read, read)?;
    if read != spec.patch_size {
        patch.pixels = if integer {
            box_downsample(&patch.pixels, k as u32)
        } else {
            bilinear_resize(&patch.pixels, spec.patch_size, spec.patch_size)
        };
    }
    Ok(patch)
}

/// One cell of the prediction grid, in level-0 pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridTile {
    pub x: u32,
    pub y: u32,
    pub size: u32,
}

impl GridTile {
    pub fn center(&self) -> (u32, u32) {
        (self.x + self.size / 2, self.y + self.size / 2)
    }

    pub fn region(&self) -> PixelRegion {
        PixelRegion {
            x0: self.x,
            y0: self.y,
            width: self.size,
            height: self.size,
        }
    }
}

/// Non-overlapping row-major tiling of level 0 with edge
/// `patch_size · downsample`, keeping tiles that overlap at least one tissue
/// pixel of the mask. Partial tiles at the right and bottom edges are
/// dropped.
pub fn grid_coordinates(slide: &SlidePyramid, mask: &TissueMask, spec: &PatchSpec) -> Result<Vec<GridTile>> {
    spec.validate_for(slide)?;
    if mask.tissue_pixel_count() == 0 {
        return Err(Error::NoTissue(format!("{}: mask is empty", slide.slide_id())));
    }
    let size = spec.footprint().max(1);
    let (w, h) = slide.dimensions();
    let ds = mask.mask_downsample();
    let mask_range = |start: u32, limit: u32| {
        let first = (start as f64 / ds).floor() as u32;
        let last = (((start + size) as f64 / ds).ceil() as u32).min(limit);
        first.min(limit)..last
    };
    let mut tiles = Vec::new();
    for ty in 0..h / size {
        let rows = mask_range(ty * size, mask.height());
        for tx in 0..w / size {
            let cols = mask_range(tx * size, mask.width());
            let hit = rows
                .clone()
                .any(|r| cols.clone().any(|c| mask.is_tissue(c, r)));
            if hit {
                tiles.push(GridTile {
                    x: tx * size,
                    y: ty * size,
                    size,
                });
            }
        }
    }
    if tiles.is_empty() {
        return Err(Error::NoTissue(format!(
            "{}: no grid tile intersects tissue",
            slide.slide_id()
        )));
    }
    Ok(tiles)
}

/// How a slide is chosen before a coordinate is drawn from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlideWeighting {
    /// Proportional to tissue area in level-0 pixels.
    TissueArea,
    Uniform,
}

impl FromStr for SlideWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "area" | "tissue_area" => Ok(Self::TissueArea),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Config(format!(
                "slide_weighting must be `area` or `uniform`, got `{other}`"
            ))),
        }
    }
}

/// Whether a sampled tissue point becomes the patch center or its top-left
/// corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Center,
    Corner,
}

impl FromStr for Anchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(Self::Center),
            "corner" => Ok(Self::Corner),
            other => Err(Error::Config(format!(
                "anchor must be `center` or `corner`, got `{other}`"
            ))),
        }
    }
}

pub struct SlideEntry {
    pub slide: Arc<SlidePyramid>,
    pub index: TissueIndex,
}

/// Draws (slide, center) pairs across a set of slides.
pub struct SlideSampler {
    entries: Vec<SlideEntry>,
    chooser: Option<WeightedIndex<f64>>,
    anchor: Anchor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draw {
    pub slide: usize,
    pub center: (u32, u32),
}

impl SlideSampler {
    pub fn new(entries: Vec<SlideEntry>, weighting: SlideWeighting, anchor: Anchor) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::NoTissue("no slide has tissue".into()));
        }
        let weights: Vec<f64> = entries
            .iter()
            .map(|e| match weighting {
                SlideWeighting::TissueArea => e.index.len() as f64 * e.index.mask_downsample().powi(2),
                SlideWeighting::Uniform => 1.0,
            })
            .collect();
        let chooser = if entries.len() > 1 {
            Some(WeightedIndex::new(&weights).map_err(|e| Error::InvalidInput(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            entries,
            chooser,
            anchor,
        })
    }

    pub fn entries(&self) -> &[SlideEntry] {
        &self.entries
    }

    pub fn draw<R: Rng + ?Sized>(&self, spec: &PatchSpec, rng: &mut R) -> Draw {
        let slide = self.chooser.as_ref().map_or(0, |c| c.sample(rng));
        let (x, y) = sample_coordinate(&self.entries[slide].index, rng);
        let center = match self.anchor {
            Anchor::Center => (x, y),
            Anchor::Corner => {
                let half = spec.footprint() / 2;
                (x.saturating_add(half), y.saturating_add(half))
            }
        };
        Draw { slide, center }
    }
}

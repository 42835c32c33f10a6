//! Pyramidal tiled-TIFF slides: opening, region reads, writing, and
//! synthetic test slides.
//!
//! A slide is a single TIFF file whose image file directories are the
//! pyramid levels. Each level is tiled, 8-bit RGB, chunky, and either
//! uncompressed or Deflate-compressed. Level order is by size, and a level's
//! downsample is the ratio of level-0 width to its own width.

mod synth;
pub(crate) mod tiff;
mod writer;

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::ZlibDecoder;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::RgbImage;
use tiff::{Directory, ReadAt};

pub use synth::{synth_slide, SynthSlide};
pub use writer::{write_pyramid, write_pyramid_with_order, WriteOptions};
pub use tiff::ByteOrder as TiffByteOrder;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    None,
    Deflate,
}

impl Compression {
    pub(crate) fn tiff_code(self) -> u16 {
        match self {
            Compression::None => 1,
            Compression::Deflate => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelInfo {
    pub index: usize,
    pub width: u32,
    pub height: u32,
    /// Level-0 pixels per pixel of this level.
    pub downsample: f64,
    pub tile_width: u32,
    pub tile_height: u32,
    pub compression: Compression,
}

impl LevelInfo {
    pub fn tiles_across(&self) -> u32 {
        self.width.div_ceil(self.tile_width)
    }

    pub fn tiles_down(&self) -> u32 {
        self.height.div_ceil(self.tile_height)
    }

    pub fn tile_count(&self) -> usize {
        self.tiles_across() as usize * self.tiles_down() as usize
    }
}

/// Rectangle in level-0 pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRegion {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
}

/// RGB pixels plus where they came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub pixels: RgbImage,
    pub origin: PixelRegion,
    pub slide_id: Arc<str>,
}

#[derive(Debug, Clone)]
struct TileTable {
    offsets: Vec<u32>,
    byte_counts: Vec<u32>,
}

/// An open slide. Immutable after [`SlidePyramid::open`]; region reads use
/// positioned I/O and per-call decode buffers, so one handle may be shared
/// across threads without locking.
pub struct SlidePyramid {
    slide_id: Arc<str>,
    path: PathBuf,
    levels: Vec<LevelInfo>,
    tiles: Vec<TileTable>,
    source: Box<dyn ReadAt + Send + Sync>,
}

impl fmt::Debug for SlidePyramid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlidePyramid")
            .field("slide_id", &self.slide_id)
            .field("path", &self.path)
            .field("levels", &self.levels)
            .finish()
    }
}

pub fn open_slide(path: impl AsRef<Path>) -> Result<SlidePyramid> {
    SlidePyramid::open(path)
}

/// Downsample of a `w`×`h` level under a `w0`×`h0` base. Writers round each
/// side up or down independently, so an integer factor is taken whenever
/// both sides agree with it; otherwise the width ratio, provided the height
/// is within one pixel of the same factor.
fn level_downsample(w0: u32, h0: u32, w: u32, h: u32) -> Option<f64> {
    let fits = |base: u32, side: u32, d: f64| {
        let exact = base as f64 / d;
        side as f64 == exact.floor() || side as f64 == exact.ceil()
    };
    let r = (w0 as f64 / w as f64).round();
    if r >= 1.0 && fits(w0, w, r) && fits(h0, h, r) {
        return Some(r);
    }
    let d = w0 as f64 / w as f64;
    ((h as f64 - h0 as f64 / d).abs() <= 1.0).then_some(d)
}

impl SlidePyramid {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        let slide_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_source(slide_id, path.to_path_buf(), Box::new(file))
    }

    fn from_source(
        slide_id: String,
        path: PathBuf,
        source: Box<dyn ReadAt + Send + Sync>,
    ) -> Result<Self> {
        let (order, first) = tiff::parse_header(source.as_ref())?;
        let dirs = tiff::read_directories(source.as_ref(), order, first)?;
        let mut parsed = dirs
            .iter()
            .map(|d| parse_level(d, source.len()))
            .collect::<Result<Vec<_>>>()?;
        parsed.sort_by(|a, b| b.0.width.cmp(&a.0.width).then(b.0.height.cmp(&a.0.height)));

        let (w0, h0) = (parsed[0].0.width, parsed[0].0.height);
        let mut levels = Vec::with_capacity(parsed.len());
        let mut tiles = Vec::with_capacity(parsed.len());
        for (index, (mut level, table)) in parsed.into_iter().enumerate() {
            level.index = index;
            level.downsample = level_downsample(w0, h0, level.width, level.height).ok_or_else(|| {
                Error::UnsupportedTag(format!(
                    "level {index} is {}x{}, aspect ratio differs from level 0 ({w0}x{h0})",
                    level.width, level.height
                ))
            })?;
            if let Some(prev) = levels.last() {
                let prev: &LevelInfo = prev;
                if level.downsample <= prev.downsample {
                    return Err(Error::UnsupportedTag(format!(
                        "levels {} and {} have the same width {}",
                        prev.index, index, level.width
                    )));
                }
            }
            levels.push(level);
            tiles.push(table);
        }
        log::debug!(
            "opened {} ({:?}): {} levels",
            slide_id,
            order,
            levels.len()
        );
        Ok(Self {
            slide_id: slide_id.into(),
            path,
            levels,
            tiles,
            source,
        })
    }

    pub fn slide_id(&self) -> &str {
        &self.slide_id
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn levels(&self) -> &[LevelInfo] {
        &self.levels
    }

    pub fn level(&self, index: usize) -> Result<&LevelInfo> {
        self.levels.get(index).ok_or_else(|| {
            Error::OutOfBounds(format!(
                "level {index}, slide has {} levels",
                self.levels.len()
            ))
        })
    }

    /// Index of the coarsest level.
    pub fn thumbnail_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.levels[0].width, self.levels[0].height)
    }

    /// Reads a `w`×`h` rectangle at level-pixel position (`lx`, `ly`).
    pub fn read_region(&self, level: usize, lx: u32, ly: u32, w: u32, h: u32) -> Result<Patch> {
        let info = self.level(level)?;
        if w == 0
            || h == 0
            || lx as u64 + w as u64 > info.width as u64
            || ly as u64 + h as u64 > info.height as u64
        {
            return Err(Error::OutOfBounds(format!(
                "region {w}x{h}+{lx}+{ly} outside level {level} ({}x{})",
                info.width, info.height
            )));
        }
        let (tw, th) = (info.tile_width, info.tile_height);
        let mut out = RgbImage::new(w, h);
        let out_row = w as usize * 3;
        for ty in ly / th..=(ly + h - 1) / th {
            for tx in lx / tw..=(lx + w - 1) / tw {
                let tile = self.decode_tile(level, tx, ty)?;
                // Intersection of the tile with the request, in level pixels.
                let x_start = lx.max(tx * tw);
                let x_end = (lx + w).min((tx + 1) * tw);
                let y_start = ly.max(ty * th);
                let y_end = (ly + h).min((ty + 1) * th);
                let span = (x_end - x_start) as usize * 3;
                for y in y_start..y_end {
                    let src = ((y - ty * th) as usize * tw as usize + (x_start - tx * tw) as usize) * 3;
                    let dst = (y - ly) as usize * out_row + (x_start - lx) as usize * 3;
                    out.data[dst..dst + span].copy_from_slice(&tile[src..src + span]);
                }
            }
        }
        let ds = info.downsample;
        let (w0, h0) = self.dimensions();
        let x0 = ((lx as f64 * ds).floor() as u32).min(w0 - 1);
        let y0 = ((ly as f64 * ds).floor() as u32).min(h0 - 1);
        let x1 = (((lx + w) as f64 * ds).ceil() as u32).clamp(x0 + 1, w0);
        let y1 = (((ly + h) as f64 * ds).ceil() as u32).clamp(y0 + 1, h0);
        Ok(Patch {
            pixels: out,
            origin: PixelRegion {
                x0,
                y0,
                width: x1 - x0,
                height: y1 - y0,
            },
            slide_id: self.slide_id.clone(),
        })
    }

    /// Decodes a whole level into one buffer.
    pub fn read_level(&self, level: usize) -> Result<RgbImage> {
        let info = self.level(level)?;
        Ok(self.read_region(level, 0, 0, info.width, info.height)?.pixels)
    }

    fn raw_tile(&self, level: usize, index: usize) -> Result<Vec<u8>> {
        let table = &self.tiles[level];
        tiff::read_checked(
            self.source.as_ref(),
            table.offsets[index] as u64,
            table.byte_counts[index] as u64,
            "tile data",
        )
    }

    /// Full-size decoded tile (edge tiles include their padding).
    fn decode_tile(&self, level: usize, tx: u32, ty: u32) -> Result<Vec<u8>> {
        let info = &self.levels[level];
        let index = ty as usize * info.tiles_across() as usize + tx as usize;
        let expected = info.tile_width as usize * info.tile_height as usize * 3;
        let raw = self.raw_tile(level, index)?;
        match info.compression {
            Compression::None => {
                if raw.len() < expected {
                    return Err(Error::DecodeFailure(format!(
                        "level {level} tile {index}: {} bytes stored, {expected} needed",
                        raw.len()
                    )));
                }
                let mut raw = raw;
                raw.truncate(expected);
                Ok(raw)
            }
            Compression::Deflate => {
                let mut out = Vec::with_capacity(expected);
                ZlibDecoder::new(raw.as_slice())
                    .take(expected as u64 + 1)
                    .read_to_end(&mut out)
                    .map_err(|e| {
                        Error::DecodeFailure(format!("level {level} tile {index}: {e}"))
                    })?;
                if out.len() != expected {
                    return Err(Error::DecodeFailure(format!(
                        "level {level} tile {index}: inflated to {} bytes, expected {expected}",
                        out.len()
                    )));
                }
                Ok(out)
            }
        }
    }

    /// SHA-256 over a level's geometry and its stored tile bytes. Anything
    /// derived only from that level's pixels can be keyed by it.
    pub fn level_fingerprint(&self, level: usize) -> Result<String> {
        let info = self.level(level)?;
        let mut hasher = Sha256::new();
        for v in [
            info.width,
            info.height,
            info.tile_width,
            info.tile_height,
            info.compression.tiff_code() as u32,
        ] {
            hasher.update(v.to_le_bytes());
        }
        for index in 0..info.tile_count() {
            let raw = self.raw_tile(level, index)?;
            hasher.update((raw.len() as u64).to_le_bytes());
            hasher.update(&raw);
        }
        Ok(hex(&hasher.finalize()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn parse_level(dir: &Directory, file_len: u64) -> Result<(LevelInfo, TileTable)> {
    let at = dir.offset;
    let require = |tag: u16, name: &str| {
        dir.scalar(tag).ok_or_else(|| {
            Error::UnsupportedTag(format!("IFD at {at}: missing {name} ({tag})"))
        })
    };
    if dir.values(tiff::TAG_TILE_OFFSETS).is_none() {
        if dir.values(tiff::TAG_STRIP_OFFSETS).is_some() {
            return Err(Error::UnsupportedTag(format!(
                "IFD at {at}: striped image, only tiled images are supported"
            )));
        }
        return Err(Error::UnsupportedTag(format!(
            "IFD at {at}: missing TileOffsets (324)"
        )));
    }
    let width = require(tiff::TAG_IMAGE_WIDTH, "ImageWidth")?;
    let height = require(tiff::TAG_IMAGE_LENGTH, "ImageLength")?;
    let tile_width = require(tiff::TAG_TILE_WIDTH, "TileWidth")?;
    let tile_height = require(tiff::TAG_TILE_LENGTH, "TileLength")?;
    let samples = require(tiff::TAG_SAMPLES_PER_PIXEL, "SamplesPerPixel")?;
    let photometric = require(tiff::TAG_PHOTOMETRIC, "PhotometricInterpretation")?;
    let compression = require(tiff::TAG_COMPRESSION, "Compression")?;
    let bits = dir.values(tiff::TAG_BITS_PER_SAMPLE).ok_or_else(|| {
        Error::UnsupportedTag(format!("IFD at {at}: missing BitsPerSample (258)"))
    })?;

    if width == 0 || height == 0 || tile_width == 0 || tile_height == 0 {
        return Err(Error::UnsupportedTag(format!(
            "IFD at {at}: zero image or tile dimension"
        )));
    }
    if samples != 3 || photometric != 2 {
        return Err(Error::UnsupportedTag(format!(
            "IFD at {at}: SamplesPerPixel={samples}, Photometric={photometric}; only RGB is supported"
        )));
    }
    if !(bits.len() == 1 || bits.len() == 3) || bits.iter().any(|&b| b != 8) {
        return Err(Error::UnsupportedTag(format!(
            "IFD at {at}: BitsPerSample {bits:?}, expected 8,8,8"
        )));
    }
    let compression = match compression {
        1 => Compression::None,
        8 => Compression::Deflate,
        other => {
            return Err(Error::UnsupportedTag(format!(
                "IFD at {at}: compression {other}, expected 1 or 8"
            )))
        }
    };
    for (tag, name) in [
        (tiff::TAG_PLANAR_CONFIGURATION, "PlanarConfiguration"),
        (tiff::TAG_PREDICTOR, "Predictor"),
        (tiff::TAG_SAMPLE_FORMAT, "SampleFormat"),
    ] {
        if let Some(values) = dir.values(tag) {
            if values.iter().any(|&v| v != 1) {
                return Err(Error::UnsupportedTag(format!(
                    "IFD at {at}: {name} {values:?} not supported"
                )));
            }
        }
    }

    let info = LevelInfo {
        index: 0,
        width,
        height,
        downsample: 1.0,
        tile_width,
        tile_height,
        compression,
    };
    let offsets = dir.values(tiff::TAG_TILE_OFFSETS).unwrap_or_default().to_vec();
    let byte_counts = dir
        .values(tiff::TAG_TILE_BYTE_COUNTS)
        .ok_or_else(|| Error::UnsupportedTag(format!("IFD at {at}: missing TileByteCounts (325)")))?
        .to_vec();
    if offsets.len() != info.tile_count() || byte_counts.len() != info.tile_count() {
        return Err(Error::UnsupportedTag(format!(
            "IFD at {at}: {} tile offsets and {} byte counts for {} tiles",
            offsets.len(),
            byte_counts.len(),
            info.tile_count()
        )));
    }
    for (i, (&o, &n)) in offsets.iter().zip(&byte_counts).enumerate() {
        if o as u64 + n as u64 > file_len {
            return Err(Error::TruncatedFile(format!(
                "IFD at {at}: tile {i} at {o}+{n} ends past end of file ({file_len} bytes)"
            )));
        }
    }
    Ok((info, TileTable { offsets, byte_counts }))
}

/// Compile-time check that handles can be shared between workers.
#[allow(dead_code)]
fn assert_send_sync() {
    fn is<T: Send + Sync>() {}
    is::<SlidePyramid>();
}

#[cfg(test)]
mod tests;

//! Pre-chop baseline: every non-overlapping level-0 tile that touches
//! tissue is written to disk before any training can start.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use slidefetch::pipeline::list_slides;
use slidefetch::sampler::{grid_coordinates, GridTile, PatchSpec};
use slidefetch::tissue::build_mask;
use slidefetch::{Error, PipelineConfig, Result, SlidePyramid};

use crate::pngio::write_rgb;
use crate::report::ChopReport;

/// Tile file name shared by `chop` and `grid`.
pub fn tile_name(slide_id: &str, x: u32, y: u32) -> String {
    format!("{slide_id}_{x}_{y}.png")
}

/// Tissue-touching `tile_px`² tiles of one slide. Slides without tissue
/// yield none.
pub fn tissue_tiles(slide: &SlidePyramid, cfg: &PipelineConfig, tile_px: u32) -> Result<Vec<GridTile>> {
    let (w, h) = slide.dimensions();
    if tile_px > w.min(h) {
        return Ok(Vec::new());
    }
    let mask = build_mask(slide, cfg.mask)?.mask;
    let spec = PatchSpec {
        patch_size: tile_px,
        downsample: 1.0,
        seed: 0,
    };
    match grid_coordinates(slide, &mask, &spec) {
        Ok(t) => Ok(t),
        Err(Error::NoTissue(_)) => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

/// Chops every slide in `cfg.slide_dir` into `out_dir` using
/// `cfg.workers` threads. Masks are computed in memory only, so
/// `bytes_written` counts tiles alone.
pub fn cmd_chop(cfg: &PipelineConfig, out_dir: &Path, tile_px: u32) -> Result<ChopReport> {
    if tile_px == 0 {
        return Err(Error::Config("tile_px must be at least 1".into()));
    }
    let started = Instant::now();
    let paths = list_slides(&cfg.slide_dir)?;
    if paths.is_empty() {
        return Err(Error::NoSlides(cfg.slide_dir.display().to_string()));
    }
    std::fs::create_dir_all(out_dir)?;
    let slides = paths.iter().map(SlidePyramid::open).collect::<Result<Vec<_>>>()?;

    let mut jobs: Vec<(usize, GridTile)> = Vec::new();
    for (i, slide) in slides.iter().enumerate() {
        jobs.extend(tissue_tiles(slide, cfg, tile_px)?.into_iter().map(|t| (i, t)));
    }

    let next = AtomicUsize::new(0);
    let written = Mutex::new((0u64, 0u64));
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    thread::scope(|s| {
        for _ in 0..cfg.workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                if j >= jobs.len() || failure.lock().unwrap().is_some() {
                    return;
                }
                let (i, tile) = jobs[j];
                let slide = &slides[i];
                let outcome = slide
                    .read_region(0, tile.x, tile.y, tile.size, tile.size)
                    .and_then(|p| {
                        let path: PathBuf = out_dir.join(tile_name(slide.slide_id(), tile.x, tile.y));
                        write_rgb(&path, &p.pixels)
                    });
                match outcome {
                    Ok(bytes) => {
                        let mut w = written.lock().unwrap();
                        w.0 += bytes;
                        w.1 += 1;
                    }
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        return;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let (bytes_written, patches_written) = written.into_inner().unwrap();
    Ok(ChopReport {
        wall_time_s: started.elapsed().as_secs_f64(),
        bytes_written,
        patches_written,
        slides_processed: slides.len() as u64,
    })
}

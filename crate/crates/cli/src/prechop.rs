//! Training input for the pre-chop baseline: batches are cut from tiles
//! already on disk, with the same prefetch depth, worker count, patch spec
//! and augmentation as the streaming path.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::sync_channel;
use std::thread;
use std::time::Instant;

use rand::Rng;
use slidefetch::augment::draw_augmentation;
use slidefetch::raster::{bilinear_resize, box_downsample, RgbImage};
use slidefetch::seed::rng_for;
use slidefetch::{Error, PipelineConfig, Result};

use crate::consumer::{consume, millis, StepClock};
use crate::pngio::read_rgb;

pub fn list_tiles(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    out.sort();
    Ok(out)
}

fn build_batch(tiles: &[PathBuf], cfg: &PipelineConfig, step: u64) -> Result<Vec<RgbImage>> {
    let mut rng = rng_for(cfg.spec.seed, step);
    let spec = &cfg.spec;
    let foot = spec.footprint();
    (0..cfg.batch_size)
        .map(|_| {
            let tile = read_rgb(&tiles[rng.random_range(0..tiles.len())])?;
            if foot > tile.width || foot > tile.height {
                return Err(Error::InvalidInput(format!(
                    "patch footprint {foot}px exceeds chopped tile {}x{}",
                    tile.width, tile.height
                )));
            }
            let x = rng.random_range(0..=tile.width - foot);
            let y = rng.random_range(0..=tile.height - foot);
            let crop = tile.crop(x, y, foot, foot)?;
            let k = spec.downsample.round();
            let pixels = if (spec.downsample - k).abs() < 1e-9 && k as u32 * spec.patch_size == foot {
                box_downsample(&crop, k as u32)
            } else {
                bilinear_resize(&crop, spec.patch_size, spec.patch_size)
            };
            let params = draw_augmentation(&cfg.augment, spec.patch_size, &mut rng)?;
            params.apply(&pixels)
        })
        .collect()
}

/// Consumes `cfg.total_steps` batches cut from the tiles in `tile_dir`,
/// spending `consumer_ms` on each, and returns the consumer's step clock.
pub fn run_prechop(tile_dir: &Path, cfg: &PipelineConfig, consumer_ms: f64) -> Result<StepClock> {
    cfg.validate()?;
    let tiles = list_tiles(tile_dir)?;
    if tiles.is_empty() {
        return Err(Error::NoTissue(format!("no chopped tiles in {}", tile_dir.display())));
    }
    let busy = millis(consumer_ms);
    let next = AtomicU64::new(0);
    let cancelled = AtomicBool::new(false);
    let (tx, rx) = sync_channel::<Result<Vec<RgbImage>>>(cfg.prefetch_depth);
    thread::scope(|s| {
        for _ in 0..cfg.workers {
            let tx = tx.clone();
            let (tiles, next, cancelled) = (&tiles, &next, &cancelled);
            s.spawn(move || loop {
                let step = next.fetch_add(1, Ordering::Relaxed);
                if step >= cfg.total_steps || cancelled.load(Ordering::Relaxed) {
                    return;
                }
                if tx.send(build_batch(tiles, cfg, step)).is_err() {
                    return;
                }
            });
        }
        drop(tx);
        // Owned here so that an early return disconnects blocked senders
        // before the scope joins them.
        let rx = rx;
        let mut clock = StepClock::default();
        clock.start();
        for _ in 0..cfg.total_steps {
            let asked = Instant::now();
            let batch = match rx.recv() {
                Ok(Ok(b)) => b,
                Ok(Err(e)) => {
                    cancelled.store(true, Ordering::Relaxed);
                    return Err(e);
                }
                Err(_) => {
                    cancelled.store(true, Ordering::Relaxed);
                    return Err(Error::EndOfStream);
                }
            };
            let blocked = asked.elapsed();
            consume(busy, || batch.len());
            clock.tick(blocked);
        }
        Ok(clock)
    })
}

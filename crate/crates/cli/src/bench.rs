//! Pre-chop versus on-the-fly: time to first batch, extra disk, and
//! per-step time under the same simulated consumer.

use std::path::{Path, PathBuf};
use std::time::Instant;

use slidefetch::{Error, Pipeline, PipelineConfig, Result};

use crate::chop::cmd_chop;
use crate::consumer::{consume, millis, StepClock};
use crate::prechop::run_prechop;
use crate::report::{mean_stdev, ratio, BenchReport};

pub const DEFAULT_CONSUMER_MS: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Scratch space for tiles and masks; a temporary directory when unset.
    pub work_dir: Option<PathBuf>,
    pub tile_px: u32,
    pub consumer_ms: f64,
}

struct Scratch {
    root: PathBuf,
    owned: bool,
}

impl Scratch {
    fn new(dir: Option<&Path>) -> Result<Self> {
        let (root, owned) = match dir {
            Some(d) => (d.to_path_buf(), false),
            None => (
                std::env::temp_dir().join(format!("slidefetch-bench-{}", std::process::id())),
                true,
            ),
        };
        for sub in ["tiles", "masks"] {
            let p = root.join(sub);
            if p.exists() {
                std::fs::remove_dir_all(&p)?;
            }
            std::fs::create_dir_all(&p)?;
        }
        Ok(Self { root, owned })
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        if self.owned {
            let _ = std::fs::remove_dir_all(&self.root);
        }
    }
}

/// Streams `cfg.total_steps` batches from fresh masks. Returns the time to
/// the first batch, the mask bytes written and the consumer's step clock.
fn run_fetch(cfg: &PipelineConfig, mask_dir: &Path, consumer_ms: f64) -> Result<(f64, u64, StepClock)> {
    let mut cfg = cfg.clone();
    cfg.mask_dir = Some(mask_dir.to_path_buf());
    let busy = millis(consumer_ms);

    let launched = Instant::now();
    let mut pipeline = Pipeline::start(cfg)?;
    let mut clock = StepClock::default();
    clock.start();
    let mut startup = None;
    loop {
        let asked = Instant::now();
        let batch = match pipeline.next_batch() {
            Ok(b) => b,
            Err(Error::EndOfStream) => break,
            Err(e) => return Err(e),
        };
        let blocked = asked.elapsed();
        startup.get_or_insert_with(|| launched.elapsed().as_secs_f64());
        consume(busy, || batch.checksum());
        clock.tick(blocked);
    }
    pipeline.stop();
    let mask_bytes = pipeline.masks().iter().map(|m| m.file_bytes).sum();
    Ok((startup.unwrap_or_default(), mask_bytes, clock))
}

pub fn cmd_bench(cfg: &PipelineConfig, opts: &BenchOptions) -> Result<BenchReport> {
    cfg.validate()?;
    let scratch = Scratch::new(opts.work_dir.as_deref())?;
    let tiles = scratch.root.join("tiles");

    let chop = cmd_chop(cfg, &tiles, opts.tile_px)?;
    log::info!("chop: {} tiles, {} bytes in {:.2}s", chop.patches_written, chop.bytes_written, chop.wall_time_s);
    let (fetch_startup_s, fetch_extra_bytes, fetch_clock) = run_fetch(cfg, &scratch.root.join("masks"), opts.consumer_ms)?;
    let prechop_clock = run_prechop(&tiles, cfg, opts.consumer_ms)?;

    let warmup = cfg.prefetch_depth;
    let (mean_step_s_fetch, stdev_step_s_fetch) = mean_stdev(fetch_clock.after(warmup).0);
    let (mean_step_s_prechop, stdev_step_s_prechop) = mean_stdev(prechop_clock.after(warmup).0);
    Ok(BenchReport {
        startup_speedup: ratio(chop.wall_time_s, fetch_startup_s),
        disk_ratio: ratio(chop.bytes_written as f64, fetch_extra_bytes as f64),
        chop,
        fetch_startup_s,
        fetch_extra_bytes,
        mean_step_s_prechop,
        stdev_step_s_prechop,
        mean_step_s_fetch,
        stdev_step_s_fetch,
        consumer_ms: opts.consumer_ms,
        steps: cfg.total_steps,
        batch_size: cfg.batch_size,
    })
}

use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use slidefetch::{PipelineConfig, Result};

#[derive(Debug, Parser)]
#[command(name = "slidefetch", version, about = "Stream augmented patches from whole-slide images")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides applied on top of the config file, in that order.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat `key = value` pipeline config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub prefetch_depth: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub patch_size: Option<u32>,
    #[arg(long, global = true)]
    pub downsample: Option<f64>,
    #[arg(long, global = true)]
    pub steps: Option<u64>,
    #[arg(long, global = true, action = ArgAction::Set, value_name = "BOOL")]
    pub ordered: Option<bool>,
    /// Simulated consumer compute time per batch.
    #[arg(long, global = true, value_name = "MS")]
    pub consumer_ms: Option<f64>,
    /// Where tissue masks are cached; beside each slide by default.
    #[arg(long, global = true, value_name = "DIR")]
    pub mask_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or reuse the tissue mask of every slide in a directory.
    Mask { slide_dir: PathBuf },
    /// Pre-chop baseline: write every tissue tile at level 0 as PNG.
    Chop {
        slide_dir: PathBuf,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1200)]
        tile_px: u32,
    },
    /// Run the pipeline with a simulated consumer and report checksums and
    /// timing.
    Stream { slide_dir: Option<PathBuf> },
    /// Compare pre-chop against on-the-fly streaming on one slide set.
    Bench {
        slide_dir: PathBuf,
        /// Scratch directory for chopped tiles and fresh masks.
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1200)]
        tile_px: u32,
    },
    /// Write synthetic slides with ground-truth tissue maps.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u32).range(512..))]
        size: u32,
        #[arg(long, default_value_t = 5)]
        blobs: usize,
    },
    /// Write the fixed prediction grid of one slide, without augmentation.
    Grid { slide: PathBuf, out_dir: PathBuf },
}

impl GlobalArgs {
    /// Defaults, then the config file, then these flags, then `slide_dir`.
    pub fn resolve(&self, slide_dir: Option<&Path>) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.spec.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.prefetch_depth {
            cfg.prefetch_depth = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.patch_size {
            cfg.spec.patch_size = v;
        }
        if let Some(v) = self.downsample {
            cfg.spec.downsample = v;
        }
        if let Some(v) = self.steps {
            cfg.total_steps = v;
        }
        if let Some(v) = self.ordered {
            cfg.ordered = v;
        }
        if let Some(v) = &self.mask_dir {
            cfg.mask_dir = Some(v.clone());
        }
        if let Some(dir) = slide_dir {
            cfg.slide_dir = dir.to_path_buf();
        }
        Ok(cfg)
    }
}

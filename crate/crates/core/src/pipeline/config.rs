//! Flat `key = value` configuration shared by the config file, CLI flags
//! and language bindings.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::sampler::{Anchor, PatchSpec, SlideWeighting};
use crate::tissue::MaskParams;

/// Every recognised key, in the order `to_pairs` emits them.
pub const CONFIG_KEYS: &[&str] = &[
    "slide_dir",
    "mask_dir",
    "patch_size_px",
    "downsample",
    "seed",
    "dihedral_enabled",
    "color_gain_range",
    "color_bias_range",
    "warp_grid",
    "warp_jitter_px",
    "batch_size",
    "workers",
    "prefetch_depth",
    "worker_priority",
    "total_steps",
    "ordered",
    "blur_radius",
    "erode_iters",
    "slide_weighting",
    "anchor",
];

/// Scheduling class of worker threads. A worker woken while the consumer
/// runs may preempt it for a full time slice when cores are scarce; below
/// normal priority it waits instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerPriority {
    Normal,
    /// Niceness 10.
    Low,
    /// Runs only when no normal thread wants the core.
    Idle,
}

impl WorkerPriority {
    pub fn as_str(self) -> &'static str {
        match self {
            WorkerPriority::Normal => "normal",
            WorkerPriority::Low => "low",
            WorkerPriority::Idle => "idle",
        }
    }
}

impl FromStr for WorkerPriority {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(WorkerPriority::Normal),
            "low" => Ok(WorkerPriority::Low),
            "idle" => Ok(WorkerPriority::Idle),
            other => Err(Error::Config(format!("worker_priority must be normal, low or idle, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub slide_dir: PathBuf,
    /// Where masks are cached; next to each slide when unset.
    pub mask_dir: Option<PathBuf>,
    pub spec: PatchSpec,
    pub augment: AugmentConfig,
    pub batch_size: usize,
    pub workers: usize,
    pub prefetch_depth: usize,
    pub worker_priority: WorkerPriority,
    pub total_steps: u64,
    pub ordered: bool,
    pub mask: MaskParams,
    pub slide_weighting: SlideWeighting,
    pub anchor: Anchor,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            slide_dir: PathBuf::new(),
            mask_dir: None,
            spec: PatchSpec {
                patch_size: 256,
                downsample: 1.0,
                seed: 0,
            },
            augment: AugmentConfig::default(),
            batch_size: 16,
            workers: std::thread::available_parallelism().map_or(4, |n| n.get()),
            prefetch_depth: 4,
            worker_priority: WorkerPriority::Idle,
            total_steps: 100,
            ordered: true,
            mask: MaskParams::default(),
            slide_weighting: SlideWeighting::TissueArea,
            anchor: Anchor::Center,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = `{value}`: {e}")))
}

fn parse_flag(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key} = `{value}`: expected true or false"))),
    }
}

impl PipelineConfig {
    /// Applies one key. Values are trimmed; an empty `mask_dir` or
    /// `warp_jitter_px` restores its default.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "slide_dir" => self.slide_dir = PathBuf::from(value),
            "mask_dir" => self.mask_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "patch_size_px" => self.spec.patch_size = parse(key, value)?,
            "downsample" => self.spec.downsample = parse(key, value)?,
            "seed" => self.spec.seed = parse(key, value)?,
            "dihedral_enabled" => self.augment.dihedral_enabled = parse_flag(key, value)?,
            "color_gain_range" => self.augment.color_gain_range = parse(key, value)?,
            "color_bias_range" => self.augment.color_bias_range = parse(key, value)?,
            "warp_grid" => self.augment.warp_grid = parse(key, value)?,
            "warp_jitter_px" => {
                self.augment.warp_jitter_px = if value.is_empty() { None } else { Some(parse(key, value)?) }
            }
            "batch_size" => self.batch_size = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "prefetch_depth" => self.prefetch_depth = parse(key, value)?,
            "worker_priority" => self.worker_priority = value.parse()?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "ordered" => self.ordered = parse_flag(key, value)?,
            "blur_radius" => self.mask.blur_radius = parse(key, value)?,
            "erode_iters" => self.mask.erode_iters = parse(key, value)?,
            "slide_weighting" => self.slide_weighting = value.parse()?,
            "anchor" => self.anchor = value.parse()?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: impl IntoIterator<Item = (K, V)>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.set(k.as_ref(), v.as_ref())?;
        }
        Ok(cfg)
    }

    /// Parses `key = value` lines. `#` starts a comment; blank lines are
    /// ignored.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }

    /// Current values under their config keys; `parse_text` of these lines
    /// reproduces `self`.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Path| p.to_string_lossy().into_owned();
        CONFIG_KEYS
            .iter()
            .map(|&k| {
                let v = match k {
                    "slide_dir" => path(&self.slide_dir),
                    "mask_dir" => self.mask_dir.as_deref().map(path).unwrap_or_default(),
                    "patch_size_px" => self.spec.patch_size.to_string(),
                    "downsample" => self.spec.downsample.to_string(),
                    "seed" => self.spec.seed.to_string(),
                    "dihedral_enabled" => self.augment.dihedral_enabled.to_string(),
                    "color_gain_range" => self.augment.color_gain_range.to_string(),
                    "color_bias_range" => self.augment.color_bias_range.to_string(),
                    "warp_grid" => self.augment.warp_grid.to_string(),
                    "warp_jitter_px" => self.augment.warp_jitter_px.map(|d| d.to_string()).unwrap_or_default(),
                    "batch_size" => self.batch_size.to_string(),
                    "workers" => self.workers.to_string(),
                    "prefetch_depth" => self.prefetch_depth.to_string(),
                    "worker_priority" => self.worker_priority.as_str().into(),
                    "total_steps" => self.total_steps.to_string(),
                    "ordered" => self.ordered.to_string(),
                    "blur_radius" => self.mask.blur_radius.to_string(),
                    "erode_iters" => self.mask.erode_iters.to_string(),
                    "slide_weighting" => match self.slide_weighting {
                        SlideWeighting::TissueArea => "area".into(),
                        SlideWeighting::Uniform => "uniform".into(),
                    },
                    "anchor" => match self.anchor {
                        Anchor::Center => "center".into(),
                        Anchor::Corner => "corner".into(),
                    },
                    _ => unreachable!("key list and match arms out of sync"),
                };
                (k, v)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.slide_dir.as_os_str().is_empty() {
            return Err(Error::Config("slide_dir is not set".into()));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("workers", self.workers),
            ("prefetch_depth", self.prefetch_depth),
            ("total_steps", self.total_steps as usize),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        self.spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.augment.validate()
    }
}

//! JSON report schemas. Times are seconds, sizes are bytes.

use serde::{Deserialize, Serialize};
use slidefetch::PipelineStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChopReport {
    pub wall_time_s: f64,
    pub bytes_written: u64,
    pub patches_written: u64,
    pub slides_processed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub chop: ChopReport,
    pub fetch_startup_s: f64,
    pub fetch_extra_bytes: u64,
    /// `chop.wall_time_s / fetch_startup_s`.
    pub startup_speedup: f64,
    /// `chop.bytes_written / fetch_extra_bytes`.
    pub disk_ratio: f64,
    pub mean_step_s_prechop: f64,
    pub stdev_step_s_prechop: f64,
    pub mean_step_s_fetch: f64,
    pub stdev_step_s_fetch: f64,
    pub consumer_ms: f64,
    pub steps: u64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub batches_delivered: u64,
    pub consumer_blocked_time: f64,
    pub producer_idle_time: f64,
    pub mean_batch_latency: f64,
    pub mean_batch_build_time: f64,
    pub peak_buffered: usize,
}

impl From<PipelineStats> for StatsReport {
    fn from(s: PipelineStats) -> Self {
        Self {
            batches_delivered: s.batches_delivered,
            consumer_blocked_time: s.consumer_blocked_time,
            producer_idle_time: s.producer_idle_time,
            mean_batch_latency: s.mean_batch_latency,
            mean_batch_build_time: s.mean_batch_build_time,
            peak_buffered: s.peak_buffered,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLine {
    pub step: u64,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub startup_s: f64,
    pub wall_time_s: f64,
    pub consumer_ms: f64,
    pub mean_step_s: f64,
    pub stdev_step_s: f64,
    /// Steps excluded from the `*_after_warmup` fields.
    pub warmup_steps: u64,
    pub blocked_after_warmup_s: f64,
    pub wall_after_warmup_s: f64,
    pub stats: StatsReport,
    pub batches: Vec<BatchLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskLine {
    pub slide_id: String,
    pub mask_path: Option<String>,
    /// `built` or `cached`.
    pub source: Option<String>,
    pub tissue_fraction: Option<f64>,
    pub otsu_threshold: Option<u8>,
    pub mask_bytes: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub slides: Vec<MaskLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLine {
    pub slide: String,
    pub truth: String,
    pub tissue_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub slides: Vec<SynthLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub slide_id: String,
    pub patches_written: u64,
    pub bytes_written: u64,
    pub files: Vec<String>,
}

/// Mean and sample standard deviation; zeros for fewer than two values.
pub fn mean_stdev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `num / den`, or 0 when the denominator is zero so that reports stay
/// finite.
pub fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

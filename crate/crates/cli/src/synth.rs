use std::path::Path;

use slidefetch::seed::derive;
use slidefetch::slide::synth_slide;
use slidefetch::tissue::encode_mask_png;
use slidefetch::{Error, Result, TissueMask};

use crate::report::{SynthLine, SynthReport};

pub const MIN_SIZE: u32 = 512;

/// Writes `synth_NNN.tif` slides and their `synth_NNN.truth.png`
/// full-resolution tissue maps. Slide `i` uses a seed derived from
/// `(seed, i)`.
pub fn cmd_synth(out_dir: &Path, count: usize, seed: u64, size: u32, blobs: usize) -> Result<SynthReport> {
    if size < MIN_SIZE {
        return Err(Error::Config(format!("size {size} is below the minimum of {MIN_SIZE}")));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut slides = Vec::with_capacity(count);
    for i in 0..count {
        let slide = out_dir.join(format!("synth_{i:03}.tif"));
        let truth_path = out_dir.join(format!("synth_{i:03}.truth.png"));
        let synth = synth_slide(&slide, derive(seed, i as u64), size, size, blobs)?;
        let truth = TissueMask::new(synth.truth.clone(), 1.0)?;
        std::fs::write(&truth_path, encode_mask_png(&truth)?)?;
        slides.push(SynthLine {
            slide: slide.display().to_string(),
            truth: truth_path.display().to_string(),
            tissue_fraction: synth.tissue_fraction(),
        });
    }
    Ok(SynthReport { slides })
}

use slidefetch::pipeline::list_slides;
use slidefetch::tissue::{load_or_build_mask, mask_path_for, MaskSource};
use slidefetch::{Error, PipelineConfig, Result, SlidePyramid};

use crate::report::{MaskLine, MaskReport};

/// Builds or reuses each slide's mask. Per-slide failures are recorded in
/// the report rather than stopping the run.
pub fn cmd_mask(cfg: &PipelineConfig) -> Result<MaskReport> {
    let paths = list_slides(&cfg.slide_dir)?;
    if paths.is_empty() {
        return Err(Error::NoSlides(cfg.slide_dir.display().to_string()));
    }
    let mut slides = Vec::with_capacity(paths.len());
    for path in paths {
        let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let outcome = SlidePyramid::open(&path).and_then(|slide| {
            let mask_path = mask_path_for(&slide, cfg.mask_dir.as_deref());
            let (build, source) = load_or_build_mask(&slide, cfg.mask, &mask_path)?;
            let bytes = std::fs::metadata(&mask_path)?.len();
            Ok((mask_path, build, source, bytes))
        });
        let line = match outcome {
            Ok((mask_path, build, source, bytes)) => {
                let source = match source {
                    MaskSource::Built => "built",
                    MaskSource::Cached => "cached",
                };
                eprintln!("{id}: tissue {:.4} ({source})", build.mask.tissue_fraction());
                MaskLine {
                    slide_id: id,
                    mask_path: Some(mask_path.display().to_string()),
                    source: Some(source.into()),
                    tissue_fraction: Some(build.mask.tissue_fraction()),
                    otsu_threshold: build.threshold,
                    mask_bytes: Some(bytes),
                    error: None,
                }
            }
            Err(e) => {
                eprintln!("{id}: failed: {e}");
                MaskLine {
                    slide_id: id,
                    mask_path: None,
                    source: None,
                    tissue_fraction: None,
                    otsu_threshold: None,
                    mask_bytes: None,
                    error: Some(format!("{}: {e}", e.name())),
                }
            }
        };
        slides.push(line);
    }
    Ok(MaskReport { slides })
}

use std::path::Path;

use slidefetch::sampler::{extract_patch, grid_coordinates};
use slidefetch::tissue::{load_or_build_mask, mask_path_for};
use slidefetch::{PipelineConfig, Result, SlidePyramid};

use crate::chop::tile_name;
use crate::pngio::write_rgb;
use crate::report::GridReport;

/// Writes the fixed prediction grid of `slide` at the configured patch
/// spec, in row-major order, without augmentation. File names carry the
/// level-0 top-left corner of each grid cell.
pub fn cmd_grid(slide_path: &Path, cfg: &PipelineConfig, out_dir: &Path) -> Result<GridReport> {
    cfg.spec.validate()?;
    let slide = SlidePyramid::open(slide_path)?;
    let mask_path = mask_path_for(&slide, cfg.mask_dir.as_deref());
    let (build, _) = load_or_build_mask(&slide, cfg.mask, &mask_path)?;
    let tiles = grid_coordinates(&slide, &build.mask, &cfg.spec)?;
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::with_capacity(tiles.len());
    let mut bytes_written = 0;
    for t in &tiles {
        let patch = extract_patch(&slide, t.center(), &cfg.spec)?;
        let name = tile_name(slide.slide_id(), t.x, t.y);
        bytes_written += write_rgb(&out_dir.join(&name), &patch.pixels)?;
        files.push(name);
    }
    Ok(GridReport {
        slide_id: slide.slide_id().to_string(),
        patches_written: files.len() as u64,
        bytes_written,
        files,
    })
}

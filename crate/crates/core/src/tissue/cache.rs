//! On-disk mask cache keyed by the thumbnail level's content hash.

use std::path::{Path, PathBuf};

use super::png::{decode_mask_png_with_text, encode_mask_png_with_text};
use super::{build_mask, MaskBuild, MaskParams};
use crate::error::Result;
use crate::slide::SlidePyramid;

const HASH_KEY: &str = "slide_hash";
const PARAMS_KEY: &str = "mask_params";
const THRESHOLD_KEY: &str = "otsu_threshold";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSource {
    Built,
    Cached,
}

/// `<mask_dir>/<slide_id>.mask.png`, or beside the slide when no directory
/// is configured.
pub fn mask_path_for(slide: &SlidePyramid, mask_dir: Option<&Path>) -> PathBuf {
    let dir = mask_dir
        .map(Path::to_path_buf)
        .or_else(|| slide.path().parent().map(Path::to_path_buf))
        .unwrap_or_default();
    dir.join(format!("{}.mask.png", slide.slide_id()))
}

fn params_text(p: MaskParams) -> String {
    format!("blur_radius={};erode_iters={}", p.blur_radius, p.erode_iters)
}

/// Returns the cached mask at `path` if it was built from the same
/// thumbnail pixels with the same parameters; otherwise builds the mask and
/// (re)writes the file.
pub fn load_or_build_mask(
    slide: &SlidePyramid,
    params: MaskParams,
    path: &Path,
) -> Result<(MaskBuild, MaskSource)> {
    let hash = slide.level_fingerprint(slide.thumbnail_level())?;
    let params_txt = params_text(params);

    if let Ok(bytes) = std::fs::read(path) {
        match decode_mask_png_with_text(&bytes) {
            Ok((mask, text)) => {
                let get = |k: &str| text.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
                if get(HASH_KEY) == Some(hash.as_str()) && get(PARAMS_KEY) == Some(params_txt.as_str()) {
                    let threshold = get(THRESHOLD_KEY).and_then(|t| t.parse::<u8>().ok());
                    return Ok((
                        MaskBuild {
                            mask,
                            threshold,
                            degenerate: threshold.is_none(),
                        },
                        MaskSource::Cached,
                    ));
                }
                log::info!("{}: mask cache is stale, rebuilding", slide.slide_id());
            }
            Err(e) => log::warn!("{}: ignoring unreadable mask {}: {e}", slide.slide_id(), path.display()),
        }
    }

    let built = build_mask(slide, params)?;
    if built.degenerate {
        log::warn!(
            "{}: thumbnail histogram is degenerate, mask is empty",
            slide.slide_id()
        );
    }
    let threshold = built.threshold.map(|t| t.to_string()).unwrap_or_else(|| "none".into());
    let bytes = encode_mask_png_with_text(
        &built.mask,
        &[(HASH_KEY, &hash), (PARAMS_KEY, &params_txt), (THRESHOLD_KEY, &threshold)],
    )?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok((built, MaskSource::Built))
}

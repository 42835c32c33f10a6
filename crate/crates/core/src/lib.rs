//! On-the-fly patch extraction from gigapixel pyramidal whole-slide images.
//!
//! Slides are tiled RGB TIFF pyramids. A low-resolution tissue mask is
//! computed once per slide (blur, Otsu threshold, erosion) and cached as a
//! 2-bit PNG. Patch centers are then drawn uniformly over tissue, read from
//! the best pyramid level, resized, augmented, and handed to a consumer
//! through a bounded prefetching pipeline that is counted in steps rather
//! than epochs.

pub mod augment;
pub mod error;
pub mod pipeline;
pub mod raster;
pub mod sampler;
pub mod seed;
pub mod slide;
pub mod tissue;

pub use error::{Error, Result};
pub use pipeline::{Batch, Pipeline, PipelineConfig, PipelineStats};

pub use raster::RgbImage;
pub use slide::{LevelInfo, Patch, PixelRegion, SlidePyramid};
pub use tissue::TissueMask;

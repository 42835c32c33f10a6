use std::sync::Arc;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed TIFF header: {0}")]
    MalformedHeader(String),
    #[error("unsupported TIFF layout: {0}")]
    UnsupportedTag(String),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("region out of bounds: {0}")]
    OutOfBounds(String),
    #[error("tile decode failed: {0}")]
    DecodeFailure(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("histogram has a single populated bin; no separable classes")]
    DegenerateHistogram,
    #[error("not a PNG file")]
    NotAPng,
    #[error("mask PNG must be 2-bit grayscale, found {0}")]
    WrongBitDepth(String),
    #[error("malformed mask file: {0}")]
    MaskFormat(String),
    #[error("no tissue: {0}")]
    NoTissue(String),
    #[error("invalid dihedral code {0}, expected 0..=7")]
    InvalidCode(u8),
    #[error("warp control grid folds (a destination triangle has non-positive area)")]
    FoldedGrid,
    #[error("no slides found in {0}")]
    NoSlides(String),
    #[error("end of stream")]
    EndOfStream,
    #[error("worker failed: {0}")]
    WorkerFailure(#[source] Arc<Error>),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Stable variant name, used when errors cross a process or language
    /// boundary.
    pub fn name(&self) -> &'static str {
        match self {
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::UnsupportedTag(_) => "UnsupportedTag",
            Error::TruncatedFile(_) => "TruncatedFile",
            Error::OutOfBounds(_) => "OutOfBounds",
            Error::DecodeFailure(_) => "DecodeFailure",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "IoFailure",
            Error::DegenerateHistogram => "DegenerateHistogram",
            Error::NotAPng => "NotAPng",
            Error::WrongBitDepth(_) => "WrongBitDepth",
            Error::MaskFormat(_) => "MaskFormat",
            Error::NoTissue(_) => "NoTissue",
            Error::InvalidCode(_) => "InvalidCode",
            Error::FoldedGrid => "FoldedGrid",
            Error::NoSlides(_) => "NoSlides",
            Error::EndOfStream => "EndOfStream",
            Error::WorkerFailure(_) => "WorkerFailure",
            Error::Config(_) => "Config",
        }
    }
}

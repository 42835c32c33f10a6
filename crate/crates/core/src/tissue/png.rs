//! 2-bit grayscale PNG mask files.
//!
//! Pixel value 0 is background and 3 is tissue (1 and 2 are reserved and
//! read as background). The mask downsample travels in a `tEXt` chunk keyed
//! `mask_downsample`, written as the shortest decimal that round-trips.

use std::io::Cursor;

use png::{BitDepth, ColorType, Decoder, Encoder, Transformations};

use super::TissueMask;
use crate::error::{Error, Result};
use crate::raster::BitMap;

pub const PNG_SIGNATURE: [u8; 8] = [0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A];
pub const DOWNSAMPLE_KEY: &str = "mask_downsample";

const TISSUE: u8 = 3;

pub fn encode_mask_png(mask: &TissueMask) -> Result<Vec<u8>> {
    encode_mask_png_with_text(mask, &[])
}

/// Encodes `mask` with additional `tEXt` entries after `mask_downsample`.
pub fn encode_mask_png_with_text(mask: &TissueMask, extra: &[(&str, &str)]) -> Result<Vec<u8>> {
    let (w, h) = (mask.width(), mask.height());
    let stride = (w as usize).div_ceil(4);
    let mut packed = vec![0u8; stride * h as usize];
    for y in 0..h {
        let row = &mut packed[y as usize * stride..(y as usize + 1) * stride];
        for x in 0..w {
            if mask.is_tissue(x, y) {
                row[x as usize / 4] |= TISSUE << (6 - 2 * (x % 4));
            }
        }
    }

    let mut out = Vec::new();
    let mut enc = Encoder::new(&mut out, w, h);
    enc.set_color(ColorType::Grayscale);
    enc.set_depth(BitDepth::Two);
    enc.set_compression(png::Compression::Balanced);
    enc.add_text_chunk(DOWNSAMPLE_KEY.into(), format!("{}", mask.mask_downsample()))
        .map_err(png_err)?;
    for (k, v) in extra {
        enc.add_text_chunk((*k).into(), (*v).into()).map_err(png_err)?;
    }
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&packed).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(out)
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<TissueMask> {
    decode_mask_png_with_text(bytes).map(|(m, _)| m)
}

/// Decodes a mask along with every `tEXt` entry in the file.
pub fn decode_mask_png_with_text(bytes: &[u8]) -> Result<(TissueMask, Vec<(String, String)>)> {
    if bytes.len() < 8 || bytes[..8] != PNG_SIGNATURE {
        return Err(Error::NotAPng);
    }
    let mut dec = Decoder::new(Cursor::new(bytes));
    dec.set_transformations(Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| Error::MaskFormat(e.to_string()))?;
    let info = reader.info();
    if info.bit_depth != BitDepth::Two || info.color_type != ColorType::Grayscale {
        return Err(Error::WrongBitDepth(format!(
            "{:?} bit {:?}",
            info.bit_depth as u8, info.color_type
        )));
    }
    let (w, h) = (info.width, info.height);
    let text: Vec<(String, String)> = info
        .uncompressed_latin1_text
        .iter()
        .map(|c| (c.keyword.clone(), c.text.clone()))
        .collect();
    let downsample = text
        .iter()
        .find(|(k, _)| k == DOWNSAMPLE_KEY)
        .ok_or_else(|| Error::MaskFormat(format!("missing {DOWNSAMPLE_KEY} text chunk")))?
        .1
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::MaskFormat(format!("{DOWNSAMPLE_KEY}: {e}")))?;

    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::MaskFormat("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::MaskFormat(e.to_string()))?;
    let stride = frame.line_size;
    let mut bits = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h as usize {
        let row = &buf[y * stride..(y + 1) * stride];
        for x in 0..w as usize {
            let v = (row[x / 4] >> (6 - 2 * (x % 4))) & 0b11;
            bits.push(v == TISSUE);
        }
    }
    let mask = TissueMask::new(BitMap::from_bits(w, h, bits)?, downsample)
        .map_err(|e| Error::MaskFormat(e.to_string()))?;
    Ok((mask, text))
}

fn png_err(e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(io) => Error::Io(io),
        other => Error::InvalidInput(format!("PNG encoding: {other}")),
    }
}

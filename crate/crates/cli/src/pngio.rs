//! 8-bit RGB PNG files for chopped tiles and grid patches.

use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Decoder, Encoder, Transformations};
use slidefetch::raster::RgbImage;
use slidefetch::{Error, Result};

pub fn encode_rgb(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = Encoder::new(&mut out, img.width, img.height);
    enc.set_color(ColorType::Rgb);
    enc.set_depth(BitDepth::Eight);
    enc.set_compression(png::Compression::Balanced);
    let mut w = enc.write_header().map_err(encode_err)?;
    w.write_image_data(&img.data).map_err(encode_err)?;
    w.finish().map_err(encode_err)?;
    Ok(out)
}

/// Writes `img` and returns the file size.
pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<u64> {
    let bytes = encode_rgb(img)?;
    std::fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage> {
    let mut dec = Decoder::new(Cursor::new(bytes));
    dec.set_transformations(Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| Error::DecodeFailure(e.to_string()))?;
    let info = reader.info();
    if info.color_type != ColorType::Rgb || info.bit_depth != BitDepth::Eight {
        return Err(Error::DecodeFailure(format!(
            "expected 8-bit RGB PNG, found {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (w, h) = (info.width, info.height);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::DecodeFailure("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::DecodeFailure(e.to_string()))?;
    buf.truncate(frame.buffer_size());
    RgbImage::from_raw(w, h, buf)
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    decode_rgb(&std::fs::read(path)?)
}

fn encode_err(e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(io) => Error::Io(io),
        other => Error::InvalidInput(format!("PNG encoding: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let data: Vec<u8> = (0..37 * 11 * 3).map(|i| (i * 31 % 256) as u8).collect();
        let img = RgbImage::from_raw(37, 11, data).unwrap();
        assert_eq!(decode_rgb(&encode_rgb(&img).unwrap()).unwrap(), img);
    }
}

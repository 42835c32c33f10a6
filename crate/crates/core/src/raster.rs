//! Interleaved 8-bit RGB buffers and the resampling kernels shared by the
//! pyramid writer, the mask builder and patch extraction.

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    /// Row-major, 3 bytes per pixel.
    pub data: Vec<u8>,
}

impl std::fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RgbImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("bytes", &self.data.len())
            .finish()
    }
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if width == 0 || height == 0 || data.len() != expected {
            return Err(Error::InvalidInput(format!(
                "{width}x{height} RGB image needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn crop(&self, x: u32, y: u32, width: u32, height: u32) -> Result<RgbImage> {
        if width == 0
            || height == 0
            || x as u64 + width as u64 > self.width as u64
            || y as u64 + height as u64 > self.height as u64
        {
            return Err(Error::OutOfBounds(format!(
                "crop {width}x{height}+{x}+{y} of {}x{}",
                self.width, self.height
            )));
        }
        let row = width as usize * 3;
        let mut data = Vec::with_capacity(row * height as usize);
        for yy in y..y + height {
            let start = (yy as usize * self.width as usize + x as usize) * 3;
            data.extend_from_slice(&self.data[start..start + row]);
        }
        Ok(RgbImage { width, height, data })
    }
}

/// Row-major 8-bit single-channel map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl GrayMap {
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidInput(format!(
                "{width}x{height} map needs {} bytes, got {}",
                width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

/// Row-major binary map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMap {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BitMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::InvalidInput(format!(
                "{width}x{height} bitmap needs {} entries, got {}",
                width as usize * height as usize,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BitMap) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Averages `factor`×`factor` blocks. Output dimensions are
/// `ceil(dim / factor)`; blocks clipped by the right or bottom edge average
/// only the pixels they cover. Means are rounded half up.
pub fn box_downsample(src: &RgbImage, factor: u32) -> RgbImage {
    assert!(factor >= 1);
    if factor == 1 {
        return src.clone();
    }
    let out_w = src.width.div_ceil(factor);
    let out_h = src.height.div_ceil(factor);
    let mut out = RgbImage::new(out_w, out_h);
    let sw = src.width as usize;
    let f = factor as usize;
    let mut sums = vec![0u32; out_w as usize * 3];
    for oy in 0..out_h as usize {
        sums.iter_mut().for_each(|s| *s = 0);
        let y0 = oy * f;
        let y1 = (y0 + f).min(src.height as usize);
        for y in y0..y1 {
            let row = &src.data[y * sw * 3..(y + 1) * sw * 3];
            for (x, px) in row.chunks_exact(3).enumerate() {
                let o = (x / f) * 3;
                sums[o] += px[0] as u32;
                sums[o + 1] += px[1] as u32;
                sums[o + 2] += px[2] as u32;
            }
        }
        let rows = (y1 - y0) as u32;
        for ox in 0..out_w as usize {
            let cols = ((ox * f + f).min(sw) - ox * f) as u32;
            let n = rows * cols;
            let o = (oy * out_w as usize + ox) * 3;
            for c in 0..3 {
                out.data[o + c] = ((sums[ox * 3 + c] + n / 2) / n) as u8;
            }
        }
    }
    out
}

/// Bilinear resize with pixel-center alignment and edge clamping.
pub fn bilinear_resize(src: &RgbImage, out_w: u32, out_h: u32) -> RgbImage {
    let mut out = RgbImage::new(out_w, out_h);
    let sx = src.width as f64 / out_w as f64;
    let sy = src.height as f64 / out_h as f64;
    let max_x = (src.width - 1) as f64;
    let max_y = (src.height - 1) as f64;
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            out.put_pixel(ox, oy, sample_bilinear(src, fx, fy));
        }
    }
    out
}

/// Samples at a continuous position in pixel-center coordinates. The
/// position must lie within `[0, width-1] × [0, height-1]`.
#[inline]
pub fn sample_bilinear(src: &RgbImage, fx: f64, fy: f64) -> [u8; 3] {
    let x0 = (fx.floor() as u32).min(src.width - 1);
    let y0 = (fy.floor() as u32).min(src.height - 1);
    let x1 = (x0 + 1).min(src.width - 1);
    let y1 = (y0 + 1).min(src.height - 1);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let p00 = src.pixel(x0, y0);
    let p10 = src.pixel(x1, y0);
    let p01 = src.pixel(x0, y1);
    let p11 = src.pixel(x1, y1);
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - tx) + p10[c] as f64 * tx;
        let bottom = p01[c] as f64 * (1.0 - tx) + p11[c] as f64 * tx;
        out[c] = (top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_downsample_partial_blocks() {
        // 3x1 image, factor 2: [10, 20] -> 15, [30] -> 30
        let img = RgbImage::from_raw(3, 1, vec![10, 10, 10, 20, 20, 20, 30, 30, 30]).unwrap();
        let out = box_downsample(&img, 2);
        assert_eq!((out.width, out.height), (2, 1));
        assert_eq!(out.pixel(0, 0), [15, 15, 15]);
        assert_eq!(out.pixel(1, 0), [30, 30, 30]);
    }

    #[test]
    fn bilinear_same_size_is_identity() {
        let data: Vec<u8> = (0..5 * 4 * 3).map(|i| (i * 7 % 251) as u8).collect();
        let img = RgbImage::from_raw(5, 4, data).unwrap();
        assert_eq!(bilinear_resize(&img, 5, 4), img);
    }

    #[test]
    fn crop_bounds() {
        let img = RgbImage::new(4, 4);
        assert!(img.crop(2, 2, 2, 2).is_ok());
        assert!(matches!(img.crop(3, 0, 2, 1), Err(Error::OutOfBounds(_))));
    }
}

use std::fs::File;
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use flate2::write::ZlibEncoder;

use super::tiff::{self, ByteOrder};
use super::Compression;
use crate::error::{Error, Result};
use crate::raster::RgbImage;

#[derive(Debug, Clone, Copy)]
pub struct WriteOptions {
    /// Must be a positive multiple of 16.
    pub tile_width: u32,
    /// Must be a positive multiple of 16.
    pub tile_height: u32,
    pub compression: Compression,
}

impl Default for WriteOptions {
    fn default() -> Self {
        Self {
            tile_width: 256,
            tile_height: 256,
            compression: Compression::Deflate,
        }
    }
}

/// Writes `levels` (largest first) as one little-endian tiled TIFF, one IFD
/// per level.
pub fn write_pyramid(path: impl AsRef<Path>, levels: &[RgbImage], opts: &WriteOptions) -> Result<()> {
    write_pyramid_with_order(path, levels, opts, ByteOrder::LittleEndian)
}

/// [`write_pyramid`] with an explicit byte order.
pub fn write_pyramid_with_order(
    path: impl AsRef<Path>,
    levels: &[RgbImage],
    opts: &WriteOptions,
    order: ByteOrder,
) -> Result<()> {
    validate(levels, opts)?;

    let file = File::create(path.as_ref())?;
    let mut out = CountingWriter::new(BufWriter::new(file));
    let magic: &[u8; 2] = match order {
        ByteOrder::LittleEndian => b"II",
        ByteOrder::BigEndian => b"MM",
    };
    out.write_all(magic)?;
    out.write_all(&order.put_u16(42))?;
    out.write_all(&order.put_u32(0))?; // patched once the IFD position is known

    let mut tables = Vec::with_capacity(levels.len());
    for level in levels {
        let tiles = encode_level(level, opts)?;
        let mut offsets = Vec::with_capacity(tiles.len());
        let mut counts = Vec::with_capacity(tiles.len());
        for tile in tiles {
            offsets.push(checked_u32(out.pos)?);
            counts.push(tile.len() as u32);
            out.write_all(&tile)?;
        }
        tables.push((offsets, counts));
    }
    if out.pos % 2 == 1 {
        out.write_all(&[0])?;
    }

    let first_ifd = checked_u32(out.pos)?;
    for (i, (level, (offsets, counts))) in levels.iter().zip(&tables).enumerate() {
        let last = i + 1 == levels.len();
        write_ifd(&mut out, order, level, opts, i > 0, offsets, counts, last)?;
    }
    checked_u32(out.pos)?;

    let mut inner = out.inner;
    inner.seek(SeekFrom::Start(4))?;
    inner.write_all(&order.put_u32(first_ifd))?;
    inner.flush()?;
    Ok(())
}

fn validate(levels: &[RgbImage], opts: &WriteOptions) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidInput("pyramid needs at least one level".into()));
    }
    for (name, v) in [("tile width", opts.tile_width), ("tile height", opts.tile_height)] {
        if v == 0 || v % 16 != 0 {
            return Err(Error::InvalidInput(format!(
                "{name} {v} must be a positive multiple of 16"
            )));
        }
    }
    for (i, l) in levels.iter().enumerate() {
        if l.width == 0 || l.height == 0 || l.data.len() != l.width as usize * l.height as usize * 3 {
            return Err(Error::InvalidInput(format!(
                "level {i}: {}x{} with {} bytes is not a 3-channel 8-bit buffer",
                l.width,
                l.height,
                l.data.len()
            )));
        }
    }
    for (i, pair) in levels.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        let fits = (2..=a.width.max(a.height))
            .any(|f| a.width.div_ceil(f) == b.width && a.height.div_ceil(f) == b.height);
        if !fits {
            return Err(Error::InvalidInput(format!(
                "level {} ({}x{}) is not ceil(level {i} / f) for any integer f >= 2 (level {i} is {}x{})",
                i + 1,
                b.width,
                b.height,
                a.width,
                a.height
            )));
        }
    }
    Ok(())
}

fn checked_u32(pos: u64) -> Result<u32> {
    u32::try_from(pos).map_err(|_| {
        Error::InvalidInput("pyramid exceeds 4 GiB, which classic TIFF cannot address".into())
    })
}

/// Cuts a level into full-size tiles (edge tiles zero-padded) and encodes
/// them. Tiles are compressed on all available cores.
fn encode_level(level: &RgbImage, opts: &WriteOptions) -> Result<Vec<Vec<u8>>> {
    let (tw, th) = (opts.tile_width, opts.tile_height);
    let across = level.width.div_ceil(tw);
    let down = level.height.div_ceil(th);
    let count = across as usize * down as usize;
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(count);
    let chunk = count.div_ceil(threads);

    let mut tiles: Vec<Vec<u8>> = vec![Vec::new(); count];
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = tiles
            .chunks_mut(chunk)
            .enumerate()
            .map(|(c, slots)| {
                scope.spawn(move || -> Result<()> {
                    for (k, slot) in slots.iter_mut().enumerate() {
                        let index = c * chunk + k;
                        let tx = index as u32 % across;
                        let ty = index as u32 / across;
                        let raw = cut_tile(level, tx * tw, ty * th, tw, th);
                        *slot = match opts.compression {
                            Compression::None => raw,
                            Compression::Deflate => {
                                let mut enc = ZlibEncoder::new(
                                    Vec::with_capacity(raw.len() / 2),
                                    flate2::Compression::fast(),
                                );
                                enc.write_all(&raw)?;
                                enc.finish()?
                            }
                        };
                    }
                    Ok(())
                })
            })
            .collect();
        for h in handles {
            h.join().expect("tile encoder panicked")?;
        }
        Ok(())
    })?;
    Ok(tiles)
}

fn cut_tile(level: &RgbImage, x0: u32, y0: u32, tw: u32, th: u32) -> Vec<u8> {
    let mut tile = vec![0u8; tw as usize * th as usize * 3];
    let w = (level.width - x0).min(tw) as usize;
    let h = (level.height - y0).min(th);
    for y in 0..h {
        let src = ((y0 + y) as usize * level.width as usize + x0 as usize) * 3;
        let dst = y as usize * tw as usize * 3;
        tile[dst..dst + w * 3].copy_from_slice(&level.data[src..src + w * 3]);
    }
    tile
}

#[allow(clippy::too_many_arguments)]
fn write_ifd<W: Write>(
    out: &mut CountingWriter<W>,
    order: ByteOrder,
    level: &RgbImage,
    opts: &WriteOptions,
    reduced: bool,
    offsets: &[u32],
    counts: &[u32],
    last: bool,
) -> Result<()> {
    const N_ENTRIES: u64 = 12;
    let ifd_start = out.pos;
    let ifd_len = 2 + 12 * N_ENTRIES + 4;
    // Out-of-line data follows the IFD: BitsPerSample, then the tile arrays.
    let bits_at = ifd_start + ifd_len;
    let array_len = 4 * offsets.len() as u64;
    let offsets_at = bits_at + 6;
    let counts_at = offsets_at + array_len;
    let mut end = counts_at + array_len;
    if end % 2 == 1 {
        end += 1;
    }
    let tiles_inline = offsets.len() == 1;

    let short = |tag: u16, v: u16| -> Vec<u8> {
        let mut e = Vec::with_capacity(12);
        e.extend(order.put_u16(tag));
        e.extend(order.put_u16(tiff::TYPE_SHORT));
        e.extend(order.put_u32(1));
        e.extend(order.put_u16(v));
        e.extend([0, 0]);
        e
    };
    let long = |tag: u16, count: u32, v: u32| -> Vec<u8> {
        let mut e = Vec::with_capacity(12);
        e.extend(order.put_u16(tag));
        e.extend(order.put_u16(tiff::TYPE_LONG));
        e.extend(order.put_u32(count));
        e.extend(order.put_u32(v));
        e
    };
    let bits = {
        let mut e = Vec::with_capacity(12);
        e.extend(order.put_u16(tiff::TAG_BITS_PER_SAMPLE));
        e.extend(order.put_u16(tiff::TYPE_SHORT));
        e.extend(order.put_u32(3));
        e.extend(order.put_u32(checked_u32(bits_at)?));
        e
    };
    let n = offsets.len() as u32;
    let (off_v, cnt_v) = if tiles_inline {
        (offsets[0], counts[0])
    } else {
        (checked_u32(offsets_at)?, checked_u32(counts_at)?)
    };
    let entries = [
        long(tiff::TAG_NEW_SUBFILE_TYPE, 1, reduced as u32),
        long(tiff::TAG_IMAGE_WIDTH, 1, level.width),
        long(tiff::TAG_IMAGE_LENGTH, 1, level.height),
        bits,
        short(tiff::TAG_COMPRESSION, opts.compression.tiff_code()),
        short(tiff::TAG_PHOTOMETRIC, 2),
        short(tiff::TAG_SAMPLES_PER_PIXEL, 3),
        short(tiff::TAG_PLANAR_CONFIGURATION, 1),
        long(tiff::TAG_TILE_WIDTH, 1, opts.tile_width),
        long(tiff::TAG_TILE_LENGTH, 1, opts.tile_height),
        long(tiff::TAG_TILE_OFFSETS, n, off_v),
        long(tiff::TAG_TILE_BYTE_COUNTS, n, cnt_v),
    ];
    debug_assert_eq!(entries.len() as u64, N_ENTRIES);

    out.write_all(&order.put_u16(N_ENTRIES as u16))?;
    for e in &entries {
        out.write_all(e)?;
    }
    let next = if last { 0 } else { checked_u32(end)? };
    out.write_all(&order.put_u32(next))?;
    for _ in 0..3 {
        out.write_all(&order.put_u16(8))?;
    }
    if !tiles_inline {
        for &o in offsets {
            out.write_all(&order.put_u32(o))?;
        }
        for &c in counts {
            out.write_all(&order.put_u32(c))?;
        }
    }
    while out.pos < end {
        out.write_all(&[0])?;
    }
    Ok(())
}

struct CountingWriter<W> {
    inner: W,
    pos: u64,
}

impl<W: Write> CountingWriter<W> {
    fn new(inner: W) -> Self {
        Self { inner, pos: 0 }
    }
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.pos += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

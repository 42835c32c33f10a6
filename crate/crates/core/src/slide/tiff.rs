//! Minimal baseline-TIFF directory parsing for tiled 8-bit RGB pyramids.

use std::collections::HashMap;
use std::collections::HashSet;

use crate::error::{Error, Result};

pub(crate) const TAG_NEW_SUBFILE_TYPE: u16 = 254;
pub(crate) const TAG_IMAGE_WIDTH: u16 = 256;
pub(crate) const TAG_IMAGE_LENGTH: u16 = 257;
pub(crate) const TAG_BITS_PER_SAMPLE: u16 = 258;
pub(crate) const TAG_COMPRESSION: u16 = 259;
pub(crate) const TAG_PHOTOMETRIC: u16 = 262;
pub(crate) const TAG_STRIP_OFFSETS: u16 = 273;
pub(crate) const TAG_SAMPLES_PER_PIXEL: u16 = 277;
pub(crate) const TAG_PLANAR_CONFIGURATION: u16 = 284;
pub(crate) const TAG_PREDICTOR: u16 = 317;
pub(crate) const TAG_TILE_WIDTH: u16 = 322;
pub(crate) const TAG_TILE_LENGTH: u16 = 323;
pub(crate) const TAG_TILE_OFFSETS: u16 = 324;
pub(crate) const TAG_TILE_BYTE_COUNTS: u16 = 325;
pub(crate) const TAG_SAMPLE_FORMAT: u16 = 339;

pub(crate) const TYPE_BYTE: u16 = 1;
pub(crate) const TYPE_SHORT: u16 = 3;
pub(crate) const TYPE_LONG: u16 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    LittleEndian,
    BigEndian,
}

impl ByteOrder {
    pub(crate) fn u16(self, b: &[u8]) -> u16 {
        let a = [b[0], b[1]];
        match self {
            ByteOrder::LittleEndian => u16::from_le_bytes(a),
            ByteOrder::BigEndian => u16::from_be_bytes(a),
        }
    }

    pub(crate) fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            ByteOrder::LittleEndian => u32::from_le_bytes(a),
            ByteOrder::BigEndian => u32::from_be_bytes(a),
        }
    }

    pub(crate) fn put_u16(self, v: u16) -> [u8; 2] {
        match self {
            ByteOrder::LittleEndian => v.to_le_bytes(),
            ByteOrder::BigEndian => v.to_be_bytes(),
        }
    }

    pub(crate) fn put_u32(self, v: u32) -> [u8; 4] {
        match self {
            ByteOrder::LittleEndian => v.to_le_bytes(),
            ByteOrder::BigEndian => v.to_be_bytes(),
        }
    }
}

/// Random-access byte source. Implementations must be safe to call from
/// several threads at once.
pub(crate) trait ReadAt {
    fn len(&self) -> u64;
    fn read_exact_at(&self, buf: &mut [u8], offset: u64) -> std::io::Result<()>;
}

impl ReadAt for std::fs::File {
    fn len(&self) -> u64 {
        self.metadata().map(|m| m.len()).unwrap_or(0)
    }

    #[cfg(unix)]
    fn read_exact_at(&self, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
        std::os::unix::fs::FileExt::read_exact_at(self, buf, offset)
    }

    #[cfg(windows)]
    fn read_exact_at(&self, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
        use std::os::windows::fs::FileExt;
        while !buf.is_empty() {
            match self.seek_read(buf, offset) {
                Ok(0) => {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::UnexpectedEof,
                        "failed to fill whole buffer",
                    ))
                }
                Ok(n) => {
                    buf = &mut buf[n..];
                    offset += n as u64;
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

/// Reads `len` bytes at `offset`, reporting reads past the end of the
/// source as truncation.
pub(crate) fn read_checked(src: &dyn ReadAt, offset: u64, len: u64, what: &str) -> Result<Vec<u8>> {
    let end = offset.checked_add(len);
    if end.is_none_or(|e| e > src.len()) {
        return Err(Error::TruncatedFile(format!(
            "{what}: bytes {offset}..{} beyond end of file ({} bytes)",
            offset.saturating_add(len),
            src.len()
        )));
    }
    let mut buf = vec![0u8; len as usize];
    src.read_exact_at(&mut buf, offset)?;
    Ok(buf)
}

#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub values: Vec<u32>,
}

/// One image file directory with integer-valued entries decoded.
#[derive(Debug, Clone)]
pub(crate) struct Directory {
    pub offset: u32,
    pub entries: HashMap<u16, Entry>,
}

impl Directory {
    pub fn scalar(&self, tag: u16) -> Option<u32> {
        self.entries.get(&tag).and_then(|e| e.values.first().copied())
    }

    pub fn values(&self, tag: u16) -> Option<&[u32]> {
        self.entries.get(&tag).map(|e| e.values.as_slice())
    }
}

fn type_size(typ: u16) -> Option<u64> {
    match typ {
        1 | 2 | 6 | 7 => Some(1),
        3 | 8 => Some(2),
        4 | 9 | 11 => Some(4),
        5 | 10 | 12 => Some(8),
        _ => None,
    }
}

pub(crate) fn parse_header(src: &dyn ReadAt) -> Result<(ByteOrder, u32)> {
    if src.len() < 8 {
        return Err(Error::MalformedHeader(format!(
            "file is {} bytes, shorter than a TIFF header",
            src.len()
        )));
    }
    let mut h = [0u8; 8];
    src.read_exact_at(&mut h, 0)?;
    let order = match &h[0..2] {
        b"II" => ByteOrder::LittleEndian,
        b"MM" => ByteOrder::BigEndian,
        other => {
            return Err(Error::MalformedHeader(format!(
                "byte order mark {:02x}{:02x} is neither II nor MM",
                other[0], other[1]
            )))
        }
    };
    let magic = order.u16(&h[2..4]);
    if magic != 42 {
        if magic == 43 {
            return Err(Error::UnsupportedTag("BigTIFF (magic 43)".into()));
        }
        return Err(Error::MalformedHeader(format!("magic {magic}, expected 42")));
    }
    Ok((order, order.u32(&h[4..8])))
}

/// Walks the IFD chain starting at `first`.
pub(crate) fn read_directories(
    src: &dyn ReadAt,
    order: ByteOrder,
    first: u32,
) -> Result<Vec<Directory>> {
    let mut dirs = Vec::new();
    let mut seen = HashSet::new();
    let mut next = first;
    while next != 0 {
        if !seen.insert(next) {
            return Err(Error::MalformedHeader(format!(
                "IFD chain loops back to offset {next}"
            )));
        }
        let dir = read_directory(src, order, next)?;
        let count_bytes = 2 + 12 * dir.entries_len as u64;
        let tail = read_checked(src, next as u64 + count_bytes, 4, "next IFD pointer")?;
        next = order.u32(&tail);
        dirs.push(dir.dir);
    }
    if dirs.is_empty() {
        return Err(Error::MalformedHeader("no image file directories".into()));
    }
    Ok(dirs)
}

struct RawDirectory {
    dir: Directory,
    entries_len: u16,
}

fn read_directory(src: &dyn ReadAt, order: ByteOrder, offset: u32) -> Result<RawDirectory> {
    let n = order.u16(&read_checked(src, offset as u64, 2, "IFD entry count")?);
    let raw = read_checked(src, offset as u64 + 2, 12 * n as u64, "IFD entries")?;
    let mut entries = HashMap::new();
    for e in raw.chunks_exact(12) {
        let tag = order.u16(&e[0..2]);
        let typ = order.u16(&e[2..4]);
        let count = order.u32(&e[4..8]);
        let Some(size) = type_size(typ) else {
            // Unknown field types are skipped per the TIFF rules for readers.
            continue;
        };
        let values = if matches!(typ, TYPE_BYTE | TYPE_SHORT | TYPE_LONG) {
            let total = size * count as u64;
            let bytes = if total <= 4 {
                e[8..8 + total as usize].to_vec()
            } else {
                let at = order.u32(&e[8..12]) as u64;
                read_checked(src, at, total, &format!("values of tag {tag}"))?
            };
            match typ {
                TYPE_BYTE => bytes.iter().map(|&b| b as u32).collect(),
                TYPE_SHORT => bytes.chunks_exact(2).map(|c| order.u16(c) as u32).collect(),
                _ => bytes.chunks_exact(4).map(|c| order.u32(c)).collect(),
            }
        } else {
            Vec::new()
        };
        entries.insert(tag, Entry { values });
    }
    Ok(RawDirectory {
        dir: Directory { offset, entries },
        entries_len: n,
    })
}

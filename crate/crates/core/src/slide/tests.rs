use super::*;
use crate::raster::box_downsample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

fn noise_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    let mut data = vec![0u8; w as usize * h as usize * 3];
    rng.fill_bytes(&mut data);
    RgbImage::from_raw(w, h, data).unwrap()
}

fn pyramid(rng: &mut ChaCha8Rng, w: u32, h: u32, n: usize, factor: u32) -> Vec<RgbImage> {
    let mut levels = vec![noise_image(rng, w, h)];
    for _ in 1..n {
        let prev = levels.last().unwrap();
        // Fresh noise at each level exercises the round trip harder than a
        // true downsample would.
        levels.push(noise_image(rng, prev.width.div_ceil(factor), prev.height.div_ceil(factor)));
    }
    levels
}

fn opts(tile: u32, compression: Compression) -> WriteOptions {
    WriteOptions {
        tile_width: tile,
        tile_height: tile,
        compression,
    }
}

#[test]
fn two_level_deflate_round_trip() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("two.tif");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let levels = pyramid(&mut rng, 4096, 4096, 2, 4);
    write_pyramid(&path, &levels, &opts(256, Compression::Deflate)).unwrap();

    let slide = open_slide(&path).unwrap();
    assert_eq!(slide.slide_id(), "two");
    let ds: Vec<f64> = slide.levels().iter().map(|l| l.downsample).collect();
    assert_eq!(ds, vec![1.0, 4.0]);
    assert_eq!(slide.thumbnail_level(), 1);
    for (i, level) in levels.iter().enumerate() {
        assert_eq!(&slide.read_level(i).unwrap(), level, "level {i}");
    }
}

#[test]
fn minimal_single_tile_slide() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("one.tif");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = noise_image(&mut rng, 256, 256);
    write_pyramid(&path, std::slice::from_ref(&img), &opts(256, Compression::None)).unwrap();
    let slide = open_slide(&path).unwrap();
    assert_eq!(slide.levels().len(), 1);
    let l = &slide.levels()[0];
    assert_eq!(l.downsample, 1.0);
    assert_eq!(l.tile_count(), 1);
    assert_eq!(l.compression, Compression::None);
    let patch = slide.read_region(0, 0, 0, 256, 256).unwrap();
    assert_eq!(patch.pixels, img);
    assert_eq!(
        patch.origin,
        PixelRegion {
            x0: 0,
            y0: 0,
            width: 256,
            height: 256
        }
    );
}

#[test]
fn bad_magic_is_malformed_header() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("bad.tif");
    std::fs::write(&path, b"II\x2b\x00\x08\x00\x00\x00\x00\x00").unwrap();
    assert!(matches!(open_slide(&path), Err(Error::UnsupportedTag(_))));
    std::fs::write(&path, b"II\x2c\x00\x08\x00\x00\x00\x00\x00").unwrap();
    assert!(matches!(open_slide(&path), Err(Error::MalformedHeader(_))));
    std::fs::write(&path, b"XX\x2a\x00\x08\x00\x00\x00\x00\x00").unwrap();
    assert!(matches!(open_slide(&path), Err(Error::MalformedHeader(_))));
    std::fs::write(&path, b"II").unwrap();
    assert!(matches!(open_slide(&path), Err(Error::MalformedHeader(_))));
}

fn entry(tag: u16, typ: u16, count: u32, value: u32) -> Vec<u8> {
    let mut e = Vec::new();
    e.extend(tag.to_le_bytes());
    e.extend(typ.to_le_bytes());
    e.extend(count.to_le_bytes());
    e.extend(value.to_le_bytes());
    e
}

#[test]
fn striped_tiff_is_unsupported() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("striped.tif");
    // 1x1 RGB, one strip of 3 bytes at offset 8; IFD at 12.
    let mut f = b"II\x2a\x00\x0c\x00\x00\x00".to_vec();
    f.extend([200, 100, 50, 0]);
    let entries = [
        entry(256, 4, 1, 1),
        entry(257, 4, 1, 1),
        entry(258, 3, 1, 8),
        entry(259, 3, 1, 1),
        entry(262, 3, 1, 2),
        entry(273, 4, 1, 8),
        entry(277, 3, 1, 3),
        entry(279, 4, 1, 3),
    ];
    f.extend((entries.len() as u16).to_le_bytes());
    for e in &entries {
        f.extend(e);
    }
    f.extend(0u32.to_le_bytes());
    std::fs::write(&path, f).unwrap();
    let err = open_slide(&path).unwrap_err();
    assert!(matches!(err, Error::UnsupportedTag(ref m) if m.contains("striped")), "{err}");
}

#[test]
fn unknown_compression_is_unsupported() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("jpeg.tif");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    write_pyramid(&path, &[noise_image(&mut rng, 32, 32)], &opts(32, Compression::None)).unwrap();
    // Rewrite the Compression entry value (the fifth entry) to 7 (JPEG).
    let mut bytes = std::fs::read(&path).unwrap();
    let ifd = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let e = ifd + 2 + 12 * 4;
    assert_eq!(u16::from_le_bytes([bytes[e], bytes[e + 1]]), 259);
    bytes[e + 8] = 7;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(open_slide(&path), Err(Error::UnsupportedTag(_))));
}

#[test]
fn truncated_tile_data_is_detected() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("trunc.tif");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    write_pyramid(&path, &[noise_image(&mut rng, 64, 64)], &opts(32, Compression::None)).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    // First tile offset past end of file.
    let ifd = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let e = ifd + 2 + 12 * 10;
    assert_eq!(u16::from_le_bytes([bytes[e], bytes[e + 1]]), 324);
    let arr = u32::from_le_bytes(bytes[e + 8..e + 12].try_into().unwrap()) as usize;
    let past = bytes.len() as u32 + 10;
    bytes[arr..arr + 4].copy_from_slice(&past.to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(open_slide(&path), Err(Error::TruncatedFile(_))));

    // A file cut short inside the IFD.
    bytes.truncate(ifd + 20);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(open_slide(&path), Err(Error::TruncatedFile(_))));
}

#[test]
fn corrupt_deflate_stream_is_decode_failure() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("corrupt.tif");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    write_pyramid(&path, &[noise_image(&mut rng, 64, 64)], &opts(64, Compression::Deflate)).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    // The only tile starts right after the 8-byte header.
    for b in &mut bytes[8..40] {
        *b ^= 0x5a;
    }
    std::fs::write(&path, &bytes).unwrap();
    let slide = open_slide(&path).unwrap();
    assert!(matches!(
        slide.read_region(0, 0, 0, 8, 8),
        Err(Error::DecodeFailure(_))
    ));
}

#[test]
fn big_endian_files_are_read() {
    let dir = tempdir().unwrap();
    let le = dir.path().join("le.tif");
    let be = dir.path().join("be.tif");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let levels = pyramid(&mut rng, 300, 200, 3, 2);
    let o = opts(64, Compression::Deflate);
    write_pyramid(&le, &levels, &o).unwrap();
    write_pyramid_with_order(&be, &levels, &o, TiffByteOrder::BigEndian).unwrap();
    assert_eq!(&std::fs::read(&be).unwrap()[..4], b"MM\x00\x2a");
    let a = open_slide(&le).unwrap();
    let b = open_slide(&be).unwrap();
    assert_eq!(a.levels(), b.levels());
    for i in 0..3 {
        assert_eq!(a.read_level(i).unwrap(), b.read_level(i).unwrap());
    }
}

#[test]
fn codecs_decode_identically() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let levels = pyramid(&mut rng, 500, 333, 2, 3);
    let raw = dir.path().join("raw.tif");
    let zip = dir.path().join("zip.tif");
    write_pyramid(&raw, &levels, &opts(128, Compression::None)).unwrap();
    write_pyramid(&zip, &levels, &opts(128, Compression::Deflate)).unwrap();
    let (a, b) = (open_slide(&raw).unwrap(), open_slide(&zip).unwrap());
    for i in 0..2 {
        assert_eq!(a.read_level(i).unwrap(), b.read_level(i).unwrap());
    }
}

#[test]
fn writer_preconditions() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("x.tif");
    assert!(matches!(
        write_pyramid(&path, &[], &WriteOptions::default()),
        Err(Error::InvalidInput(_))
    ));
    let a = RgbImage::new(100, 100);
    let b = RgbImage::new(60, 50);
    assert!(matches!(
        write_pyramid(&path, &[a.clone(), b], &WriteOptions::default()),
        Err(Error::InvalidInput(_))
    ));
    assert!(matches!(
        write_pyramid(&path, &[a], &opts(20, Compression::None)),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn straddling_read_matches_full_level_crop() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("s.tif");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = noise_image(&mut rng, 200, 170);
    write_pyramid(&path, std::slice::from_ref(&img), &opts(64, Compression::Deflate)).unwrap();
    let slide = open_slide(&path).unwrap();
    let full = slide.read_level(0).unwrap();
    // 64x64 straddling the four tiles around (64, 64).
    let patch = slide.read_region(0, 40, 30, 64, 64).unwrap();
    assert_eq!(patch.pixels, full.crop(40, 30, 64, 64).unwrap());
    // Partial edge tile at the bottom-right corner.
    let edge = slide.read_region(0, 150, 120, 50, 50).unwrap();
    assert_eq!(edge.pixels, img.crop(150, 120, 50, 50).unwrap());
}

#[test]
fn out_of_bounds_reads() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("b.tif");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    write_pyramid(&path, &[noise_image(&mut rng, 100, 80)], &opts(32, Compression::None)).unwrap();
    let slide = open_slide(&path).unwrap();
    assert!(matches!(slide.read_region(0, 90, 0, 11, 1), Err(Error::OutOfBounds(_))));
    assert!(matches!(slide.read_region(0, 0, 79, 1, 2), Err(Error::OutOfBounds(_))));
    assert!(matches!(slide.read_region(0, 0, 0, 0, 1), Err(Error::OutOfBounds(_))));
    assert!(matches!(slide.read_region(1, 0, 0, 1, 1), Err(Error::OutOfBounds(_))));
    assert!(slide.read_region(0, 90, 70, 10, 10).is_ok());
}

#[test]
fn origin_maps_to_level_zero() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("o.tif");
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let levels = pyramid(&mut rng, 512, 512, 2, 4);
    write_pyramid(&path, &levels, &opts(64, Compression::None)).unwrap();
    let slide = open_slide(&path).unwrap();
    let p = slide.read_region(1, 10, 20, 30, 40).unwrap();
    assert_eq!(
        p.origin,
        PixelRegion {
            x0: 40,
            y0: 80,
            width: 120,
            height: 160
        }
    );
}

#[test]
fn concurrent_reads_agree() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("c.tif");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let img = noise_image(&mut rng, 640, 480);
    write_pyramid(&path, std::slice::from_ref(&img), &opts(64, Compression::Deflate)).unwrap();
    let slide = open_slide(&path).unwrap();
    std::thread::scope(|s| {
        for t in 0..8u64 {
            let slide = &slide;
            let img = &img;
            s.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + t);
                for _ in 0..50 {
                    let w = rng.random_range(1..=200);
                    let h = rng.random_range(1..=200);
                    let x = rng.random_range(0..=640 - w);
                    let y = rng.random_range(0..=480 - h);
                    let p = slide.read_region(0, x, y, w, h).unwrap();
                    assert_eq!(p.pixels, img.crop(x, y, w, h).unwrap());
                }
            });
        }
    });
}

#[test]
fn synth_slide_contract() {
    let dir = tempdir().unwrap();
    let a = synth_slide(dir.path().join("a.tif"), 42, 1024, 768, 5).unwrap();
    let b = synth_slide(dir.path().join("b.tif"), 42, 1024, 768, 5).unwrap();
    assert_eq!(std::fs::read(&a.path).unwrap(), std::fs::read(&b.path).unwrap());
    assert_eq!(a.truth, b.truth);

    let slide = open_slide(&a.path).unwrap();
    let ds: Vec<f64> = slide.levels().iter().map(|l| l.downsample).collect();
    assert_eq!(ds, vec![1.0, 4.0, 16.0]);
    let level0 = slide.read_level(0).unwrap();
    for y in 0..768 {
        for x in 0..1024 {
            let p = level0.pixel(x, y);
            if a.truth.get(x, y) {
                assert!(p.iter().all(|&c| c <= 200), "tissue pixel {p:?}");
            } else {
                assert!(p.iter().all(|&c| (235..=255).contains(&c)), "background {p:?}");
            }
        }
    }
    // Coarser levels are box averages of the level above.
    let level1 = slide.read_level(1).unwrap();
    assert_eq!(level1, box_downsample(&level0, 4));
}

#[test]
fn synth_slide_without_blobs_has_no_tissue() {
    let dir = tempdir().unwrap();
    let s = synth_slide(dir.path().join("blank.tif"), 1, 512, 512, 0).unwrap();
    assert_eq!(s.truth.count_ones(), 0);
}

#[test]
fn synth_slide_rejects_small_sizes() {
    let dir = tempdir().unwrap();
    assert!(matches!(
        synth_slide(dir.path().join("s.tif"), 1, 511, 600, 1),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn synth_tissue_fraction_matches_ellipse_union() {
    let dir = tempdir().unwrap();
    let s = synth_slide(dir.path().join("f.tif"), 9, 4096, 4096, 5).unwrap();
    // Independent recount from the pixels: tissue pixels are the only ones
    // with any channel at or below 200.
    let slide = open_slide(&s.path).unwrap();
    let level0 = slide.read_level(0).unwrap();
    let dark = level0
        .data
        .chunks_exact(3)
        .filter(|p| p.iter().all(|&c| c <= 200))
        .count();
    assert_eq!(dark, s.truth.count_ones());
    let frac = s.tissue_fraction();
    assert!(frac > 0.0 && frac < 1.0, "{frac}");
}

#[test]
fn level_downsample_accepts_either_rounding() {
    assert_eq!(level_downsample(139, 675, 70, 338), Some(2.0));
    assert_eq!(level_downsample(139, 675, 69, 337), Some(2.0));
    assert_eq!(level_downsample(4096, 4096, 256, 256), Some(16.0));
    assert_eq!(level_downsample(1000, 750, 400, 300), Some(2.5));
    assert_eq!(level_downsample(1000, 1000, 500, 250), None);
}

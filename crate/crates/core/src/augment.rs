//! Runtime patch augmentation: the eight square symmetries, per-channel
//! color shift, and a piecewise affine warp over a triangulated control
//! lattice. Every transform is a pure function of the patch and its drawn
//! parameters.

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::{sample_bilinear, RgbImage};

/// Codes 0..=3 rotate counter-clockwise by `90° · code`; codes 4..=7 flip
/// horizontally first, then rotate by `90° · (code - 4)`.
pub fn dihedral(patch: &RgbImage, code: u8) -> Result<RgbImage> {
    if code > 7 {
        return Err(Error::InvalidCode(code));
    }
    if patch.width != patch.height {
        return Err(Error::InvalidInput(format!(
            "dihedral transforms need a square patch, got {}x{}",
            patch.width, patch.height
        )));
    }
    let n = patch.width;
    let flip = code >= 4;
    let turns = code % 4;
    let mut out = RgbImage::new(n, n);
    let last = n.saturating_sub(1);
    for r in 0..n {
        for c in 0..n {
            // Undo the rotation, then the flip, to find the source pixel.
            let (sr, sc) = match turns {
                0 => (r, c),
                1 => (c, last - r),
                2 => (last - r, last - c),
                _ => (last - c, r),
            };
            let sc = if flip { last - sc } else { sc };
            out.put_pixel(c, r, patch.pixel(sc, sr));
        }
    }
    Ok(out)
}

/// Code of "apply `first`, then `second`".
pub fn compose_codes(first: u8, second: u8) -> Result<u8> {
    for c in [first, second] {
        if c > 7 {
            return Err(Error::InvalidCode(c));
        }
    }
    let (fa, ka) = (first / 4, first % 4);
    let (fb, kb) = (second / 4, second % 4);
    // A flip conjugates rotation into its inverse.
    let k = if fb == 1 { (kb + 4 - ka) % 4 } else { (kb + ka) % 4 };
    Ok((fa ^ fb) * 4 + k)
}

pub fn inverse_code(code: u8) -> Result<u8> {
    match code {
        0..=3 => Ok((4 - code) % 4),
        4..=7 => Ok(code),
        _ => Err(Error::InvalidCode(code)),
    }
}

/// `out = clamp(round(in · gain + bias), 0, 255)` per channel.
pub fn color_shift(patch: &RgbImage, gains: [f64; 3], biases: [i32; 3]) -> RgbImage {
    let mut lut = [[0u8; 256]; 3];
    for c in 0..3 {
        for (v, slot) in lut[c].iter_mut().enumerate() {
            *slot = (v as f64 * gains[c] + biases[c] as f64).round().clamp(0.0, 255.0) as u8;
        }
    }
    let mut out = patch.clone();
    for px in out.data.chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = lut[c][px[c] as usize];
        }
    }
    out
}

/// Lattice coordinate of control index `j` on an `n`-pixel edge with `k`
/// control points; the first and last points sit on the outermost pixel
/// centers.
fn lattice(j: usize, n: u32, k: usize) -> f64 {
    j as f64 * (n as f64 - 1.0) / (k as f64 - 1.0)
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// The two triangles of cell (i, j), as lattice indices into a k×k grid
/// stored row-major. The diagonal runs from top-left to bottom-right.
fn cell_triangles(i: usize, j: usize, k: usize) -> [[usize; 3]; 2] {
    let tl = j * k + i;
    let tr = tl + 1;
    let bl = tl + k;
    let br = bl + 1;
    [[tl, tr, br], [tl, br, bl]]
}

fn grid_side(offsets: &[[f64; 2]]) -> Result<usize> {
    let k = (offsets.len() as f64).sqrt().round() as usize;
    if k < 2 || k * k != offsets.len() {
        return Err(Error::InvalidInput(format!(
            "{} control offsets do not form a k×k grid with k >= 2",
            offsets.len()
        )));
    }
    Ok(k)
}

/// True when some destination triangle of the displaced lattice has
/// non-positive area.
pub fn grid_folds(n: u32, offsets: &[[f64; 2]]) -> Result<bool> {
    let k = grid_side(offsets)?;
    let dest = destination_lattice(n, k, offsets);
    for j in 0..k - 1 {
        for i in 0..k - 1 {
            for [a, b, c] in cell_triangles(i, j, k) {
                if signed_area(dest[a], dest[b], dest[c]) <= 0.0 {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

fn destination_lattice(n: u32, k: usize, offsets: &[[f64; 2]]) -> Vec<[f64; 2]> {
    (0..k * k)
        .map(|idx| {
            let (i, j) = (idx % k, idx / k);
            [lattice(i, n, k) + offsets[idx][0], lattice(j, n, k) + offsets[idx][1]]
        })
        .collect()
}

/// Warps `patch` so that each source lattice point lands at itself plus its
/// offset. `offsets` is a row-major k×k list of (dx, dy); border entries
/// must be zero.
pub fn piecewise_affine(patch: &RgbImage, offsets: &[[f64; 2]]) -> Result<RgbImage> {
    let k = grid_side(offsets)?;
    if patch.width != patch.height {
        return Err(Error::InvalidInput(format!(
            "warp needs a square patch, got {}x{}",
            patch.width, patch.height
        )));
    }
    for (idx, o) in offsets.iter().enumerate() {
        let (i, j) = (idx % k, idx / k);
        let border = i == 0 || j == 0 || i == k - 1 || j == k - 1;
        if !(o[0].is_finite() && o[1].is_finite()) || (border && (o[0] != 0.0 || o[1] != 0.0)) {
            return Err(Error::InvalidInput(format!(
                "control point ({i}, {j}) offset {o:?} must be finite and zero on the border"
            )));
        }
    }
    if grid_folds(patch.width, offsets)? {
        return Err(Error::FoldedGrid);
    }
    if offsets.iter().all(|o| o[0] == 0.0 && o[1] == 0.0) {
        return Ok(patch.clone());
    }

    let n = patch.width;
    let dest = destination_lattice(n, k, offsets);
    let src: Vec<[f64; 2]> = (0..k * k).map(|idx| [lattice(idx % k, n, k), lattice(idx / k, n, k)]).collect();
    let mut out = patch.clone();
    let max = n as f64 - 1.0;
    // Shared edges get written by both neighbours; the tolerance only has to
    // stop rounding from opening gaps between them.
    let eps = 1e-9;
    for j in 0..k - 1 {
        for i in 0..k - 1 {
            for [a, b, c] in cell_triangles(i, j, k) {
                let (pa, pb, pc) = (dest[a], dest[b], dest[c]);
                let area = signed_area(pa, pb, pc);
                let x_lo = pa[0].min(pb[0]).min(pc[0]).floor().max(0.0) as u32;
                let x_hi = pa[0].max(pb[0]).max(pc[0]).ceil().min(max) as u32;
                let y_lo = pa[1].min(pb[1]).min(pc[1]).floor().max(0.0) as u32;
                let y_hi = pa[1].max(pb[1]).max(pc[1]).ceil().min(max) as u32;
                for y in y_lo..=y_hi {
                    for x in x_lo..=x_hi {
                        let p = [x as f64, y as f64];
                        let wa = signed_area(p, pb, pc) / area;
                        let wb = signed_area(pa, p, pc) / area;
                        let wc = 1.0 - wa - wb;
                        if wa < -eps || wb < -eps || wc < -eps {
                            continue;
                        }
                        let sx = wa * src[a][0] + wb * src[b][0] + wc * src[c][0];
                        let sy = wa * src[a][1] + wb * src[b][1] + wc * src[c][1];
                        let v = sample_bilinear(patch, sx.clamp(0.0, max), sy.clamp(0.0, max));
                        out.put_pixel(x, y, v);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Ranges for the per-patch augmentation draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub dihedral_enabled: bool,
    /// Gains are drawn from `[1 - a, 1 + a]`.
    pub color_gain_range: f64,
    /// Biases are drawn from `[-s, s]`.
    pub color_bias_range: u32,
    pub warp_grid: u32,
    /// Interior control points move by up to this many pixels per axis.
    /// `None` means 5% of the patch edge.
    pub warp_jitter_px: Option<f64>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            dihedral_enabled: true,
            color_gain_range: 0.05,
            color_bias_range: 10,
            warp_grid: 4,
            warp_jitter_px: None,
        }
    }
}

impl AugmentConfig {
    /// Draws nothing but identity parameters.
    pub fn disabled() -> Self {
        Self {
            dihedral_enabled: false,
            color_gain_range: 0.0,
            color_bias_range: 0,
            warp_grid: 2,
            warp_jitter_px: Some(0.0),
        }
    }

    pub fn jitter_for(&self, patch_size: u32) -> f64 {
        self.warp_jitter_px.unwrap_or(0.05 * patch_size as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.color_gain_range;
        if !(a.is_finite() && (0.0..1.0).contains(&a)) {
            return Err(Error::Config(format!("color_gain_range {a} must be in [0, 1)")));
        }
        if self.warp_grid < 2 {
            return Err(Error::Config(format!("warp_grid {} must be >= 2", self.warp_grid)));
        }
        if let Some(d) = self.warp_jitter_px {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::Config(format!("warp_jitter_px {d} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    pub code: u8,
    pub gains: [f64; 3],
    pub biases: [i32; 3],
    /// Row-major `warp_grid²` control offsets.
    pub offsets: Vec<[f64; 2]>,
}

impl AugmentParams {
    pub fn identity(grid: u32) -> Self {
        Self {
            code: 0,
            gains: [1.0; 3],
            biases: [0; 3],
            offsets: vec![[0.0; 2]; (grid as usize).pow(2)],
        }
    }

    /// Warp, then symmetry, then color.
    pub fn apply(&self, patch: &RgbImage) -> Result<RgbImage> {
        let warped = piecewise_affine(patch, &self.offsets)?;
        let turned = dihedral(&warped, self.code)?;
        Ok(color_shift(&turned, self.gains, self.biases))
    }
}

const MAX_WARP_ATTEMPTS: usize = 16;

/// Draws one parameter set. Warp offsets that fold the lattice are redrawn
/// up to 16 times in total.
pub fn draw_augmentation<R: Rng + ?Sized>(cfg: &AugmentConfig, patch_size: u32, rng: &mut R) -> Result<AugmentParams> {
    cfg.validate()?;
    let code = if cfg.dihedral_enabled { rng.random_range(0..8u8) } else { 0 };
    let a = cfg.color_gain_range;
    let mut gains = [1.0; 3];
    if a > 0.0 {
        for g in &mut gains {
            *g = rng.random_range(1.0 - a..=1.0 + a);
        }
    }
    let s = cfg.color_bias_range as i32;
    let mut biases = [0; 3];
    if s > 0 {
        for b in &mut biases {
            *b = rng.random_range(-s..=s);
        }
    }

    let k = cfg.warp_grid as usize;
    let d = cfg.jitter_for(patch_size);
    let mut offsets = vec![[0.0; 2]; k * k];
    if d > 0.0 && k > 2 {
        let mut attempt = 0;
        loop {
            for j in 1..k - 1 {
                for i in 1..k - 1 {
                    offsets[j * k + i] = [rng.random_range(-d..=d), rng.random_range(-d..=d)];
                }
            }
            if !grid_folds(patch_size, &offsets)? {
                break;
            }
            attempt += 1;
            if attempt == MAX_WARP_ATTEMPTS {
                return Err(Error::FoldedGrid);
            }
        }
    }
    Ok(AugmentParams {
        code,
        gains,
        biases,
        offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: u32, seed: u64) -> RgbImage {
        let mut data = vec![0u8; (n * n * 3) as usize];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut data);
        RgbImage::from_raw(n, n, data).unwrap()
    }

    #[test]
    fn quarter_turn_of_two_by_two() {
        let (a, b, c, d) = ([1, 1, 1], [2, 2, 2], [3, 3, 3], [4, 4, 4]);
        let img = RgbImage::from_raw(2, 2, [a, b, c, d].concat()).unwrap();
        let out = dihedral(&img, 1).unwrap();
        assert_eq!(out.data, [b, d, a, c].concat());
    }

    #[test]
    fn flip_code_mirrors_columns() {
        let img = noise(5, 1);
        let out = dihedral(&img, 4).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(out.pixel(x, y), img.pixel(4 - x, y));
            }
        }
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let img = noise(7, 2);
        let mut out = img.clone();
        for _ in 0..4 {
            out = dihedral(&out, 1).unwrap();
        }
        assert_eq!(out, img);
        assert_eq!(dihedral(&img, 0).unwrap(), img);
    }

    #[test]
    fn composition_table_matches_application() {
        let img = noise(6, 3);
        for a in 0..8 {
            for b in 0..8 {
                let chained = dihedral(&dihedral(&img, a).unwrap(), b).unwrap();
                let direct = dihedral(&img, compose_codes(a, b).unwrap()).unwrap();
                assert_eq!(chained, direct, "{a} then {b}");
            }
            let back = dihedral(&dihedral(&img, a).unwrap(), inverse_code(a).unwrap()).unwrap();
            assert_eq!(back, img);
        }
    }

    #[test]
    fn rejects_bad_codes_and_shapes() {
        let img = noise(4, 4);
        assert!(matches!(dihedral(&img, 8), Err(Error::InvalidCode(8))));
        let rect = RgbImage::new(4, 3);
        assert!(matches!(dihedral(&rect, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn color_shift_arithmetic() {
        let img = RgbImage::filled(2, 2, [100, 100, 100]);
        assert_eq!(color_shift(&img, [1.0; 3], [0; 3]), img);
        let out = color_shift(&img, [0.5, 1.0, 1.0], [0, 300, -300]);
        assert_eq!(out.pixel(1, 1), [50, 255, 0]);
    }

    #[test]
    fn zero_offsets_are_identity() {
        let img = noise(32, 5);
        for k in 2..6 {
            let zero = vec![[0.0; 2]; k * k];
            assert_eq!(piecewise_affine(&img, &zero).unwrap(), img);
        }
    }

    fn offsets_with(k: usize, interior: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let mut o = vec![[0.0; 2]; k * k];
        let mut it = interior.iter();
        for j in 1..k - 1 {
            for i in 1..k - 1 {
                o[j * k + i] = *it.next().unwrap();
            }
        }
        o
    }

    #[test]
    fn warp_keeps_corners_and_constants() {
        let img = noise(40, 6);
        let off = offsets_with(4, &[[2.5, -1.0], [-3.0, 1.5], [0.5, 2.0], [-1.25, -2.75]]);
        let out = piecewise_affine(&img, &off).unwrap();
        assert_ne!(out, img);
        for (x, y) in [(0, 0), (39, 0), (0, 39), (39, 39)] {
            assert_eq!(out.pixel(x, y), img.pixel(x, y));
        }
        let flat = RgbImage::filled(40, 40, [12, 200, 77]);
        assert_eq!(piecewise_affine(&flat, &off).unwrap(), flat);
    }

    #[test]
    fn warp_moves_control_point_content() {
        // Source content at an interior lattice point shows up at its
        // displaced destination.
        let n = 31;
        let mut img = RgbImage::filled(n, n, [0, 0, 0]);
        img.put_pixel(10, 10, [255, 255, 255]);
        let off = offsets_with(4, &[[3.0, 2.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
        let out = piecewise_affine(&img, &off).unwrap();
        assert_eq!(out.pixel(13, 12), [255, 255, 255]);
    }

    #[test]
    fn folded_and_malformed_grids() {
        let img = noise(31, 7);
        // Push the interior point past its right neighbour column.
        let fold = offsets_with(3, &[[20.0, 0.0]]);
        assert!(matches!(piecewise_affine(&img, &fold), Err(Error::FoldedGrid)));
        let mut border = vec![[0.0; 2]; 9];
        border[1] = [1.0, 0.0];
        assert!(matches!(piecewise_affine(&img, &border), Err(Error::InvalidInput(_))));
        assert!(matches!(piecewise_affine(&img, &[[0.0; 2]; 5]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn disabled_config_draws_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = AugmentConfig::disabled();
        for _ in 0..20 {
            assert_eq!(draw_augmentation(&cfg, 64, &mut rng).unwrap(), AugmentParams::identity(2));
        }
        let img = noise(64, 9);
        assert_eq!(AugmentParams::identity(4).apply(&img).unwrap(), img);
    }

    #[test]
    fn draws_are_seeded_and_in_range() {
        let cfg = AugmentConfig::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| draw_augmentation(&cfg, 128, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        let a = run(11);
        assert_eq!(a, run(11));
        assert_ne!(a, run(12));
        for p in &a {
            assert!(p.code < 8);
            assert!(p.gains.iter().all(|g| (0.95..=1.05).contains(g)));
            assert!(p.biases.iter().all(|b| (-10..=10).contains(b)));
            assert_eq!(p.offsets.len(), 16);
            for (idx, o) in p.offsets.iter().enumerate() {
                let (i, j) = (idx % 4, idx / 4);
                if i == 0 || j == 0 || i == 3 || j == 3 {
                    assert_eq!(*o, [0.0, 0.0]);
                } else {
                    assert!(o[0].abs() <= 6.4 && o[1].abs() <= 6.4);
                }
            }
        }
    }

    #[test]
    fn oversized_jitter_gives_up() {
        let cfg = AugmentConfig {
            warp_jitter_px: Some(500.0),
            ..AugmentConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut failures = 0;
        for _ in 0..20 {
            if matches!(draw_augmentation(&cfg, 64, &mut rng), Err(Error::FoldedGrid)) {
                failures += 1;
            }
        }
        assert!(failures > 0);
    }

    proptest! {
        #[test]
        fn warp_output_stays_in_input_range(seed in any::<u64>(), n in 8u32..48) {
            let img = noise(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cell = (n - 1) as f64 / 3.0;
            let cfg = AugmentConfig { warp_jitter_px: Some(0.2 * cell), ..AugmentConfig::default() };
            let p = draw_augmentation(&cfg, n, &mut rng).unwrap();
            let out = piecewise_affine(&img, &p.offsets).unwrap();
            prop_assert_eq!((out.width, out.height), (n, n));
            for c in 0..3 {
                let lo = img.data.iter().skip(c).step_by(3).min().copied().unwrap() as i32;
                let hi = img.data.iter().skip(c).step_by(3).max().copied().unwrap() as i32;
                for v in out.data.iter().skip(c).step_by(3) {
                    prop_assert!((lo - 1..=hi + 1).contains(&(*v as i32)));
                }
            }
        }

        #[test]
        fn augmentation_keeps_dimensions(seed in any::<u64>(), n in 4u32..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = draw_augmentation(&AugmentConfig::default(), n, &mut rng).unwrap();
            let out = p.apply(&noise(n, seed)).unwrap();
            prop_assert_eq!((out.width, out.height), (n, n));
        }
    }
}

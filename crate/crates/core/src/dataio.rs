//! Datasets in and out: synthetic SPD clouds, region covariance descriptors
//! from 8-bit grayscale images, and the plain-text matrix-set format.
//!
//! Matrix-set files look like
//!
//! ```text
//! # optional comments anywhere
//! 2 1
//! 2.0000000000000000e0 5.0000000000000000e-1
//! 5.0000000000000000e-1 1.0000000000000000e0
//! ```
//!
//! i.e. a `d N` header followed by `N` blocks of `d` rows of `d` numbers.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::centroid::Dataset;
use crate::error::{Error, Result};
use crate::spd::{exp_map, SpdPoint};
use crate::symmat::{Matrix, SymMat};

/// Largest matrix dimension accepted from a file.
pub const MAX_FILE_DIM: usize = 1024;
/// Largest pixel count accepted from a PGM header.
pub const MAX_PIXELS: usize = 1 << 28;

/// Format a float with 17 significant digits, independent of locale.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `A_i = Exp_center(E_i)` where `E_i` is, in whitened coordinates at the
/// center, the symmetric part of a matrix with i.i.d. `N(0, spread²)` entries.
pub fn generate_synthetic(
    rng: &mut impl Rng,
    n: usize,
    d: usize,
    center: &SpdPoint,
    spread: f64,
) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::input(format!("need N >= 1 and d >= 1, got N = {n}, d = {d}")));
    }
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::input(format!("spread must be positive and finite, got {spread}")));
    }
    if center.dim() != d {
        return Err(Error::input(format!("center has dimension {}, expected {d}", center.dim())));
    }
    let normal = Normal::new(0.0, spread).map_err(|e| Error::input(e.to_string()))?;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..d * d).map(|_| normal.sample(rng)).collect();
        let e = Matrix::from_row_major(d, z)?.symmetric_part();
        let tangent = center.tangent(center.unwhiten(&e))?;
        points.push(exp_map(center, &tangent)?);
    }
    Dataset::new(points)
}

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::input(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                pixels.push(f(col, row));
            }
        }
        GrayImage { width, height, pixels }
    }

    /// Intensity at column `u`, row `v`, with coordinates clamped to the image.
    #[inline]
    fn clamped(&self, u: isize, v: isize) -> f64 {
        let u = u.clamp(0, self.width as isize - 1) as usize;
        let v = v.clamp(0, self.height as isize - 1) as usize;
        self.pixels[v * self.width + u] as f64
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Format { offset: self.pos, reason: reason.into() }
    }

    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        let mut value: usize = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            let digit = (self.bytes[self.pos] - b'0') as usize;
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(digit))
                .ok_or_else(|| self.fail(format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.fail(format!("expected {what}")));
        }
        Ok(value)
    }
}

/// Decode a binary (P5) PGM with maxval 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format { offset: 0, reason: "missing P5 magic number".into() });
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() && bytes[cur.pos] != b'#' {
        return Err(cur.fail("expected whitespace after magic number"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = {
        cur.skip_separators();
        cur.pos
    };
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.fail(format!("image dimensions must be positive, got {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::Format {
            offset: maxval_at,
            reason: format!("only 8-bit images with maxval 255 are supported, got {maxval}"),
        });
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(_) => return Err(cur.fail("expected a single whitespace byte before the raster")),
        None => return Err(cur.fail("header ends before the raster")),
    }
    let expected = width
        .checked_mul(height)
        .filter(|&p| p <= MAX_PIXELS)
        .ok_or_else(|| cur.fail(format!("{width}x{height} image is too large")))?;
    let available = bytes.len() - cur.pos;
    if available < expected {
        return Err(Error::Format {
            offset: bytes.len(),
            reason: format!("truncated raster: expected {expected} bytes, found {available}"),
        });
    }
    let pixels = bytes[cur.pos..cur.pos + expected].to_vec();
    Ok(GrayImage { width, height, pixels })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    parse_pgm(&std::fs::read(path)?)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn write_pgm(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    std::fs::write(path, encode_pgm(image))?;
    Ok(())
}

/// Non-overlapping square tiling of an image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub cell: usize,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, cell: usize) -> Result<Self> {
        if cell == 0 || width == 0 || height == 0 {
            return Err(Error::input("grid dimensions must be positive"));
        }
        if width % cell != 0 || height % cell != 0 {
            return Err(Error::input(format!(
                "{cell}x{cell} cells do not tile a {width}x{height} image"
            )));
        }
        Ok(GridSpec { width, height, cell })
    }

    pub fn for_image(image: &GrayImage, cell: usize) -> Result<Self> {
        Self::new(image.width, image.height, cell)
    }

    pub fn cells_across(&self) -> usize {
        self.width / self.cell
    }

    pub fn cells_down(&self) -> usize {
        self.height / self.cell
    }

    pub fn cell_count(&self) -> usize {
        self.cells_across() * self.cells_down()
    }
}

pub const FEATURES: usize = 5;

/// `[I, |∂I/∂u|, |∂I/∂v|, |∂²I/∂u²|, |∂²I/∂v²|]` at column `u`, row `v`,
/// by central differences over replicated borders.
pub fn pixel_features(image: &GrayImage, u: usize, v: usize) -> [f64; FEATURES] {
    let (u, v) = (u as isize, v as isize);
    let c = image.clamped(u, v);
    let (l, r) = (image.clamped(u - 1, v), image.clamped(u + 1, v));
    let (up, down) = (image.clamped(u, v - 1), image.clamped(u, v + 1));
    [
        c,
        (0.5 * (r - l)).abs(),
        (0.5 * (down - up)).abs(),
        (r - 2.0 * c + l).abs(),
        (down - 2.0 * c + up).abs(),
    ]
}

/// Sample covariance (divisor n − 1) of the pixel features in every cell,
/// cells in row-major order. No regularization and no SPD check.
pub fn raw_cell_covariances(image: &GrayImage, grid: &GridSpec) -> Result<Vec<SymMat>> {
    if grid.width != image.width || grid.height != image.height {
        return Err(Error::input("grid does not match image dimensions"));
    }
    let g = grid.cell;
    let n = (g * g) as f64;
    let divisor = if g * g > 1 { n - 1.0 } else { 1.0 };
    let mut out = Vec::with_capacity(grid.cell_count());
    for cy in 0..grid.cells_down() {
        for cx in 0..grid.cells_across() {
            let mut feats = Vec::with_capacity(g * g);
            for v in cy * g..(cy + 1) * g {
                for u in cx * g..(cx + 1) * g {
                    feats.push(pixel_features(image, u, v));
                }
            }
            let mut mean = [0.0; FEATURES];
            for f in &feats {
                for k in 0..FEATURES {
                    mean[k] += f[k] / n;
                }
            }
            let mut cov = Matrix::zeros(FEATURES);
            for f in &feats {
                for i in 0..FEATURES {
                    for j in i..FEATURES {
                        let v = cov.get(i, j) + (f[i] - mean[i]) * (f[j] - mean[j]);
                        cov.set(i, j, v);
                    }
                }
            }
            for i in 0..FEATURES {
                for j in i..FEATURES {
                    let v = cov.get(i, j) / divisor;
                    cov.set(i, j, v);
                    cov.set(j, i, v);
                }
            }
            out.push(SymMat::try_from_matrix(cov)?);
        }
    }
    Ok(out)
}

/// `1e-6 ×` the mean feature variance over all cells, or `1e-6` for an image
/// without any feature variance.
pub fn default_regularization(image: &GrayImage, grid: &GridSpec) -> Result<f64> {
    let covs = raw_cell_covariances(image, grid)?;
    let mean_var =
        covs.iter().map(|c| c.trace() / FEATURES as f64).sum::<f64>() / covs.len() as f64;
    Ok(if mean_var > 0.0 { 1e-6 * mean_var } else { 1e-6 })
}

/// One 5×5 region covariance descriptor per grid cell, plus `reg · I`.
pub fn covariance_descriptors(image: &GrayImage, grid: &GridSpec, reg: f64) -> Result<Dataset> {
    if !(reg >= 0.0) || !reg.is_finite() {
        return Err(Error::input(format!("regularization must be finite and >= 0, got {reg}")));
    }
    let covs = raw_cell_covariances(image, grid)?;
    let across = grid.cells_across();
    let mut points = Vec::with_capacity(covs.len());
    for (index, cov) in covs.into_iter().enumerate() {
        let regularized = cov.add(&SymMat::identity(FEATURES).scale(reg));
        let point = SpdPoint::new(regularized).map_err(|e| Error::Data {
            index,
            reason: format!(
                "descriptor of cell (row {}, column {}) is not positive definite: {e}",
                index / across,
                index % across
            ),
        })?;
        points.push(point);
    }
    Dataset::new(points)
}

pub fn format_matrix_set(data: &Dataset) -> String {
    let d = data.dim();
    let mut out = String::new();
    writeln!(out, "{d} {}", data.len()).unwrap();
    for (i, p) in data.points().iter().enumerate() {
        writeln!(out, "# matrix {i}").unwrap();
        for r in 0..d {
            let row: Vec<String> = (0..d).map(|c| format_f64(p.mat().get(r, c))).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    out
}

pub fn write_matrix_set(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    std::fs::write(path, format_matrix_set(data))?;
    Ok(())
}

/// Parse a matrix-set file, validating symmetry (to 1e-12 relative) and
/// positive definiteness of every matrix.
pub fn parse_matrix_set(text: &str) -> Result<Dataset> {
    let mut offset = 0usize;
    let mut lines = Vec::new();
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        let start = offset;
        offset += line.len();
        let content = line.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        lines.push((lineno + 1, start, content));
    }
    let mut iter = lines.into_iter();
    let Some((hline, hoff, header)) = iter.next() else {
        return Err(Error::Format { offset: 0, reason: "empty matrix-set file".into() });
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_count = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0);
    let (d, n) = match fields.as_slice() {
        [d, n] => match (parse_count(d), parse_count(n)) {
            (Some(d), Some(n)) => (d, n),
            _ => {
                return Err(Error::Format {
                    offset: hoff,
                    reason: format!("line {hline}: header needs two positive integers 'd N'"),
                })
            }
        },
        _ => {
            return Err(Error::Format {
                offset: hoff,
                reason: format!("line {hline}: header must be 'd N'"),
            })
        }
    };
    if d > MAX_FILE_DIM {
        return Err(Error::Format { offset: hoff, reason: format!("dimension {d} is too large") });
    }

    let mut points = Vec::new();
    let mut entries = Vec::with_capacity(d * d);
    let mut rows_seen = 0usize;
    for (lineno, off, content) in iter {
        if points.len() == n {
            return Err(Error::Format {
                offset: off,
                reason: format!("line {lineno}: header declares {n} matrices but more data follows"),
            });
        }
        let before = entries.len();
        for tok in content.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Format {
                offset: off,
                reason: format!("line {lineno}: '{tok}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    offset: off,
                    reason: format!("line {lineno}: non-finite entry '{tok}'"),
                });
            }
            entries.push(v);
        }
        if entries.len() - before != d {
            return Err(Error::Format {
                offset: off,
                reason: format!("line {lineno}: expected {d} numbers, found {}", entries.len() - before),
            });
        }
        rows_seen += 1;
        if rows_seen == d {
            let index = points.len();
            points.push(validated_matrix(index, d, std::mem::take(&mut entries))?);
            entries.reserve(d * d);
            rows_seen = 0;
        }
    }
    if points.len() != n || rows_seen != 0 {
        return Err(Error::Format {
            offset: text.len(),
            reason: format!(
                "header declares {n} matrices of dimension {d}, payload holds {} complete matrices",
                points.len()
            ),
        });
    }
    Dataset::new(points)
}

fn validated_matrix(index: usize, d: usize, entries: Vec<f64>) -> Result<SpdPoint> {
    let m = Matrix::from_row_major(d, entries)?;
    let scale = m.as_slice().iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..d {
        for j in (i + 1)..d {
            if (m.get(i, j) - m.get(j, i)).abs() > 1e-12 * scale {
                return Err(Error::Data {
                    index,
                    reason: format!("not symmetric at ({i}, {j})"),
                });
            }
        }
    }
    SpdPoint::new(m.symmetric_part()).map_err(|e| Error::Data {
        index,
        reason: format!("not positive definite: {e}"),
    })
}

pub fn read_matrix_set(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_matrix_set(&std::fs::read_to_string(path)?)
}

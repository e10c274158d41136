//! 8-bit grayscale images with binary PGM (P5) reading and writing, plus the
//! bilinear sampling used by the correlation filter and the synthetic scenes.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported format: expected binary PGM (P5) with maxval 255, found {0}")]
    Unsupported(String),
    #[error("malformed PGM header: {0}")]
    Header(String),
    #[error("truncated PGM body: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// Row-major 8-bit luminance raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    /// Builds an image from row-major samples. Panics if `data` does not hold
    /// exactly `width * height` bytes.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert_eq!(
            data.len(),
            width as usize * height as usize,
            "sample count must equal width * height"
        );
        Self { width, height, data }
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self::from_raw(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    /// Bilinear sample at continuous image coordinates, where pixel `(i, j)`
    /// covers `[i, i+1) × [j, j+1)` with its center at `(i+0.5, j+0.5)`.
    /// Points outside `[0, w] × [0, h]` sample as 0; inside the border
    /// half-pixel the edge value is replicated.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let (w, h) = (self.width as f64, self.height as f64);
        if x < 0.0 || y < 0.0 || x > w || y > h {
            return 0.0;
        }
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let xi = (x - 0.5).clamp(0.0, max_x);
        let yi = (y - 0.5).clamp(0.0, max_y);
        let x0 = xi.floor();
        let y0 = yi.floor();
        let fx = xi - x0;
        let fy = yi - y0;
        let x0 = x0 as u32;
        let y0 = y0 as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let v00 = self.get(x0, y0) as f64;
        let v10 = self.get(x1, y0) as f64;
        let v01 = self.get(x0, y1) as f64;
        let v11 = self.get(x1, y1) as f64;
        let top = v00 + (v10 - v00) * fx;
        let bottom = v01 + (v11 - v01) * fx;
        top + (bottom - top) * fy
    }

    /// Bilinear resize. Output pixel centers are mapped uniformly onto the
    /// source extent, matching the lattice used by patch extraction.
    pub fn resize_bilinear(&self, width: u32, height: u32) -> GrayImage {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        for v in 0..height {
            for u in 0..width {
                let x = (u as f64 + 0.5) * sx;
                let y = (v as f64 + 0.5) * sy;
                data.push(self.sample_bilinear(x, y).round().clamp(0.0, 255.0) as u8);
            }
        }
        GrayImage::from_raw(width, height, data)
    }
}

/// Encodes a binary PGM (P5, maxval 255). Byte output is deterministic.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", image.width, image.height);
    let mut out = header.into_bytes();
    out.extend_from_slice(&image.data);
    out
}

/// Parses a binary PGM (P5, maxval 255). Comments (`#`) in the header are
/// accepted; other PNM variants and maxvals are rejected.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 {
        return Err(PgmError::Header("file shorter than magic number".into()));
    }
    let magic = &bytes[..2];
    if magic != b"P5" {
        return Err(PgmError::Unsupported(String::from_utf8_lossy(magic).into_owned()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        pos = skip_whitespace_and_comments(bytes, pos)?;
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(PgmError::Header("expected a decimal field".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are ascii");
        *field = text
            .parse()
            .map_err(|_| PgmError::Header(format!("bad field `{text}`")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(PgmError::Unsupported(format!("maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PgmError::Header("missing separator before raster".into()));
    }
    pos += 1;
    let expected = width * height;
    let body = &bytes[pos..];
    if body.len() < expected {
        return Err(PgmError::Truncated { expected, found: body.len() });
    }
    Ok(GrayImage::from_raw(
        width as u32,
        height as u32,
        body[..expected].to_vec(),
    ))
}

fn skip_whitespace_and_comments(bytes: &[u8], mut pos: usize) -> Result<usize, PgmError> {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return Ok(pos);
        }
    }
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, PgmError> {
    parse_pgm(&fs::read(path)?)
}

pub fn save_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<(), PgmError> {
    fs::write(path, encode_pgm(image))?;
    Ok(())
}

//! Binary PGM (P5) reading and writing.
//!
//! Header layout: `P5`, then width, height and maxval as ASCII decimal
//! tokens separated by whitespace (with `#` comments allowed between
//! tokens), then a single whitespace byte, then raw samples row-major
//! top-to-bottom. Samples are one byte each for maxval <= 255 and two
//! bytes big-endian for larger maxvals (up to 65535). Intensities are
//! normalized to [0, 1] by dividing by maxval.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::dataset::ImageMatrix;
use crate::error::{Error, Result};

pub fn read_pgm(path: &Path) -> Result<ImageMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

/// Decodes an in-memory P5 file. `origin` only names the source in errors.
pub fn decode_pgm(bytes: &[u8], origin: &Path) -> Result<ImageMatrix> {
    let fail = |reason: String| Error::PgmFormat {
        path: origin.to_path_buf(),
        reason,
    };

    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(fail("missing P5 magic".to_string()));
    }
    let mut pos = 2;
    let width = header_value(bytes, &mut pos)
        .ok_or_else(|| fail("missing or non-numeric width".to_string()))?;
    let height = header_value(bytes, &mut pos)
        .ok_or_else(|| fail("missing or non-numeric height".to_string()))?;
    let maxval = header_value(bytes, &mut pos)
        .ok_or_else(|| fail("missing or non-numeric maxval".to_string()))?;

    if width == 0 || height == 0 {
        return Err(fail(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(fail(format!("maxval {maxval} out of range 1..=65535")));
    }

    // Exactly one whitespace byte separates the header from the samples.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(fail("expected single whitespace before samples".to_string()));
    }
    pos += 1;

    let (w, h) = (width as usize, height as usize);
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let expected = w * h * bytes_per_sample;
    let body = &bytes[pos..];
    if body.len() < expected {
        return Err(fail(format!(
            "truncated sample data: expected {expected} bytes, found {}",
            body.len()
        )));
    }
    if body.len() > expected {
        return Err(fail(format!(
            "{} trailing bytes after sample data",
            body.len() - expected
        )));
    }

    let scale = 1.0 / maxval as f64;
    let mut data = Vec::with_capacity(w * h);
    if bytes_per_sample == 1 {
        for &b in body {
            let v = b as u64;
            if v > maxval {
                return Err(fail(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 * scale);
        }
    } else {
        for pair in body.chunks_exact(2) {
            let v = u16::from_be_bytes([pair[0], pair[1]]) as u64;
            if v > maxval {
                return Err(fail(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 * scale);
        }
    }

    ImageMatrix::new(w, h, data)
}

/// Reads one whitespace/comment-separated decimal token.
fn header_value(bytes: &[u8], pos: &mut usize) -> Option<u64> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return None;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
}

/// Writes an image as P5 with maxval 255. Intensities are clamped to
/// [0, 1] and quantized by rounding.
pub fn write_pgm(img: &ImageMatrix, path: &Path) -> Result<()> {
    let samples: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    write_pgm_samples(img.width(), img.height(), &samples, path)
}

/// Writes raw 8-bit samples (row-major) as P5 with maxval 255.
pub fn write_pgm_samples(width: usize, height: usize, samples: &[u8], path: &Path) -> Result<()> {
    assert_eq!(samples.len(), width * height, "sample count mismatch");
    let mut out = Vec::with_capacity(samples.len() + 32);
    write!(out, "P5\n{width} {height}\n255\n").expect("write to vec");
    out.extend_from_slice(samples);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

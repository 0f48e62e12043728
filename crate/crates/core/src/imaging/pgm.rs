use std::fs;
use std::io::Write;
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn load_pgm<T: Scalar>(path: impl AsRef<Path>) -> Result<GrayImage<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_pgm(&bytes)
}

/// Decodes a binary (P5) 8-bit PGM; intensities become `v / 255`.
pub fn read_pgm<T: Scalar>(bytes: &[u8]) -> Result<GrayImage<T>> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    match magic {
        b"P5" => {}
        b"P2" => return Err(Error::UnsupportedFormat("ASCII (P2) PGM".into())),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "magic `{}`",
                String::from_utf8_lossy(other)
            )))
        }
    }
    let width = parse_number(next_token(bytes, &mut pos)?)?;
    let height = parse_number(next_token(bytes, &mut pos)?)?;
    let maxval = parse_number(next_token(bytes, &mut pos)?)?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("maxval {maxval}, only 255 is supported")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader("missing raster separator".into()));
    }
    pos += 1;
    let raster = &bytes[pos..];
    let n = width * height;
    if raster.len() < n {
        return Err(Error::MalformedHeader(format!(
            "raster holds {} bytes, expected {n}",
            raster.len()
        )));
    }
    let scale = T::of(255.0);
    let pixels = raster[..n].iter().map(|&b| T::of(b as f64) / scale).collect();
    GrayImage::new(width, height, pixels)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedHeader("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_number(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedHeader(format!("bad number `{}`", String::from_utf8_lossy(tok))))
}

/// Encodes as P5 with `round(255 v)` bytes.
pub fn write_pgm<T: Scalar>(img: &GrayImage<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.pixels()
            .iter()
            .map(|&p| (p.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn save_pgm<T: Scalar>(img: &GrayImage<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&write_pgm(img)).map_err(io)
}

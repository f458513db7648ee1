use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BinaryMask, Field, Image};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Serialize, Deserialize)]
struct RawSidecar {
    width: usize,
    height: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

struct Pgm {
    width: usize,
    height: usize,
    samples: Vec<u16>,
}

fn parse_pgm(bytes: &[u8]) -> Result<Pgm> {
    let bad = |why: &str| Error::UnsupportedFormat(format!("PGM: {why}"));
    let mut pos = 2;
    let mut header = [0usize; 3];
    for slot in &mut header {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("bad header"))?;
        *slot = tok.parse().map_err(|_| bad("non-numeric header field"))?;
    }
    // exactly one whitespace byte separates maxval from the raster
    if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(bad("missing raster separator"));
    }
    pos += 1;
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "zero area".into(),
        });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval outside 1..=65535"));
    }
    let n = width * height;
    let raster = &bytes[pos..];
    let samples = if maxval < 256 {
        if raster.len() < n {
            return Err(bad("truncated raster"));
        }
        raster[..n].iter().map(|&b| b as u16).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(bad("truncated raster"));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(Pgm {
        width,
        height,
        samples,
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a binary PGM (8 or 16 bit) or a raw little-endian `f32` raster with
/// a `<path>.json` sidecar. Sample values are taken as-is.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    let bytes = read(path)?;
    if bytes.starts_with(b"P5") {
        let pgm = parse_pgm(&bytes)?;
        return Image::new(
            pgm.width,
            pgm.height,
            pgm.samples.into_iter().map(|v| T::lit(v as f64)).collect(),
        );
    }
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Err(Error::UnsupportedFormat(format!(
            "{} is neither P5 PGM nor raw float with sidecar",
            path.display()
        )));
    }
    let meta: RawSidecar = serde_json::from_slice(&read(&sidecar)?)
        .map_err(|e| Error::UnsupportedFormat(format!("sidecar: {e}")))?;
    if meta.width == 0 || meta.height == 0 {
        return Err(Error::InvalidDimensions {
            width: meta.width,
            height: meta.height,
            reason: "zero area".into(),
        });
    }
    if bytes.len() != 4 * meta.width * meta.height {
        return Err(Error::UnsupportedFormat(format!(
            "raw float file has {} bytes, sidecar says {}x{}",
            bytes.len(),
            meta.width,
            meta.height
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Image::new(meta.width, meta.height, data)
}

fn pgm_bytes(width: usize, height: usize, maxval: u16, raster: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    out.extend_from_slice(raster);
    out
}

/// Writes an 8-bit PGM: foreground 255, background 0.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let raster: Vec<u8> = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write(path.as_ref(), &pgm_bytes(mask.width(), mask.height(), 255, &raster))
}

/// Reads a PGM mask; any non-zero sample is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = read(path)?;
    if !bytes.starts_with(b"P5") {
        return Err(Error::UnsupportedFormat(format!(
            "{}: masks must be P5 PGM",
            path.display()
        )));
    }
    let pgm = parse_pgm(&bytes)?;
    Field::new(pgm.width, pgm.height, pgm.samples.into_iter().map(|v| v != 0).collect())
}

/// Writes a 16-bit PGM, rounding and saturating to `0..=65535`.
pub fn save_image_pgm16<T: Scalar>(img: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut raster = Vec::with_capacity(2 * img.len());
    for &v in img.as_slice() {
        let q = v.as_f64().round().clamp(0.0, 65535.0) as u16;
        raster.extend_from_slice(&q.to_be_bytes());
    }
    write(path.as_ref(), &pgm_bytes(img.width(), img.height(), 65535, &raster))
}

/// Writes a raw little-endian `f32` raster plus its JSON sidecar.
pub fn save_raw_f32<T: Scalar>(field: &Field<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut raster = Vec::with_capacity(4 * field.len());
    for &v in field.as_slice() {
        raster.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    write(path, &raster)?;
    let meta = serde_json::to_vec(&RawSidecar {
        width: field.width(),
        height: field.height(),
    })
    .expect("sidecar serializes");
    write(&sidecar_path(path), &meta)
}

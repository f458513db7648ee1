//! Region fitting error, boundary overlays and trace export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Field, Image};
use crate::levelset::RunTrace;
use crate::scalar::Scalar;

/// `(|R ∪ G| - |R ∩ G|) / |G|` with exact integer counts.
pub fn rfe(mask: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    mask.same_dims(gt)?;
    let mut union = 0u64;
    let mut inter = 0u64;
    let mut gt_count = 0u64;
    for (&a, &g) in mask.as_slice().iter().zip(gt.as_slice()) {
        union += (a | g) as u64;
        inter += (a & g) as u64;
        gt_count += g as u64;
    }
    if gt_count == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok((union - inter) as f64 / gt_count as f64)
}

/// Mask pixels with at least one 4-neighbour outside the mask or the image.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    Field::from_fn(w, h, |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        x == 0
            || y == 0
            || x + 1 == w
            || y + 1 == h
            || !mask.get(x - 1, y)
            || !mask.get(x + 1, y)
            || !mask.get(x, y - 1)
            || !mask.get(x, y + 1)
    })
}

/// 8-bit RGB raster, row-major.
pub type Rgb = Field<[u8; 3]>;

/// Min-max stretched grayscale rendering of `img` with the boundary of `mask`
/// painted in `color`.
pub fn overlay<T: Scalar>(img: &Image<T>, mask: &BinaryMask, color: [u8; 3]) -> Result<Rgb> {
    img.field().same_dims(mask)?;
    let (lo, hi) = img.min_max();
    let span = hi - lo;
    let edge = boundary(mask);
    let (w, h) = mask.dims();
    Ok(Field::from_fn(w, h, |x, y| {
        if edge.get(x, y) {
            return color;
        }
        let v = if span > T::zero() {
            ((img.get(x, y) - lo) / span).as_f64()
        } else {
            0.0
        };
        let g = (v * 255.0).round().clamp(0.0, 255.0) as u8;
        [g, g, g]
    }))
}

/// Writes an RGB raster as PNG when the extension is `.png`, otherwise as
/// binary PPM.
pub fn save_rgb(rgb: &Rgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = rgb.as_slice().iter().flatten().copied().collect();
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        let buf = image::RgbImage::from_raw(rgb.width() as u32, rgb.height() as u32, raw)
            .ok_or_else(|| Error::InvalidData("raster size does not match dimensions".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::UnsupportedFormat(other.to_string()),
            })
    } else {
        let mut bytes = format!("P6\n{} {}\n255\n", rgb.width(), rgb.height()).into_bytes();
        bytes.extend_from_slice(&raw);
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

pub const TRACE_HEADER: &str = "iter,energy,data,reg,rfe,ms";

/// CSV text of one trace; floats carry 17 significant digits.
pub fn trace_csv(trace: &RunTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let rfe = r.rfe.map(|v| format!("{v:.16e}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:.16e},{:.16e},{:.16e},{},{:.3}", r.iter, r.energy, r.data, r.reg, rfe, r.ms);
    }
    out
}

/// Path of the level-`level` trace derived from `base`: `run.csv` becomes
/// `run_L0.csv`.
pub fn level_path(base: &Path, level: usize) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_L{level}.{ext}"),
        None => format!("{stem}_L{level}"),
    };
    base.with_file_name(name)
}

/// Writes `traces[ℓ]` to `<stem>_L<ℓ>.<ext>` next to `base`; returns the
/// written paths.
pub fn export_trace(traces: &[RunTrace], base: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if traces.is_empty() {
        return Err(Error::param("traces", "nothing to export"));
    }
    let base = base.as_ref();
    traces
        .iter()
        .enumerate()
        .map(|(level, t)| {
            let path = level_path(base, level);
            std::fs::write(&path, trace_csv(t)).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::TraceRecord;

    fn mask(w: usize, h: usize, on: &[(usize, usize)]) -> BinaryMask {
        let mut m = Field::filled(w, h, false);
        for &(x, y) in on {
            m.set(x, y, true);
        }
        m
    }

    #[test]
    fn rfe_examples() {
        let gt = Field::from_fn(20, 20, |x, y| x < 10 && y < 10);
        assert_eq!(rfe(&gt, &gt).unwrap(), 0.0);
        assert_eq!(rfe(&Field::filled(20, 20, false), &gt).unwrap(), 1.0);
        assert_eq!(rfe(&Field::filled(20, 20, true), &gt).unwrap(), 3.0);
    }

    #[test]
    fn rfe_errors() {
        let empty = Field::filled(4, 4, false);
        assert!(matches!(rfe(&empty, &empty), Err(Error::EmptyGroundTruth)));
        let other = Field::filled(5, 4, true);
        assert!(matches!(rfe(&empty, &other), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn boundary_cases() {
        assert_eq!(boundary(&Field::filled(6, 5, false)).count(), 0);
        let full = boundary(&Field::filled(6, 5, true));
        assert_eq!(full.count(), 2 * 6 + 2 * 5 - 4);
        let single = boundary(&mask(6, 5, &[(2, 2)]));
        assert_eq!(single.count(), 1);
        assert!(single.get(2, 2));
    }

    #[test]
    fn overlay_paints_only_boundary() {
        let img = Image::new(3, 1, vec![0.0f64, 5.0, 10.0]).unwrap();
        let out = overlay(&img, &Field::filled(3, 1, false), [255, 0, 0]).unwrap();
        assert_eq!(out.as_slice(), &[[0, 0, 0], [128, 128, 128], [255, 255, 255]]);
        let one = overlay(&img, &mask(3, 1, &[(1, 0)]), [255, 0, 0]).unwrap();
        assert_eq!(one.get(1, 0), [255, 0, 0]);
        assert_eq!(one.get(0, 0), [0, 0, 0]);
    }

    #[test]
    fn level_paths() {
        assert_eq!(level_path(Path::new("out/trace.csv"), 2), PathBuf::from("out/trace_L2.csv"));
        assert_eq!(level_path(Path::new("trace"), 0), PathBuf::from("trace_L0"));
    }

    #[test]
    fn csv_layout() {
        let trace = RunTrace {
            records: (0..3)
                .map(|i| TraceRecord {
                    iter: i,
                    energy: 1.0 / 3.0,
                    data: 0.1,
                    reg: 0.2,
                    rfe: None,
                    ms: 1.5,
                })
                .collect(),
        };
        let text = trace_csv(&trace);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], TRACE_HEADER);
        let cols: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cols[4], "");
        assert_eq!(cols[1].parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}

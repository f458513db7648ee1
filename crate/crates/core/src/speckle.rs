//! Synthetic speckled test scenes with known ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Field, Image};
use crate::scalar::Scalar;

/// Noise-free reflectivity map and its object mask.
#[derive(Clone, Debug)]
pub struct Phantom<T> {
    pub clean: Image<T>,
    pub gt_mask: BinaryMask,
}

/// Shape layout in fractions of the canvas; radii scale with `min(w, h)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub ring_center: (f64, f64),
    pub ring_radii: (f64, f64),
    pub triangle: [(f64, f64); 3],
    pub shoe_center: (f64, f64),
    pub shoe_radii: (f64, f64),
}

pub(crate) const LAYOUT: Layout = Layout {
    ring_center: (0.27, 0.28),
    ring_radii: (0.07, 0.19),
    triangle: [(0.76, 0.08), (0.93, 0.45), (0.59, 0.45)],
    shoe_center: (0.5, 0.74),
    shoe_radii: (0.1, 0.2),
};

/// Opening of the horseshoe: the 90° wedge facing +y (down).
const SHOE_GAP: (f64, f64) = (std::f64::consts::FRAC_PI_4, 3.0 * std::f64::consts::FRAC_PI_4);

enum Hit {
    Background,
    Flat,
    /// Position along the horseshoe arc in `[0, 1]`.
    Arc(f64),
}

fn classify(w: usize, h: usize, x: usize, y: usize) -> Hit {
    use std::f64::consts::PI;
    let (wf, hf) = (w as f64, h as f64);
    let s = wf.min(hf);
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);

    let (cx, cy) = (LAYOUT.ring_center.0 * wf, LAYOUT.ring_center.1 * hf);
    let r = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
    if r >= LAYOUT.ring_radii.0 * s && r <= LAYOUT.ring_radii.1 * s {
        return Hit::Flat;
    }

    let v = LAYOUT.triangle.map(|(a, b)| (a * wf, b * hf));
    let edge = |(ax, ay): (f64, f64), (bx, by): (f64, f64)| (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    let e = [edge(v[0], v[1]), edge(v[1], v[2]), edge(v[2], v[0])];
    if e.iter().all(|&d| d >= 0.0) || e.iter().all(|&d| d <= 0.0) {
        return Hit::Flat;
    }

    let (cx, cy) = (LAYOUT.shoe_center.0 * wf, LAYOUT.shoe_center.1 * hf);
    let (dx, dy) = (px - cx, py - cy);
    let r = (dx * dx + dy * dy).sqrt();
    if r >= LAYOUT.shoe_radii.0 * s && r <= LAYOUT.shoe_radii.1 * s {
        let theta = dy.atan2(dx);
        if !(theta > SHOE_GAP.0 && theta < SHOE_GAP.1) {
            // arc runs from the gap's far edge (3π/4) around through the top
            let psi = (theta - SHOE_GAP.1).rem_euclid(2.0 * PI);
            let span = 2.0 * PI - (SHOE_GAP.1 - SHOE_GAP.0);
            return Hit::Arc((psi / span).clamp(0.0, 1.0));
        }
    }
    Hit::Background
}

/// Renders an annulus, a triangle and a horseshoe whose reflectivity ramps
/// from `fg_level` to `fg_level + gradient_span` along its arc.
pub fn make_shapes<T: Scalar>(
    width: usize,
    height: usize,
    fg_level: T,
    bg_level: T,
    gradient_span: T,
) -> Result<Phantom<T>> {
    if width < 64 || height < 64 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "shapes need at least 64x64".into(),
        });
    }
    if !(bg_level > T::zero()) || !(fg_level > bg_level) {
        return Err(Error::param("levels", "need fg_level > bg_level > 0"));
    }
    if !(gradient_span >= T::zero()) || !gradient_span.is_finite() {
        return Err(Error::param("gradient_span", "must be finite and non-negative"));
    }
    let mut clean = Vec::with_capacity(width * height);
    let mut mask = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (v, m) = match classify(width, height, x, y) {
                Hit::Background => (bg_level, false),
                Hit::Flat => (fg_level, true),
                Hit::Arc(t) => (fg_level + gradient_span * T::lit(t), true),
            };
            clean.push(v);
            mask.push(m);
        }
    }
    Ok(Phantom {
        clean: Image::new(width, height, clean)?,
        gt_mask: Field::new(width, height, mask)?,
    })
}

/// Unit-mean multiplicative gamma speckle: each pixel is drawn from
/// `Gamma(shape = alpha, scale = clean / alpha)`.
///
/// Rows use independent ChaCha8 streams (stream id = row index) of a
/// generator seeded with `seed`, so the output does not depend on the number
/// of worker threads.
pub fn simulate<T: Scalar>(clean: &Image<T>, shape_alpha: T, seed: u64) -> Result<Image<T>> {
    if !(shape_alpha > T::zero()) || !shape_alpha.is_finite() {
        return Err(Error::param("alpha", format!("must be positive, got {shape_alpha}")));
    }
    if clean.as_slice().iter().any(|&v| !(v > T::zero())) {
        return Err(Error::param("clean", "reflectivity must be strictly positive"));
    }
    let alpha = shape_alpha.as_f64();
    let unit = Gamma::new(alpha, 1.0).map_err(|e| Error::param("alpha", e.to_string()))?;
    let w = clean.width();
    let mut out = vec![T::zero(); clean.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(y as u64);
        for (x, o) in row.iter_mut().enumerate() {
            let scale = clean.get(x, y).as_f64() / alpha;
            let mut v = unit.sample(&mut rng) * scale;
            // keep the strictly-positive contract in single precision too
            if !(v > 0.0) {
                v = f64::MIN_POSITIVE;
            }
            *o = T::lit(v).max(T::min_positive_value());
        }
    });
    Image::new(w, clean.height(), out)
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LevelSet;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::scalar::Scalar;

/// `φ = max_i (r_i - |s - c_i|)` over 4 to 8 seeded circles, clamped to
/// `[-10, 10]`. Radii stay small enough that the circles cannot cover the
/// image, so both signs always occur.
pub fn random_init<T: Scalar>(width: usize, height: usize, seed: u64, epsilon: T) -> Result<LevelSet<T>> {
    if width < 8 || height < 8 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "random initialization needs at least 8x8".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = width.min(height) as f64;
    let count = rng.random_range(4..=8usize);
    let (r_lo, r_hi) = ((m / 12.0).max(1.0), (m / 6.0).max(1.5));
    let circles: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            let cx = rng.random_range(0.0..width as f64);
            let cy = rng.random_range(0.0..height as f64);
            let r = rng.random_range(r_lo..r_hi);
            (cx, cy, r)
        })
        .collect();
    let phi = Field::from_fn(width, height, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let d = circles
            .iter()
            .map(|&(cx, cy, r)| r - ((px - cx).powi(2) + (py - cy).powi(2)).sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        T::lit(d.clamp(-10.0, 10.0))
    });
    LevelSet::new(phi, epsilon)
}

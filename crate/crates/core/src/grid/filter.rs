use rayon::prelude::*;

use super::{reflect, BinaryMask, Field, Image};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Normalized 1-D Gaussian kernel truncated at radius `ceil(3σ)`.
pub fn gaussian_kernel<T: Scalar>(sigma: T) -> Result<Vec<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    let radius = (sigma * T::lit(3.0)).ceil().to_usize().unwrap_or(0);
    let two_s2 = T::lit(2.0) * sigma * sigma;
    let mut k: Vec<T> = (0..=2 * radius)
        .map(|i| {
            let d = T::from_usize_lossy(i) - T::from_usize_lossy(radius);
            (-(d * d) / two_s2).exp()
        })
        .collect();
    let total: T = k.iter().copied().sum();
    for v in &mut k {
        *v = *v / total;
    }
    Ok(k)
}

/// Separable Gaussian blur with mirror-reflected borders.
pub fn gaussian_smooth<T: Scalar>(img: &Image<T>, sigma: T) -> Result<Image<T>> {
    let kernel = gaussian_kernel(sigma)?;
    let smoothed = convolve_separable(img.field(), &kernel);
    // convex combination of non-negative values stays non-negative
    Image::from_field(smoothed.map(|v| v.max(T::zero())))
}

pub(crate) fn convolve_separable<T: Scalar>(src: &Field<T>, kernel: &[T]) -> Field<T> {
    let (w, h) = src.dims();
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![T::zero(); w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (i, &kv) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + i as isize - r, w);
                acc = acc + kv * src.get(sx, y);
            }
            *out = acc;
        }
    });
    let tmp = Field::new(w, h, tmp).expect("dims preserved");
    let mut out = vec![T::zero(); w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (i, &kv) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + i as isize - r, h);
                acc = acc + kv * tmp.get(x, sy);
            }
            *o = acc;
        }
    });
    Field::new(w, h, out).expect("dims preserved")
}

fn decimate<T: Copy>(src: &Field<T>) -> Result<Field<T>> {
    let (w, h) = src.dims();
    if w < 2 || h < 2 {
        return Err(Error::InvalidDimensions {
            width: w,
            height: h,
            reason: "downsampling needs at least 2x2".into(),
        });
    }
    Ok(Field::from_fn(w / 2, h / 2, |x, y| src.get(2 * x, 2 * y)))
}

/// Keeps the even-indexed samples: `out(x, y) = in(2x, 2y)`.
pub fn downsample2<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    Image::from_field(decimate(img.field())?)
}

/// Same decimation as [`downsample2`] applied to a mask.
pub fn downsample_mask(mask: &BinaryMask) -> Result<BinaryMask> {
    decimate(mask)
}

/// Bilinear ×2 upsampling where target sample `2x` sits exactly on source
/// sample `x`; samples past the last source column/row are clamped.
pub fn upsample2_field<T: Scalar>(field: &Field<T>, target_w: usize, target_h: usize) -> Result<Field<T>> {
    let (w, h) = field.dims();
    let ok_w = target_w == 2 * w || target_w == 2 * w + 1;
    let ok_h = target_h == 2 * h || target_h == 2 * h + 1;
    if !ok_w || !ok_h {
        return Err(Error::InvalidDimensions {
            width: target_w,
            height: target_h,
            reason: format!("upsampling target must be 2x or 2x+1 of {w}x{h}"),
        });
    }
    let half = T::lit(0.5);
    let taps = |i: usize, n: usize| -> (usize, usize, T) {
        let i0 = (i / 2).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        let frac = if i % 2 == 1 && i / 2 < n - 1 { half } else { T::zero() };
        (i0, i1, frac)
    };
    Ok(Field::from_fn(target_w, target_h, |x, y| {
        let (x0, x1, fx) = taps(x, w);
        let (y0, y1, fy) = taps(y, h);
        let top = field.get(x0, y0) * (T::one() - fx) + field.get(x1, y0) * fx;
        let bottom = field.get(x0, y1) * (T::one() - fx) + field.get(x1, y1) * fx;
        top * (T::one() - fy) + bottom * fy
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hand_kernel(sigma: f64) -> Vec<f64> {
        let r = (3.0 * sigma).ceil() as i64;
        let raw: Vec<f64> = (-r..=r)
            .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn constant_image_is_preserved() {
        for sigma in [0.3, 0.8, 1.7, 4.0] {
            let img = Image::constant(9, 5, 3.25f64);
            let out = gaussian_smooth(&img, sigma).unwrap();
            for &v in out.as_slice() {
                assert!((v - 3.25).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn impulse_center_equals_kernel_center_squared() {
        let mut data = vec![0.0f64; 15 * 15];
        data[7 * 15 + 7] = 1.0;
        let img = Image::new(15, 15, data).unwrap();
        let out = gaussian_smooth(&img, 1.0).unwrap();
        let k = hand_kernel(1.0);
        assert_eq!(k.len(), 7);
        let c = k[3];
        assert!((out.get(7, 7) - c * c).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_2d_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..10.0)).collect();
        let img = Image::new(8, 8, data).unwrap();
        let out = gaussian_smooth(&img, 0.5).unwrap();
        let k = hand_kernel(0.5);
        let r = (k.len() / 2) as isize;
        for y in 0..8isize {
            for x in 0..8isize {
                let mut acc = 0.0;
                for j in -r..=r {
                    for i in -r..=r {
                        acc += k[(i + r) as usize] * k[(j + r) as usize] * img.get_mirrored(x + i, y + j);
                    }
                }
                assert!((acc - out.get(x as usize, y as usize)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_positive_sigma_rejected() {
        let img = Image::constant(4, 4, 1.0f64);
        assert!(gaussian_smooth(&img, 0.0).is_err());
        assert!(gaussian_smooth(&img, -1.0).is_err());
    }

    #[test]
    fn downsample_index_arithmetic() {
        let img = Image::new(4, 4, (0..16).map(|i| (10 * (i / 4) + i % 4) as f64).collect()).unwrap();
        let d = downsample2(&img).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 2.0, 20.0, 22.0]);
        let five = Image::constant(5, 5, 2.0f64);
        let d5 = downsample2(&five).unwrap();
        assert_eq!(d5.dims(), (2, 2));
        assert!(d5.as_slice().iter().all(|&v| v == 2.0));
        assert!(downsample2(&Image::constant(1, 4, 1.0f64)).is_err());
    }

    #[test]
    fn upsample_constant_and_alignment() {
        let c = Field::filled(3, 2, 1.5f64);
        let up = upsample2_field(&c, 7, 4).unwrap();
        assert!(up.as_slice().iter().all(|&v| v == 1.5));

        let f = Field::new(2, 2, vec![0.0f64, 1.0, 0.0, 1.0]).unwrap();
        let up = upsample2_field(&f, 4, 4).unwrap();
        for y in 0..4 {
            assert_eq!(up.row(y), &[0.0, 0.5, 1.0, 1.0]);
        }
        assert!(upsample2_field(&f, 6, 4).is_err());
        assert!(upsample2_field(&f, 4, 3).is_err());
    }

    #[test]
    fn downsample_inverts_even_upsample() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Field::from_fn(5, 3, |_, _| rng.random_range(-2.0..2.0f64));
        let up = upsample2_field(&f, 10, 6).unwrap();
        assert_eq!(decimate(&up).unwrap(), f);
        let up_odd = upsample2_field(&f, 11, 7).unwrap();
        assert_eq!(decimate(&up_odd).unwrap(), f);
    }
}

//! Raster containers, PGM/raw float I/O, Gaussian smoothing, resampling and
//! image pyramids.

mod filter;
mod io;
mod pyramid;

pub use filter::{downsample2, downsample_mask, gaussian_kernel, gaussian_smooth, upsample2_field};
pub use io::{load_image, load_mask, save_image_pgm16, save_mask, save_raw_f32};
pub use pyramid::{build_pyramid, max_pyramid_levels, Pyramid};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major 2-D grid of values.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Field<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: "zero area".into(),
            });
        }
        if data.len() != width * height {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: format!("buffer holds {} values", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "zero-area field");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "zero-area field");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Value at `(x, y)` with half-sample mirror reflection outside the grid.
    #[inline]
    pub fn get_mirrored(&self, x: isize, y: isize) -> T {
        self.get(reflect(x, self.width), reflect(y, self.height))
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Field rotated 90° counter-clockwise: output(y, w-1-x) = input(x, y).
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Field::from_fn(h, w, |x, y| self.get(w - 1 - y, x))
    }

    pub fn same_dims<U>(&self, other: &Field<U>) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            });
        }
        Ok(())
    }
}

/// Half-sample symmetric reflection of index `i` into `0..n` (edge sample
/// repeated, period `2n`).
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m >= n { period - 1 - m } else { m }) as usize
}

/// Non-negative finite intensity image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    field: Field<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        Self::from_field(Field::new(width, height, data)?)
    }

    pub fn from_field(field: Field<T>) -> Result<Self> {
        if let Some(bad) = field.as_slice().iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return Err(Error::InvalidData(format!(
                "intensity {bad} is negative or non-finite"
            )));
        }
        Ok(Self { field })
    }

    pub fn constant(width: usize, height: usize, value: T) -> Self {
        assert!(value.is_finite() && value >= T::zero());
        Self {
            field: Field::filled(width, height, value),
        }
    }

    pub fn field(&self) -> &Field<T> {
        &self.field
    }

    pub fn into_field(self) -> Field<T> {
        self.field
    }

    pub fn mean_std(&self) -> (T, T) {
        let n = T::from_usize_lossy(self.len());
        let mean = self.as_slice().iter().copied().sum::<T>() / n;
        let var = self
            .as_slice()
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<T>()
            / n;
        (mean, var.sqrt())
    }

    pub fn min_max(&self) -> (T, T) {
        self.as_slice()
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            field: self.field.map(|v| U::lit(v.as_f64())),
        }
    }
}

impl<T> std::ops::Deref for Image<T> {
    type Target = Field<T>;

    fn deref(&self) -> &Field<T> {
        &self.field
    }
}

/// Binary segmentation mask; `true` marks the foreground (object) region.
pub type BinaryMask = Field<bool>;

impl Field<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn invert(&self) -> Self {
        self.map(|b| !b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_is_half_sample_symmetric() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(reflect(-3, 1), 0);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn image_rejects_negative_and_nan() {
        assert!(Image::new(2, 1, vec![1.0, -1.0]).is_err());
        assert!(Image::new(2, 1, vec![1.0, f64::NAN]).is_err());
        assert!(Image::new(0, 1, Vec::<f64>::new()).is_err());
        assert!(Image::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn rotate90_moves_corners() {
        let f = Field::from_fn(3, 2, |x, y| 10 * y + x);
        let r = f.rotate90();
        assert_eq!(r.dims(), (2, 3));
        // top-right corner of the input ends up top-left
        assert_eq!(r.get(0, 0), f.get(2, 0));
        assert_eq!(r.get(1, 2), f.get(0, 1));
    }
}

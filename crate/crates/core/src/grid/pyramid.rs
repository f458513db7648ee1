use super::{downsample2, gaussian_smooth, Image};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Coarse-to-fine stack; `levels[0]` is the input, `levels[l]` is `l`-fold
/// halved.
#[derive(Clone, Debug)]
pub struct Pyramid<T> {
    pub levels: Vec<Image<T>>,
    pub smoothing_scale: T,
}

impl<T> Pyramid<T> {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn coarsest(&self) -> &Image<T> {
        self.levels.last().expect("pyramid has at least one level")
    }
}

/// `floor(log2(min(w, h)))`, the largest admissible level count.
pub fn max_pyramid_levels(width: usize, height: usize) -> usize {
    let m = width.min(height);
    if m == 0 {
        0
    } else {
        (usize::BITS - 1 - m.leading_zeros()) as usize
    }
}

pub fn build_pyramid<T: Scalar>(img: &Image<T>, levels: usize, sigma0: T) -> Result<Pyramid<T>> {
    let bound = max_pyramid_levels(img.width(), img.height());
    if levels == 0 || levels > bound {
        return Err(Error::param(
            "levels",
            format!(
                "{levels} outside 1..={bound} for a {}x{} image",
                img.width(),
                img.height()
            ),
        ));
    }
    if !(sigma0 > T::zero()) {
        return Err(Error::param("sigma0", "must be positive"));
    }
    let mut out = Vec::with_capacity(levels);
    out.push(img.clone());
    for l in 1..levels {
        let next = downsample2(&gaussian_smooth(&out[l - 1], sigma0)?)?;
        out.push(next);
    }
    Ok(Pyramid {
        levels: out,
        smoothing_scale: sigma0,
    })
}

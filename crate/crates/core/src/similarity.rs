//! Patch PMFs for every pixel and the Gaussian-weighted pairwise patch
//! dissimilarities over a square non-local window.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{divergence, DivergenceKind, FeatureMap, JsMode};
use crate::error::{Error, Result};
use crate::grid::{reflect, Field, Image};
use crate::scalar::Scalar;
use crate::stats::{discretize_fit, estimate_clamped, Model, Moments, Pmf};

/// Per-pixel patch distributions on a shared support.
#[derive(Clone, Debug)]
pub struct PatchPmfField<T> {
    width: usize,
    height: usize,
    tau: usize,
    model: Model,
    edges: Arc<Vec<T>>,
    pmfs: Vec<Pmf<T>>,
    degenerate: Vec<bool>,
}

impl<T: Scalar> PatchPmfField<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn edges(&self) -> &Arc<Vec<T>> {
        &self.edges
    }

    pub fn pmf(&self, x: usize, y: usize) -> &Pmf<T> {
        &self.pmfs[y * self.width + x]
    }

    pub fn pmfs(&self) -> &[Pmf<T>] {
        &self.pmfs
    }

    pub fn is_degenerate(&self, x: usize, y: usize) -> bool {
        self.degenerate[y * self.width + x]
    }
}

fn check_patch(img_w: usize, img_h: usize, tau: usize) -> Result<()> {
    if tau == 0 {
        return Err(Error::param("tau", "half patch size must be at least 1"));
    }
    if 2 * tau + 1 > img_w.min(img_h) {
        return Err(Error::param(
            "tau",
            format!("patch {0}x{0} larger than {img_w}x{img_h} image", 2 * tau + 1),
        ));
    }
    Ok(())
}

/// Moments of the mirrored `(2τ+1)²` patch around every pixel, from
/// integral images of `z`, `z²` and `√z` accumulated in `f64`.
pub fn patch_moments<T: Scalar>(img: &Image<T>, tau: usize) -> Result<Field<Moments<T>>> {
    let (w, h) = img.dims();
    check_patch(w, h, tau)?;
    let (pw, ph) = (w + 2 * tau, h + 2 * tau);
    let stride = pw + 1;
    let mut sums = vec![[0.0f64; 3]; stride * (ph + 1)];
    for py in 0..ph {
        let sy = reflect(py as isize - tau as isize, h);
        let mut row = [0.0f64; 3];
        for px in 0..pw {
            let z = img.get(reflect(px as isize - tau as isize, w), sy).as_f64();
            row[0] += z;
            row[1] += z * z;
            row[2] += z.sqrt();
            let above = sums[py * stride + px + 1];
            sums[(py + 1) * stride + px + 1] = [above[0] + row[0], above[1] + row[1], above[2] + row[2]];
        }
    }
    let side = 2 * tau + 1;
    let count = side * side;
    let n = count as f64;
    Ok(Field::from_fn(w, h, |x, y| {
        let (x0, y0, x1, y1) = (x, y, x + side, y + side);
        let c = |k: usize| {
            sums[y1 * stride + x1][k] - sums[y0 * stride + x1][k] - sums[y1 * stride + x0][k]
                + sums[y0 * stride + x0][k]
        };
        let mean = c(0) / n;
        let var = (c(1) / n - mean * mean).max(0.0);
        Moments {
            mean: T::lit(mean),
            var: T::lit(var),
            m_half: T::lit(c(2) / n),
            count,
        }
    }))
}

/// Fits `model` to every patch and discretizes it on `edges`.
pub fn fit_field<T: Scalar>(
    img: &Image<T>,
    tau: usize,
    model: Model,
    edges: &Arc<Vec<T>>,
    looks: u32,
) -> Result<PatchPmfField<T>> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("edges", "must be strictly increasing"));
    }
    let moments = patch_moments(img, tau)?;
    let fitted: Vec<Result<(Pmf<T>, bool)>> = moments
        .as_slice()
        .par_iter()
        .map(|m| {
            let fit = estimate_clamped(model, m, looks)?;
            Ok((discretize_fit(&fit, edges), fit.degenerate))
        })
        .collect();
    let mut pmfs = Vec::with_capacity(fitted.len());
    let mut degenerate = Vec::with_capacity(fitted.len());
    for r in fitted {
        let (p, d) = r?;
        pmfs.push(p);
        degenerate.push(d);
    }
    Ok(PatchPmfField {
        width: img.width(),
        height: img.height(),
        tau,
        model,
        edges: edges.clone(),
        pmfs,
        degenerate,
    })
}

/// Dissimilarity between the patches at `s` and `t`.
pub fn pair_distance<T: Scalar>(
    field: &PatchPmfField<T>,
    s: (usize, usize),
    t: (usize, usize),
    kind: DivergenceKind,
    js_mode: JsMode,
) -> Result<T> {
    for (x, y) in [s, t] {
        if x >= field.width || y >= field.height {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: field.width,
                height: field.height,
            });
        }
    }
    divergence(kind, field.pmf(s.0, s.1), field.pmf(t.0, t.1), js_mode)
}

/// Scaling of the window Gaussian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelNorm {
    /// `exp(-|δ|²/2σ²)`: peak weight 1.
    Peak,
    /// `exp(-|δ|²/2σ²) / (2πσ²)`: the planar Gaussian density, so the total
    /// window weight stays near 1 whatever `σ` is.
    #[default]
    Density,
}

impl KernelNorm {
    pub fn name(self) -> &'static str {
        match self {
            KernelNorm::Peak => "peak",
            KernelNorm::Density => "density",
        }
    }
}

impl fmt::Display for KernelNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "peak" => Ok(KernelNorm::Peak),
            "density" => Ok(KernelNorm::Density),
            _ => Err(Error::param("kernel-norm", format!("unknown normalization `{s}`"))),
        }
    }
}

/// Truncated spatial Gaussian over `|δ|∞ ≤ radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct NlWindow<T> {
    radius: usize,
    sigma: T,
    norm: KernelNorm,
    weights: Vec<T>,
}

impl<T: Scalar> NlWindow<T> {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn norm(&self) -> KernelNorm {
        self.norm
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Centre weight: 1 for [`KernelNorm::Peak`], `1/(2πσ²)` for
    /// [`KernelNorm::Density`].
    pub fn peak(&self) -> T {
        self.weight(0, 0)
    }

    /// Weight at offset `(dx, dy)`.
    pub fn weight(&self, dx: isize, dy: isize) -> T {
        let r = self.radius as isize;
        assert!(dx.abs() <= r && dy.abs() <= r, "offset outside window");
        self.weights[((dy + r) * (2 * r + 1) + dx + r) as usize]
    }
}

/// Peak-normalized window: centre weight 1.
pub fn make_window<T: Scalar>(radius: usize, sigma: T) -> Result<NlWindow<T>> {
    make_window_with(radius, sigma, KernelNorm::Peak)
}

pub fn make_window_with<T: Scalar>(radius: usize, sigma: T, norm: KernelNorm) -> Result<NlWindow<T>> {
    if radius == 0 {
        return Err(Error::param("nl-radius", "must be at least 1"));
    }
    if !(sigma > T::zero()) {
        return Err(Error::param("nl-sigma", "must be positive"));
    }
    let r = radius as isize;
    let two_s2 = T::lit(2.0) * sigma * sigma;
    let scale = match norm {
        KernelNorm::Peak => T::one(),
        KernelNorm::Density => T::one() / (T::PI() * two_s2),
    };
    let mut weights = Vec::with_capacity((2 * radius + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = T::from_isize(dx * dx + dy * dy).expect("small offset");
            weights.push(scale * (-d2 / two_s2).exp());
        }
    }
    Ok(NlWindow {
        radius,
        sigma,
        norm,
        weights,
    })
}

/// Default Gaussian scale for a window of the given radius.
pub fn default_window_sigma<T: Scalar>(radius: usize) -> T {
    T::from_usize_lossy(radius) / T::lit(2.0)
}

/// `G_σ(s - t) · d(p_s, p_t)` for every in-image pair inside the window.
///
/// Patch features (logs, roots, cumulative sums) are precomputed per pixel.
/// When the full table fits in `cache_budget` bytes every pair value is
/// stored once up front; otherwise values are computed on demand.
#[derive(Clone, Debug)]
pub struct PairWeights<T> {
    width: usize,
    height: usize,
    radius: usize,
    offsets: Vec<(isize, isize, T)>,
    peak: T,
    fmap: FeatureMap,
    flen: usize,
    features: Vec<T>,
    scale: T,
    cache: Option<Vec<T>>,
}

/// Default memory budget for the pair table.
pub const DEFAULT_CACHE_BUDGET: usize = 1 << 30;

impl<T: Scalar> PairWeights<T> {
    pub fn new(
        field: &PatchPmfField<T>,
        window: &NlWindow<T>,
        kind: DivergenceKind,
        js_mode: JsMode,
        cache_budget: usize,
    ) -> Self {
        let fmap = FeatureMap::new(kind, js_mode);
        let bins = field.edges.len() - 1;
        let flen = fmap.len(bins);
        let mut features = Vec::with_capacity(flen * field.pmfs.len());
        for p in &field.pmfs {
            fmap.push_features(p.mass(), &mut features);
        }
        let r = window.radius as isize;
        let mut offsets = Vec::with_capacity(window.weights.len());
        for dy in -r..=r {
            for dx in -r..=r {
                offsets.push((dx, dy, window.weight(dx, dy)));
            }
        }
        let mut pw = Self {
            width: field.width,
            height: field.height,
            radius: window.radius,
            offsets,
            peak: window.peak(),
            fmap,
            flen,
            features,
            scale: T::one(),
            cache: None,
        };
        let entries = pw.width * pw.height * pw.offsets.len();
        if entries.saturating_mul(std::mem::size_of::<T>()) <= cache_budget {
            pw.cache = Some(pw.build_cache());
        }
        pw
    }

    fn build_cache(&self) -> Vec<T> {
        let per_pixel = self.offsets.len();
        let mut cache = vec![T::zero(); self.width * self.height * per_pixel];
        cache
            .par_chunks_mut(self.width * per_pixel)
            .enumerate()
            .for_each(|(y, row)| {
                for x in 0..self.width {
                    let slot = &mut row[x * per_pixel..(x + 1) * per_pixel];
                    for (o, v) in slot.iter_mut().enumerate() {
                        *v = self.compute(x, y, o).unwrap_or(T::zero());
                    }
                }
            });
        cache
    }

    #[inline]
    fn compute(&self, x: usize, y: usize, o: usize) -> Option<T> {
        let (dx, dy, g) = self.offsets[o];
        let tx = x as isize + dx;
        let ty = y as isize + dy;
        if tx < 0 || ty < 0 || tx >= self.width as isize || ty >= self.height as isize {
            return None;
        }
        let s = y * self.width + x;
        let t = ty as usize * self.width + tx as usize;
        let a = &self.features[s * self.flen..(s + 1) * self.flen];
        let b = &self.features[t * self.flen..(t + 1) * self.flen];
        Some(g * self.fmap.eval(a, b))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    /// Centre weight of the window the table was built from.
    pub fn peak(&self) -> T {
        self.peak
    }

    /// Multiplies every pair dissimilarity by `c`.
    pub fn scale_distances(&mut self, c: T) {
        self.scale = self.scale * c;
        if let Some(cache) = &mut self.cache {
            for v in cache.iter_mut() {
                *v = *v * c;
            }
        }
    }

    /// Calls `f(t, weight)` for every in-image partner `t` (linear index) of
    /// pixel `(x, y)`, in fixed window order.
    #[inline]
    pub fn for_each_partner(&self, x: usize, y: usize, mut f: impl FnMut(usize, T)) {
        let mut scratch = Vec::new();
        self.for_each_partner_run(x, y, &mut scratch, |t0, run| {
            for (k, &v) in run.iter().enumerate() {
                f(t0 + k, v);
            }
        });
    }

    /// Like [`for_each_partner`](Self::for_each_partner), but hands over one
    /// window row at a time: `f(t0, weights)` where partner `t0 + k` has
    /// weight `weights[k]`. `scratch` is only used when there is no cache.
    pub fn for_each_partner_run(&self, x: usize, y: usize, scratch: &mut Vec<T>, mut f: impl FnMut(usize, &[T])) {
        let r = self.radius as isize;
        let side = 2 * self.radius + 1;
        let (xi, yi) = (x as isize, y as isize);
        let x_lo = (xi - r).max(0);
        let x_hi = (xi + r).min(self.width as isize - 1);
        let y_lo = (yi - r).max(0);
        let y_hi = (yi + r).min(self.height as isize - 1);
        let len = (x_hi - x_lo + 1) as usize;
        let base = (y * self.width + x) * self.offsets.len();
        for ty in y_lo..=y_hi {
            let o = (ty - yi + r) as usize * side + (x_lo - xi + r) as usize;
            let t0 = ty as usize * self.width + x_lo as usize;
            match &self.cache {
                Some(c) => f(t0, &c[base + o..base + o + len]),
                None => {
                    scratch.clear();
                    scratch.extend((o..o + len).map(|k| self.compute(x, y, k).expect("in-image partner") * self.scale));
                    f(t0, scratch);
                }
            }
        }
    }
}

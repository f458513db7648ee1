//! Coarse-to-fine driver: solve on the coarsest pyramid level from a random
//! initialization, then carry the level set down one octave at a time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_pyramid, downsample_mask, max_pyramid_levels, upsample2_field, BinaryMask, Field, Image};
use crate::levelset::{nlac_run_monitored, random_init, NlacParams, RunTrace};
use crate::scalar::Scalar;
use crate::similarity::{default_window_sigma, fit_field, make_window_with, KernelNorm, PairWeights, DEFAULT_CACHE_BUDGET};
use crate::stats::{default_edges, Model};

/// Configuration shared by every pyramid level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsConfig<T> {
    /// Number of pyramid levels `L`; `1` is the single-scale method.
    pub levels: usize,
    pub nlac: NlacParams<T>,
    pub model: Model,
    /// Patch half-size; patches are `(2τ+1)²`.
    pub tau: usize,
    pub nl_radius: usize,
    /// Spread of the window kernel; `None` uses `nl_radius / 2`.
    pub nl_sigma: Option<T>,
    pub kernel_norm: KernelNorm,
    pub bins: usize,
    pub looks: u32,
    /// Pre-smoothing scale applied before each decimation.
    pub sigma0: T,
    pub seed: u64,
    /// Memory allowed for the per-level pair table, in bytes.
    pub cache_budget: usize,
}

impl<T: Scalar> Default for MsConfig<T> {
    fn default() -> Self {
        Self {
            levels: 3,
            nlac: NlacParams::default(),
            model: Model::Gamma,
            tau: 7,
            nl_radius: 30,
            nl_sigma: None,
            kernel_norm: KernelNorm::default(),
            bins: 64,
            looks: 1,
            sigma0: T::lit(0.8),
            seed: 0,
            cache_budget: DEFAULT_CACHE_BUDGET,
        }
    }
}

impl<T: Scalar> MsConfig<T> {
    /// Checks the configuration against an input of the given size.
    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        self.nlac.validate()?;
        let bound = max_pyramid_levels(width, height);
        if self.levels == 0 || self.levels > bound {
            return Err(Error::param(
                "scales",
                format!("{} outside 1..={bound} for a {width}x{height} image", self.levels),
            ));
        }
        let (cw, ch) = (width >> (self.levels - 1), height >> (self.levels - 1));
        let side = 2 * self.tau + 1;
        if cw < 8 || ch < 8 || side > cw || side > ch {
            return Err(Error::param(
                "scales",
                format!(
                    "coarsest level {cw}x{ch} is too small for {side}x{side} patches (minimum 8x8)"
                ),
            ));
        }
        if self.bins == 0 {
            return Err(Error::param("bins", "must be at least 1"));
        }
        if self.looks == 0 {
            return Err(Error::param("looks", "must be at least 1"));
        }
        if self.nl_radius == 0 {
            return Err(Error::param("nl-radius", "must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of one pyramid level.
#[derive(Clone, Debug)]
pub struct LevelRun {
    /// Pyramid index; `0` is full resolution.
    pub level: usize,
    pub width: usize,
    pub height: usize,
    pub trace: RunTrace,
    pub xi: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct MsResult {
    pub mask: BinaryMask,
    /// One entry per level in execution order (coarsest first).
    pub levels: Vec<LevelRun>,
}

impl MsResult {
    /// Traces indexed by pyramid level (`traces()[0]` is full resolution).
    pub fn traces(&self) -> Vec<RunTrace> {
        let mut runs: Vec<&LevelRun> = self.levels.iter().collect();
        runs.sort_by_key(|r| r.level);
        runs.into_iter().map(|r| r.trace.clone()).collect()
    }

    /// Total number of pixel updates, `Σ_ℓ iterations_ℓ · N_ℓ`.
    pub fn pixel_iterations(&self) -> usize {
        self.levels
            .iter()
            .map(|r| r.trace.len().saturating_sub(1) * r.width * r.height)
            .sum()
    }
}

/// Runs the coarse-to-fine segmentation. `gt`, when given, is decimated
/// alongside the image so every level's trace carries an RFE column.
pub fn msnlac_run<T: Scalar>(img: &Image<T>, cfg: &MsConfig<T>, gt: Option<&BinaryMask>) -> Result<MsResult> {
    msnlac_run_monitored(img, cfg, gt, &mut |_, _, _| {})
}

/// Like [`msnlac_run`]; `on_iter(level, i, φ)` sees every recorded iterate.
pub fn msnlac_run_monitored<T: Scalar>(
    img: &Image<T>,
    cfg: &MsConfig<T>,
    gt: Option<&BinaryMask>,
    on_iter: &mut dyn FnMut(usize, usize, &Field<T>),
) -> Result<MsResult> {
    cfg.validate_for(img.width(), img.height())?;
    if let Some(g) = gt {
        img.field().same_dims(g)?;
    }
    let pyramid = build_pyramid(img, cfg.levels, cfg.sigma0)?;
    let mut gts: Vec<Option<BinaryMask>> = vec![gt.cloned()];
    for l in 1..cfg.levels {
        let next = match &gts[l - 1] {
            Some(g) => Some(downsample_mask(g)?),
            None => None,
        };
        gts.push(next);
    }
    let sigma = cfg.nl_sigma.unwrap_or_else(|| default_window_sigma(cfg.nl_radius));
    let window = make_window_with(cfg.nl_radius, sigma, cfg.kernel_norm)?;

    let coarsest = pyramid.coarsest();
    let mut phi = random_init(coarsest.width(), coarsest.height(), cfg.seed, cfg.nlac.epsilon)?.phi;
    let mut runs = Vec::with_capacity(cfg.levels);
    for l in (0..cfg.levels).rev() {
        let level_img = &pyramid.levels[l];
        if phi.dims() != level_img.dims() {
            phi = upsample2_field(&phi, level_img.width(), level_img.height())?;
        }
        let edges = default_edges(level_img, cfg.bins)?;
        let field = fit_field(level_img, cfg.tau, cfg.model, &edges, cfg.looks)?;
        let pairs = PairWeights::new(&field, &window, cfg.nlac.kind, cfg.nlac.js_mode, cfg.cache_budget);
        let gt_l = gts[l].as_ref().filter(|g| g.count() > 0);
        let res = nlac_run_monitored(&pairs, &phi, &cfg.nlac, gt_l, &mut |i, p| on_iter(l, i, p))?;
        runs.push(LevelRun {
            level: l,
            width: level_img.width(),
            height: level_img.height(),
            trace: res.trace,
            xi: res.xi.as_f64(),
            converged: res.converged,
        });
        phi = res.level_set.phi;
    }
    let mask = cfg.nlac.polarity.apply(phi.map(|v| v > T::zero()));
    Ok(MsResult { mask, levels: runs })
}

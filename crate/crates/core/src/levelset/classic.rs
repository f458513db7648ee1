use serde::{Deserialize, Serialize};

use super::descent::{descend, DescentSettings, Eval};
use super::energy::reg_terms;
use super::{heaviside, heaviside_prime, LevelSet, Polarity, RunTrace, XiPolicy};
use crate::error::{Error, Result};
use crate::eval::rfe;
use crate::grid::{gaussian_smooth, BinaryMask, Field, Image};
use crate::scalar::Scalar;
use crate::stats::special::ln_gamma;
use crate::stats::{estimate, moments, DistParams, Model};

/// Upper bound on the fitted gamma shape; keeps the log-likelihood of
/// nearly constant regions finite.
const ALPHA_CAP: f64 = 1e3;

/// Settings of the two-region edge-weighted active contour.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicParams<T> {
    pub lambda: T,
    pub xi: XiPolicy<T>,
    pub omega: T,
    pub max_iters: usize,
    pub epsilon: T,
    /// Gaussian scale of the pre-smoothing inside the edge indicator.
    pub edge_sigma: T,
    /// The run stops early once either region has fewer pixels than this.
    pub min_region: usize,
    pub clamp: T,
    pub polarity: Polarity,
}

impl<T: Scalar> Default for ClassicParams<T> {
    fn default() -> Self {
        Self {
            lambda: T::lit(0.2),
            xi: XiPolicy::Fixed(T::one()),
            omega: T::lit(1e-3),
            max_iters: 200,
            epsilon: T::one(),
            edge_sigma: T::lit(1.5),
            min_region: 16,
            clamp: T::lit(10.0),
            polarity: Polarity::default(),
        }
    }
}

impl<T: Scalar> ClassicParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= T::zero()) {
            return Err(Error::param("lambda", "must be non-negative"));
        }
        if !(self.omega > T::zero()) {
            return Err(Error::param("omega", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(self.epsilon > T::zero()) || !(self.clamp > T::zero()) {
            return Err(Error::param("epsilon", "epsilon and clamp must be positive"));
        }
        if !(self.edge_sigma > T::zero()) {
            return Err(Error::param("edge_sigma", "must be positive"));
        }
        self.xi.validate()
    }
}

#[derive(Clone, Debug)]
pub struct ClassicResult<T> {
    pub level_set: LevelSet<T>,
    pub trace: RunTrace,
    pub xi: T,
    pub converged: bool,
    /// A region shrank below `min_region` pixels and the run stopped.
    pub collapsed: bool,
    pub iterations: usize,
}

/// Edge-stopping weight `1 / (1 + |∇(G_σ ⋆ f)|²)`.
pub fn edge_indicator<T: Scalar>(img: &Image<T>, sigma: T) -> Result<Field<T>> {
    let smooth = gaussian_smooth(img, sigma)?;
    let (w, h) = smooth.dims();
    let half = T::lit(0.5);
    Ok(Field::from_fn(w, h, |x, y| {
        let gx = (smooth.get((x + 1).min(w - 1), y) - smooth.get(x.saturating_sub(1), y)) * half;
        let gy = (smooth.get(x, (y + 1).min(h - 1)) - smooth.get(x, y.saturating_sub(1))) * half;
        T::one() / (T::one() + gx * gx + gy * gy)
    }))
}

/// Log-density parameters `(alpha, rate)` of a gamma fit to `samples`.
fn gamma_fit<T: Scalar>(samples: &[T]) -> Result<(T, T)> {
    let fit = estimate(Model::Gamma, &moments(samples)?, 1)?;
    let DistParams::Gamma { alpha, .. } = fit.params else {
        unreachable!("gamma model yields gamma parameters")
    };
    let alpha = alpha.min(T::lit(ALPHA_CAP));
    let mean = fit.mean.max(T::min_positive_value());
    Ok((alpha, alpha / mean))
}

#[inline]
fn gamma_ln_pdf<T: Scalar>(z: T, alpha: T, rate: T, ln_norm: T) -> T {
    let z = z.max(T::min_positive_value());
    ln_norm + (alpha - T::one()) * z.ln() - rate * z
}

/// Two-region active contour with gamma region likelihoods and an
/// edge-weighted length penalty.
///
/// Region parameters are re-estimated from the sign of `φ` before every
/// gradient step.
pub fn classic_ac_run<T: Scalar>(
    img: &Image<T>,
    phi0: &Field<T>,
    params: &ClassicParams<T>,
    gt: Option<&BinaryMask>,
) -> Result<ClassicResult<T>> {
    params.validate()?;
    img.field().same_dims(phi0)?;
    if let Some(g) = gt {
        phi0.same_dims(g)?;
    }
    let g_edge = edge_indicator(img, params.edge_sigma)?;
    let eps = params.epsilon;
    let settings = DescentSettings {
        xi: params.xi,
        omega: params.omega,
        max_iters: params.max_iters,
        clamp: params.clamp,
    };
    let outcome = descend(
        phi0,
        &settings,
        |phi| {
            let mut inside = Vec::new();
            let mut outside = Vec::new();
            for (&p, &z) in phi.as_slice().iter().zip(img.as_slice()) {
                if p > T::zero() {
                    inside.push(z);
                } else {
                    outside.push(z);
                }
            }
            if inside.len() < params.min_region.max(2) || outside.len() < params.min_region.max(2) {
                return Ok(Eval::Stop);
            }
            let (a_in, r_in) = gamma_fit(&inside)?;
            let (a_out, r_out) = gamma_fit(&outside)?;
            let n_in = a_in * r_in.ln() - ln_gamma(a_in);
            let n_out = a_out * r_out.ln() - ln_gamma(a_out);
            let (reg, reg_grad) = reg_terms(phi, eps, Some(&g_edge));
            let mut data = T::zero();
            let mut grad = reg_grad;
            for ((g, &p), &z) in grad.as_mut_slice().iter_mut().zip(phi.as_slice()).zip(img.as_slice()) {
                let l_in = gamma_ln_pdf(z, a_in, r_in, n_in);
                let l_out = gamma_ln_pdf(z, a_out, r_out, n_out);
                let h = heaviside(p, eps);
                data = data - (h * l_in + (T::one() - h) * l_out);
                *g = params.lambda * *g - heaviside_prime(p, eps) * (l_in - l_out);
            }
            let terms = super::EnergyTerms {
                total: data + params.lambda * reg,
                data,
                reg,
            };
            Ok(Eval::Ok(terms, grad))
        },
        |_, phi| {
            gt.and_then(|g| {
                let mask = params.polarity.apply(phi.map(|v| v > T::zero()));
                rfe(&mask, g).ok()
            })
        },
    )?;
    let iterations = outcome.trace.len().saturating_sub(1);
    Ok(ClassicResult {
        level_set: LevelSet::new(outcome.phi, eps)?,
        trace: outcome.trace,
        xi: outcome.xi,
        converged: outcome.converged,
        collapsed: outcome.stopped,
        iterations,
    })
}

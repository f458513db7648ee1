//! Parametric intensity models for patches: moments, moment-based parameter
//! estimation, densities and discretization to probability mass functions.

mod pmf;
pub mod special;

pub use pmf::{default_edges, discretize, discretize_fit, uniform_edges, Pmf, EPS_FLOOR};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use special::ln_gamma;

/// Sample moments used by the estimators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments<T> {
    pub mean: T,
    /// Population variance (divides by `count`).
    pub var: T,
    /// Mean of the square roots, `E[sqrt z]`.
    pub m_half: T,
    pub count: usize,
}

impl<T: Scalar> Moments<T> {
    /// Builds moments from running sums of `z`, `z^2` and `sqrt z`.
    pub fn from_sums(sum: T, sum_sq: T, sum_sqrt: T, count: usize) -> Self {
        let n = T::from_usize_lossy(count);
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(T::zero());
        Self {
            mean,
            var,
            m_half: sum_sqrt / n,
            count,
        }
    }

    /// True when the sample has no measurable spread.
    pub fn is_degenerate(&self) -> bool {
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        self.var <= tol * self.mean * self.mean
    }
}

pub fn moments<T: Scalar>(samples: &[T]) -> Result<Moments<T>> {
    if samples.len() < 2 {
        return Err(Error::param("samples", "need at least two samples"));
    }
    if let Some(bad) = samples.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
        return Err(Error::param("samples", format!("negative or non-finite sample {bad}")));
    }
    let n = T::from_usize_lossy(samples.len());
    let mean = samples.iter().copied().sum::<T>() / n;
    let var = samples.iter().map(|&z| (z - mean) * (z - mean)).sum::<T>() / n;
    let m_half = samples.iter().map(|z| z.sqrt()).sum::<T>() / n;
    Ok(Moments {
        mean,
        var,
        m_half,
        count: samples.len(),
    })
}

/// Patch intensity model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    LogNormal,
    Rayleigh,
    Gamma,
    Weibull,
    Ga0,
}

impl Model {
    pub const ALL: [Model; 5] = [
        Model::LogNormal,
        Model::Rayleigh,
        Model::Gamma,
        Model::Weibull,
        Model::Ga0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Model::LogNormal => "lognormal",
            Model::Rayleigh => "rayleigh",
            Model::Gamma => "gamma",
            Model::Weibull => "weibull",
            Model::Ga0 => "ga0",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::param("model", format!("unknown model `{s}`")))
    }
}

/// Parameters of one of the five models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistParams<T> {
    LogNormal { mu: T, sigma: T },
    Rayleigh { sigma: T },
    /// Shape `alpha`, rate `beta`.
    Gamma { alpha: T, beta: T },
    /// Shape `beta`, scale `eta`.
    Weibull { beta: T, eta: T },
    /// Roughness `alpha < -1`, scale `gamma`, number of looks `looks`.
    Ga0 { alpha: T, gamma: T, looks: u32 },
}

impl<T: Scalar> DistParams<T> {
    pub fn model(&self) -> Model {
        match self {
            DistParams::LogNormal { .. } => Model::LogNormal,
            DistParams::Rayleigh { .. } => Model::Rayleigh,
            DistParams::Gamma { .. } => Model::Gamma,
            DistParams::Weibull { .. } => Model::Weibull,
            DistParams::Ga0 { .. } => Model::Ga0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v > T::zero() && v.is_finite();
        let ok = match *self {
            DistParams::LogNormal { mu, sigma } => mu.is_finite() && pos(sigma),
            DistParams::Rayleigh { sigma } => pos(sigma),
            DistParams::Gamma { alpha, beta } => pos(alpha) && pos(beta),
            DistParams::Weibull { beta, eta } => pos(beta) && pos(eta),
            DistParams::Ga0 { alpha, gamma, looks } => alpha < -T::one() && pos(gamma) && looks >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("params", format!("{self:?} violates model constraints")))
        }
    }

    /// Density at `z`; closed-form limits are used at `z = 0`.
    pub fn pdf(&self, z: T) -> Result<T> {
        self.validate()?;
        if !(z >= T::zero()) {
            return Err(Error::param("z", format!("density needs z >= 0, got {z}")));
        }
        Ok(self.pdf_unchecked(z))
    }

    pub(crate) fn pdf_unchecked(&self, z: T) -> T {
        let zero = T::zero();
        let one = T::one();
        let two = T::lit(2.0);
        match *self {
            DistParams::LogNormal { mu, sigma } => {
                if z <= zero {
                    return zero;
                }
                let d = z.ln() - mu;
                (-(d * d) / (two * sigma * sigma)).exp() / ((two * T::PI()).sqrt() * sigma * z)
            }
            DistParams::Rayleigh { sigma } => {
                let s2 = sigma * sigma;
                z / s2 * (-(z * z) / (two * s2)).exp()
            }
            DistParams::Gamma { alpha, beta } => {
                if z <= zero {
                    return power_limit_at_zero(alpha - one, beta);
                }
                (alpha * beta.ln() - ln_gamma(alpha) + (alpha - one) * z.ln() - beta * z).exp()
            }
            DistParams::Weibull { beta, eta } => {
                if z <= zero {
                    return power_limit_at_zero(beta - one, one / eta);
                }
                let u = z / eta;
                beta / eta * u.powf(beta - one) * (-u.powf(beta)).exp()
            }
            DistParams::Ga0 { alpha, gamma, looks } => {
                if z <= zero {
                    return zero;
                }
                let n = T::from_u32(looks).expect("looks fits");
                let log = two.ln() + n * n.ln() + ln_gamma(n - alpha)
                    - alpha * gamma.ln()
                    - ln_gamma(-alpha)
                    - ln_gamma(n)
                    + (two * n - one) * z.ln()
                    - (n - alpha) * (gamma + z * z * n).ln();
                log.exp()
            }
        }
    }
}

/// Limit at `z -> 0+` of a density behaving like `c z^power`.
fn power_limit_at_zero<T: Scalar>(power: T, at_one: T) -> T {
    if power > T::zero() {
        T::zero()
    } else if power < T::zero() {
        T::infinity()
    } else {
        at_one
    }
}

/// Fitted parameters plus flags describing how they were obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fit<T> {
    pub params: DistParams<T>,
    pub mean: T,
    /// Zero-variance sample; the PMF is then a point mass at `mean`.
    pub degenerate: bool,
    /// A root finder saturated at its bracket end.
    pub clamped: bool,
}

/// Shape of a zero-variance fit: gamma with shape capped at 1e6.
const DEGENERATE_SHAPE: f64 = 1e6;

fn degenerate_params<T: Scalar>(model: Model, mean: T, looks: u32) -> DistParams<T> {
    let mean = mean.max(T::min_positive_value());
    let big = T::lit(DEGENERATE_SHAPE);
    match model {
        Model::LogNormal => DistParams::LogNormal {
            mu: mean.ln(),
            sigma: big.recip(),
        },
        Model::Rayleigh => DistParams::Rayleigh {
            sigma: mean * (T::lit(2.0) / T::PI()).sqrt(),
        },
        Model::Gamma => DistParams::Gamma {
            alpha: big,
            beta: big / mean,
        },
        Model::Weibull => DistParams::Weibull {
            beta: T::lit(WEIBULL_BRACKET.1),
            eta: mean,
        },
        Model::Ga0 => DistParams::Ga0 {
            alpha: T::lit(GA0_BRACKET.0),
            gamma: mean * mean,
            looks,
        },
    }
}

/// Moment-based estimation. `looks` is used by [`Model::Ga0`] only.
///
/// Root-finder saturation is reported as an error; see [`estimate_clamped`]
/// for the variant that falls back to the bracket ends.
pub fn estimate<T: Scalar>(model: Model, m: &Moments<T>, looks: u32) -> Result<Fit<T>> {
    estimate_impl(model, m, looks, false)
}

/// Like [`estimate`] but a G_A^0 root outside the search bracket is replaced
/// by the nearer bracket end and flagged `clamped`.
pub fn estimate_clamped<T: Scalar>(model: Model, m: &Moments<T>, looks: u32) -> Result<Fit<T>> {
    estimate_impl(model, m, looks, true)
}

fn estimate_impl<T: Scalar>(model: Model, m: &Moments<T>, looks: u32, clamp: bool) -> Result<Fit<T>> {
    if !(m.mean >= T::zero()) || !(m.var >= T::zero()) {
        return Err(Error::param("moments", "mean and variance must be non-negative"));
    }
    if looks == 0 {
        return Err(Error::param("looks", "must be at least 1"));
    }
    if m.is_degenerate() {
        return Ok(Fit {
            params: degenerate_params(model, m.mean, looks),
            mean: m.mean,
            degenerate: true,
            clamped: false,
        });
    }
    let (mean, var) = (m.mean, m.var);
    let e2 = mean * mean;
    let mut clamped = false;
    let params = match model {
        Model::LogNormal => DistParams::LogNormal {
            mu: (e2 / (var + e2).sqrt()).ln(),
            sigma: (var / e2 + T::one()).ln().sqrt(),
        },
        Model::Rayleigh => DistParams::Rayleigh {
            sigma: (T::lit(2.0) * var / (T::lit(4.0) - T::PI())).sqrt(),
        },
        Model::Gamma => DistParams::Gamma {
            alpha: e2 / var,
            beta: mean / var,
        },
        Model::Weibull => {
            let shape = solve_weibull_shape(var / e2)?;
            clamped = shape.saturated;
            let beta = shape.beta;
            DistParams::Weibull {
                beta,
                eta: mean / ln_gamma(T::one() + beta.recip()).exp(),
            }
        }
        Model::Ga0 => {
            let sol = match solve_ga0_alpha(m.m_half, mean, looks) {
                Ok(s) => s,
                Err(Error::RootNotBracketed { res_lo, .. }) if clamp => {
                    clamped = true;
                    // residual decreases in alpha: both ends positive puts
                    // the root above the bracket (heavier tail than -1.05)
                    let alpha = if res_lo > 0.0 {
                        T::lit(GA0_BRACKET.1)
                    } else {
                        T::lit(GA0_BRACKET.0)
                    };
                    Ga0Solution {
                        alpha,
                        gamma: ga0_gamma(alpha, mean, looks),
                        residual: T::nan(),
                    }
                }
                Err(e) => return Err(e),
            };
            DistParams::Ga0 {
                alpha: sol.alpha,
                gamma: sol.gamma,
                looks,
            }
        }
    };
    params.validate()?;
    Ok(Fit {
        params,
        mean,
        degenerate: false,
        clamped,
    })
}

/// Bisection bracket for the Weibull shape.
pub const WEIBULL_BRACKET: (f64, f64) = (0.05, 50.0);
/// Bisection bracket for the G_A^0 roughness.
pub const GA0_BRACKET: (f64, f64) = (-25.0, -1.05);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeibullShape<T> {
    pub beta: T,
    /// `cv2(beta) - target`.
    pub residual: T,
    pub converged: bool,
    /// Target below the attainable range; `beta` pinned at the upper bracket.
    pub saturated: bool,
}

/// Squared coefficient of variation of a Weibull law with shape `beta`:
/// `Γ(1+2/β) / Γ(1+1/β)^2 - 1`.
pub fn weibull_cv2<T: Scalar>(beta: T) -> T {
    let one = T::one();
    (ln_gamma(one + T::lit(2.0) / beta) - T::lit(2.0) * ln_gamma(one + one / beta)).exp_m1()
}

/// Inverts [`weibull_cv2`] by bisection on [`WEIBULL_BRACKET`].
pub fn solve_weibull_shape<T: Scalar>(cv2: T) -> Result<WeibullShape<T>> {
    if !(cv2 > T::zero()) || !cv2.is_finite() {
        return Err(Error::param("cv2", format!("must be positive, got {cv2}")));
    }
    let (mut lo, mut hi) = (T::lit(WEIBULL_BRACKET.0), T::lit(WEIBULL_BRACKET.1));
    let f = |b: T| weibull_cv2(b) - cv2;
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f_lo < T::zero() {
        return Err(Error::RootNotBracketed {
            lo: WEIBULL_BRACKET.0,
            hi: WEIBULL_BRACKET.1,
            res_lo: f_lo.as_f64(),
            res_hi: f_hi.as_f64(),
        });
    }
    if f_hi >= T::zero() {
        return Ok(WeibullShape {
            beta: hi,
            residual: f_hi,
            converged: true,
            saturated: f_hi > T::zero(),
        });
    }
    // cv2 is decreasing in beta: f(lo) > 0 > f(hi)
    let mid = bisect(&mut lo, &mut hi, |b| f(b) > T::zero());
    let residual = f(mid);
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(1e3) * (T::one() + cv2));
    Ok(WeibullShape {
        beta: mid,
        residual,
        converged: residual.abs() < tol,
        saturated: false,
    })
}

/// Shrinks `[lo, hi]` until it cannot shrink further; `go_right(mid)` says
/// whether the root lies above `mid`.
fn bisect<T: Scalar>(lo: &mut T, hi: &mut T, go_right: impl Fn(T) -> bool) -> T {
    let half = T::lit(0.5);
    for _ in 0..400 {
        let mid = (*lo + *hi) * half;
        if mid <= *lo || mid >= *hi {
            break;
        }
        if go_right(mid) {
            *lo = mid;
        } else {
            *hi = mid;
        }
    }
    (*lo + *hi) * half
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ga0Solution<T> {
    pub alpha: T,
    pub gamma: T,
    pub residual: T,
}

/// `Γ²(-α-1/4) / (Γ(-α) Γ(-α-1/2))`, the roughness side of the root equation.
fn ga0_alpha_term<T: Scalar>(alpha: T) -> T {
    let a = -alpha;
    (T::lit(2.0) * ln_gamma(a - T::lit(0.25)) - ln_gamma(a) - ln_gamma(a - T::lit(0.5))).exp()
}

fn ga0_looks_term<T: Scalar>(looks: u32) -> T {
    let n = T::from_u32(looks).expect("looks fits");
    (ln_gamma(n) + ln_gamma(n + T::lit(0.5)) - T::lit(2.0) * ln_gamma(n + T::lit(0.25))).exp()
}

/// Residual of the G_A^0 moment equation at `alpha`.
pub fn ga0_residual<T: Scalar>(alpha: T, m_half: T, m1: T, looks: u32) -> T {
    ga0_alpha_term(alpha) - m_half * m_half / m1 * ga0_looks_term::<T>(looks)
}

/// Scale from the first moment once `alpha` is known.
pub fn ga0_gamma<T: Scalar>(alpha: T, m1: T, looks: u32) -> T {
    let n = T::from_u32(looks).expect("looks fits");
    let a = -alpha;
    let ratio = (ln_gamma(a) + ln_gamma(n) - ln_gamma(a - T::lit(0.5)) - ln_gamma(n + T::lit(0.5))).exp();
    m1 * m1 * n * ratio * ratio
}

/// Solves the G_A^0 moment equation for `alpha` on [`GA0_BRACKET`] by
/// bisection, then derives `gamma`.
pub fn solve_ga0_alpha<T: Scalar>(m_half: T, m1: T, looks: u32) -> Result<Ga0Solution<T>> {
    if !(m1 > T::zero()) || !(m_half > T::zero()) || looks == 0 {
        return Err(Error::param("moments", "need m_half > 0, m1 > 0, looks >= 1"));
    }
    let (mut lo, mut hi) = (T::lit(GA0_BRACKET.0), T::lit(GA0_BRACKET.1));
    let f = |a: T| ga0_residual(a, m_half, m1, looks);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f_lo.signum() == f_hi.signum() || !f_lo.is_finite() || !f_hi.is_finite() {
        return Err(Error::RootNotBracketed {
            lo: GA0_BRACKET.0,
            hi: GA0_BRACKET.1,
            res_lo: f_lo.as_f64(),
            res_hi: f_hi.as_f64(),
        });
    }
    let lo_positive = f_lo > T::zero();
    let alpha = bisect(&mut lo, &mut hi, |a| (f(a) > T::zero()) == lo_positive);
    Ok(Ga0Solution {
        alpha,
        gamma: ga0_gamma(alpha, m1, looks),
        residual: f(alpha),
    })
}

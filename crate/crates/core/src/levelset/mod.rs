//! Level-set representation, the non-local region energy with its gradient
//! flow, and the classical edge-weighted active contour used as a baseline.

mod classic;
mod descent;
mod energy;
mod init;
mod nlac;

pub use classic::{classic_ac_run, edge_indicator, ClassicParams, ClassicResult};
pub use descent::XiPolicy;
pub use energy::{data_gradient, energy, evaluate, reg_energy, reg_gradient, EnergyTerms, GRAD_ETA};
pub use init::random_init;
pub use nlac::{nlac_run, nlac_run_monitored, nlac_run_with, NlacResult};

use serde::{Deserialize, Serialize};

use crate::divergence::{DivergenceKind, JsMode};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Field};
use crate::scalar::Scalar;

/// Smoothed Heaviside `1/2 + arctan(u/ε)/π`.
#[inline]
pub fn heaviside<T: Scalar>(u: T, epsilon: T) -> T {
    T::lit(0.5) + (u / epsilon).atan() / T::PI()
}

/// Derivative of [`heaviside`]: `ε / (π (ε² + u²))`.
#[inline]
pub fn heaviside_prime<T: Scalar>(u: T, epsilon: T) -> T {
    epsilon / (T::PI() * (epsilon * epsilon + u * u))
}

/// Implicit region `{φ > 0}` with its Heaviside sharpness.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSet<T> {
    pub phi: Field<T>,
    pub epsilon: T,
}

impl<T: Scalar> LevelSet<T> {
    pub fn new(phi: Field<T>, epsilon: T) -> Result<Self> {
        if !(epsilon > T::zero()) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        if phi.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("level set contains non-finite values".into()));
        }
        Ok(Self { phi, epsilon })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.phi.dims()
    }

    /// `{φ > 0}`, equivalently `H(φ) > 1/2`.
    pub fn region(&self) -> BinaryMask {
        self.phi.map(|v| v > T::zero())
    }

    pub fn mask(&self, polarity: Polarity) -> BinaryMask {
        polarity.apply(self.region())
    }
}

/// Which side of the contour is reported as foreground.
///
/// The energies are symmetric under `φ ↦ -φ`, so the sign of the final level
/// set is arbitrary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// `φ > 0` is foreground.
    Positive,
    /// Foreground is the side covering less of the image border.
    #[default]
    BorderBackground,
}

impl Polarity {
    pub fn apply(self, region: BinaryMask) -> BinaryMask {
        match self {
            Polarity::Positive => region,
            Polarity::BorderBackground => {
                let (w, h) = region.dims();
                let mut inside = 0usize;
                let mut total = 0usize;
                for y in 0..h {
                    for x in 0..w {
                        if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                            total += 1;
                            inside += region.get(x, y) as usize;
                        }
                    }
                }
                let tie_break_area = 2 * inside == total && 2 * region.count() > region.len();
                if 2 * inside > total || tie_break_area {
                    region.invert()
                } else {
                    region
                }
            }
        }
    }
}

/// Settings of one single-scale non-local run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlacParams<T> {
    /// Weight of the contour-length term.
    pub lambda: T,
    pub xi: XiPolicy<T>,
    /// Stop once `|E(i) - E(i+1)| < omega`.
    pub omega: T,
    pub max_iters: usize,
    pub epsilon: T,
    pub kind: DivergenceKind,
    pub js_mode: JsMode,
    /// `φ` is clamped to `[-clamp, clamp]` after every update.
    pub clamp: T,
    pub polarity: Polarity,
}

impl<T: Scalar> Default for NlacParams<T> {
    fn default() -> Self {
        Self {
            lambda: T::lit(20.0),
            xi: XiPolicy::default(),
            omega: T::lit(1e-3),
            max_iters: 200,
            epsilon: T::one(),
            kind: DivergenceKind::Kl,
            js_mode: JsMode::Standard,
            clamp: T::lit(10.0),
            polarity: Polarity::default(),
        }
    }
}

impl<T: Scalar> NlacParams<T> {
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
        if !(self.epsilon > T::zero()) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        if !(self.clamp > T::zero()) {
            return Err(Error::param("clamp", "must be positive"));
        }
        self.xi.validate()
    }
}

/// One row of a convergence trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub energy: f64,
    pub data: f64,
    pub reg: f64,
    pub rfe: Option<f64>,
    /// Milliseconds since the start of the run.
    pub ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }
}

//! Dissimilarities between PMFs on a common support.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::Pmf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceKind {
    /// Symmetrized Kullback-Leibler.
    Kl,
    Hellinger,
    /// Total variation.
    Tv,
    /// Jensen-Shannon.
    Js,
    /// Earth mover's distance in one dimension.
    Em,
}

/// Which Jensen-Shannon expression to evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JsMode {
    /// `1/2 Σ P ln(2P/(P+Q)) + Q ln(2Q/(P+Q))`, in `[0, ln 2]`.
    #[default]
    Standard,
    /// `Σ P ln(P/(P+Q)) + Q ln(Q/(P+Q))`, equal to `2·standard - 2 ln 2`.
    Verbatim,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 5] = [
        DivergenceKind::Kl,
        DivergenceKind::Hellinger,
        DivergenceKind::Tv,
        DivergenceKind::Js,
        DivergenceKind::Em,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DivergenceKind::Kl => "kl",
            DivergenceKind::Hellinger => "hellinger",
            DivergenceKind::Tv => "tv",
            DivergenceKind::Js => "js",
            DivergenceKind::Em => "em",
        }
    }
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DivergenceKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::param("distance", format!("unknown distance `{s}`")))
    }
}

impl JsMode {
    pub fn name(self) -> &'static str {
        match self {
            JsMode::Standard => "standard",
            JsMode::Verbatim => "verbatim",
        }
    }
}

impl fmt::Display for JsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(JsMode::Standard),
            "verbatim" => Ok(JsMode::Verbatim),
            _ => Err(Error::param("js-mode", format!("unknown mode `{s}`"))),
        }
    }
}

/// Divergence between two PMFs sharing bin edges with strictly positive
/// masses.
pub fn divergence<T: Scalar>(kind: DivergenceKind, p: &Pmf<T>, q: &Pmf<T>, js_mode: JsMode) -> Result<T> {
    if !p.same_support(q) {
        return Err(Error::MismatchedEdges);
    }
    if p.mass().iter().chain(q.mass()).any(|m| !(*m > T::zero())) {
        return Err(Error::InvalidData("divergence needs strictly positive masses".into()));
    }
    Ok(divergence_raw(kind, p.mass(), q.mass(), js_mode))
}

/// Formula evaluation on raw mass vectors, without support checks.
pub fn divergence_raw<T: Scalar>(kind: DivergenceKind, p: &[T], q: &[T], js_mode: JsMode) -> T {
    let half = T::lit(0.5);
    let pairs = p.iter().copied().zip(q.iter().copied());
    match kind {
        DivergenceKind::Kl => pairs.map(|(a, b)| a * (a / b).ln() + b * (b / a).ln()).sum(),
        DivergenceKind::Hellinger => {
            let s: T = pairs.map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
            s.sqrt() / T::SQRT_2()
        }
        DivergenceKind::Tv => half * pairs.map(|(a, b)| (a - b).abs()).sum::<T>(),
        DivergenceKind::Js => match js_mode {
            JsMode::Standard => {
                let two = T::lit(2.0);
                half * pairs
                    .map(|(a, b)| a * (two * a / (a + b)).ln() + b * (two * b / (a + b)).ln())
                    .sum::<T>()
            }
            JsMode::Verbatim => pairs
                .map(|(a, b)| a * (a / (a + b)).ln() + b * (b / (a + b)).ln())
                .sum(),
        },
        DivergenceKind::Em => {
            let (mut cp, mut cq) = (T::zero(), T::zero());
            pairs
                .map(|(a, b)| {
                    cp = cp + a;
                    cq = cq + b;
                    (cp - cq).abs()
                })
                .sum()
        }
    }
}

/// Per-PMF precomputation that makes repeated pairwise evaluation cheap
/// (logs, square roots and cumulative sums are taken once per PMF).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureMap {
    pub kind: DivergenceKind,
    pub js_mode: JsMode,
}

impl FeatureMap {
    pub fn new(kind: DivergenceKind, js_mode: JsMode) -> Self {
        Self { kind, js_mode }
    }

    /// Length of the feature vector for `bins` bins.
    pub fn len(&self, bins: usize) -> usize {
        match self.kind {
            DivergenceKind::Kl | DivergenceKind::Js => 2 * bins,
            _ => bins,
        }
    }

    /// Appends the feature vector of `mass` to `out`.
    pub fn push_features<T: Scalar>(&self, mass: &[T], out: &mut Vec<T>) {
        match self.kind {
            DivergenceKind::Kl => {
                out.extend_from_slice(mass);
                out.extend(mass.iter().map(|m| m.ln()));
            }
            DivergenceKind::Js => {
                out.extend_from_slice(mass);
                out.extend(mass.iter().map(|&m| m * m.ln()));
            }
            DivergenceKind::Hellinger => out.extend(mass.iter().map(|m| m.sqrt())),
            DivergenceKind::Tv => out.extend_from_slice(mass),
            DivergenceKind::Em => {
                let mut c = T::zero();
                out.extend(mass.iter().map(|&m| {
                    c = c + m;
                    c
                }));
            }
        }
    }

    /// Divergence between two feature vectors built by [`Self::push_features`].
    #[inline]
    pub fn eval<T: Scalar>(&self, a: &[T], b: &[T]) -> T {
        let half = T::lit(0.5);
        match self.kind {
            DivergenceKind::Kl => {
                let n = a.len() / 2;
                let (pa, la) = a.split_at(n);
                let (pb, lb) = b.split_at(n);
                let mut acc = T::zero();
                for j in 0..n {
                    acc = acc + (pa[j] - pb[j]) * (la[j] - lb[j]);
                }
                acc
            }
            DivergenceKind::Js => {
                let n = a.len() / 2;
                let (pa, ea) = a.split_at(n);
                let (pb, eb) = b.split_at(n);
                let mut acc = T::zero();
                for j in 0..n {
                    let s = pa[j] + pb[j];
                    acc = acc + ea[j] + eb[j] - s * s.ln();
                }
                match self.js_mode {
                    JsMode::Verbatim => acc,
                    // Σ (P+Q) ln 2 = 2 ln 2
                    JsMode::Standard => half * acc + T::LN_2(),
                }
            }
            DivergenceKind::Hellinger => {
                let mut acc = T::zero();
                for (x, y) in a.iter().zip(b) {
                    acc = acc + (*x - *y) * (*x - *y);
                }
                acc.sqrt() / T::SQRT_2()
            }
            DivergenceKind::Tv => half * a.iter().zip(b).map(|(x, y)| (*x - *y).abs()).sum::<T>(),
            DivergenceKind::Em => a.iter().zip(b).map(|(x, y)| (*x - *y).abs()).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::stats::{discretize, uniform_edges, DistParams, Pmf};

    fn pmf(mass: Vec<f64>) -> Pmf<f64> {
        let edges = Arc::new((0..=mass.len()).map(|i| i as f64).collect());
        Pmf::new(edges, mass).unwrap()
    }

    #[test]
    fn identity_case() {
        let p = pmf(vec![0.2, 0.3, 0.5]);
        for kind in DivergenceKind::ALL {
            let d = divergence(kind, &p, &p, JsMode::Standard).unwrap();
            assert!(d.abs() < 1e-15, "{kind}");
        }
        let v = divergence(DivergenceKind::Js, &p, &p, JsMode::Verbatim).unwrap();
        assert!((v + 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn disjoint_support_extremes() {
        let p = [1.0f64, 0.0];
        let q = [0.0f64, 1.0];
        assert_eq!(divergence_raw(DivergenceKind::Tv, &p, &q, JsMode::Standard), 1.0);
        assert!((divergence_raw(DivergenceKind::Hellinger, &p, &q, JsMode::Standard) - 1.0).abs() < 1e-15);
        let p = [1.0f64, 0.0, 0.0];
        let q = [0.0f64, 0.0, 1.0];
        assert_eq!(divergence_raw(DivergenceKind::Em, &p, &q, JsMode::Standard), 2.0);
    }

    #[test]
    fn kl_between_discretized_gammas() {
        let edges = uniform_edges(0.0f64, 16.0, 64).unwrap();
        let p = discretize(&DistParams::Gamma { alpha: 4.0, beta: 1.0 }, &edges).unwrap();
        let q = discretize(&DistParams::Gamma { alpha: 5.0, beta: 1.0 }, &edges).unwrap();
        let got = divergence(DivergenceKind::Kl, &p, &q, JsMode::Standard).unwrap();
        let mut oracle = 0.0;
        for j in 0..64 {
            let (a, b) = (p.mass()[j], q.mass()[j]);
            oracle += a * a.ln() - a * b.ln() + b * b.ln() - b * a.ln();
        }
        assert!((got - oracle).abs() < 1e-9);
        assert!(got > 0.0);
    }

    #[test]
    fn mismatched_edges_and_zero_mass_rejected() {
        let p = pmf(vec![0.5, 0.5]);
        let q = Pmf::new(Arc::new(vec![0.0, 1.0, 3.0]), vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            divergence(DivergenceKind::Kl, &p, &q, JsMode::Standard),
            Err(Error::MismatchedEdges)
        ));
        let z = pmf(vec![1.0, 0.0]);
        assert!(divergence(DivergenceKind::Kl, &p, &z, JsMode::Standard).is_err());
    }

    #[test]
    fn feature_path_agrees_with_formulas() {
        let edges = uniform_edges(0.0f64, 16.0, 64).unwrap();
        let p = discretize(&DistParams::Gamma { alpha: 4.0, beta: 1.0 }, &edges).unwrap();
        let q = discretize(&DistParams::Weibull { beta: 1.5, eta: 3.0 }, &edges).unwrap();
        for kind in DivergenceKind::ALL {
            for mode in [JsMode::Standard, JsMode::Verbatim] {
                let fm = FeatureMap::new(kind, mode);
                let (mut a, mut b) = (Vec::new(), Vec::new());
                fm.push_features(p.mass(), &mut a);
                fm.push_features(q.mass(), &mut b);
                assert_eq!(a.len(), fm.len(64));
                let direct = divergence(kind, &p, &q, mode).unwrap();
                assert!((fm.eval(&a, &b) - direct).abs() < 1e-12, "{kind} {mode}");
            }
        }
    }

    #[test]
    fn names_parse() {
        for k in DivergenceKind::ALL {
            assert_eq!(k.name().parse::<DivergenceKind>().unwrap(), k);
        }
        assert_eq!("verbatim".parse::<JsMode>().unwrap(), JsMode::Verbatim);
        assert!("chi2".parse::<DivergenceKind>().is_err());
    }
}

use std::sync::Arc;

use super::{DistParams, Fit};
use crate::error::{Error, Result};
use crate::grid::Image;
use crate::scalar::Scalar;

/// Floor applied to every bin mass before renormalization.
pub const EPS_FLOOR: f64 = 1e-12;

const SUBSAMPLES: usize = 8;

/// Discrete distribution over shared bin edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf<T> {
    edges: Arc<Vec<T>>,
    mass: Vec<T>,
}

impl<T: Scalar> Pmf<T> {
    /// Validates edges and masses (non-negative, summing to 1 within 1e-9).
    pub fn new(edges: Arc<Vec<T>>, mass: Vec<T>) -> Result<Self> {
        check_edges(&edges)?;
        if mass.len() + 1 != edges.len() {
            return Err(Error::InvalidData(format!(
                "{} masses for {} edges",
                mass.len(),
                edges.len()
            )));
        }
        if mass.iter().any(|m| !(*m >= T::zero())) {
            return Err(Error::InvalidData("negative bin mass".into()));
        }
        let total: T = mass.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) {
            return Err(Error::InvalidData(format!("masses sum to {total}")));
        }
        Ok(Self { edges, mass })
    }

    pub(crate) fn from_parts_unchecked(edges: Arc<Vec<T>>, mass: Vec<T>) -> Self {
        Self { edges, mass }
    }

    pub fn edges(&self) -> &Arc<Vec<T>> {
        &self.edges
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn same_support(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.edges, &other.edges) || self.edges == other.edges
    }
}

pub(crate) fn check_edges<T: Scalar>(edges: &[T]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::param("edges", "need at least two bin edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("edges", "must be finite and strictly increasing"));
    }
    Ok(())
}

pub fn uniform_edges<T: Scalar>(lo: T, hi: T, bins: usize) -> Result<Arc<Vec<T>>> {
    if bins == 0 {
        return Err(Error::param("bins", "must be at least 1"));
    }
    let width = (hi - lo) / T::from_usize_lossy(bins);
    let edges: Vec<T> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * T::from_usize_lossy(i) })
        .collect();
    check_edges(&edges)?;
    Ok(Arc::new(edges))
}

/// `bins` uniform bins on `[0, mean + 6 std]` of the whole image.
pub fn default_edges<T: Scalar>(img: &Image<T>, bins: usize) -> Result<Arc<Vec<T>>> {
    let (mean, std) = img.mean_std();
    let mut hi = mean + T::lit(6.0) * std;
    if std <= T::zero() {
        hi = mean * T::lit(2.0);
    }
    if !(hi > T::zero()) {
        hi = T::one();
    }
    uniform_edges(T::zero(), hi, bins)
}

fn floor_and_normalize<T: Scalar>(mass: &mut [T]) {
    let floor = T::lit(EPS_FLOOR);
    for m in mass.iter_mut() {
        if !(*m >= floor) || !m.is_finite() {
            *m = floor;
        }
    }
    let total: T = mass.iter().copied().sum();
    for m in mass.iter_mut() {
        *m = *m / total;
    }
}

/// Bin masses by an 8-point midpoint rule per bin, floored at
/// [`EPS_FLOOR`] and renormalized.
pub fn discretize<T: Scalar>(params: &DistParams<T>, edges: &Arc<Vec<T>>) -> Result<Pmf<T>> {
    params.validate()?;
    check_edges(edges)?;
    Ok(discretize_unchecked(params, edges))
}

pub(crate) fn discretize_unchecked<T: Scalar>(params: &DistParams<T>, edges: &Arc<Vec<T>>) -> Pmf<T> {
    let sub = T::from_usize_lossy(SUBSAMPLES);
    let half = T::lit(0.5);
    let mut mass: Vec<T> = edges
        .windows(2)
        .map(|w| {
            let h = (w[1] - w[0]) / sub;
            (0..SUBSAMPLES)
                .map(|k| params.pdf_unchecked(w[0] + h * (T::from_usize_lossy(k) + half)))
                .sum::<T>()
                * h
        })
        .collect();
    floor_and_normalize(&mut mass);
    Pmf::from_parts_unchecked(edges.clone(), mass)
}

/// Discretizes a fit; degenerate fits become a point mass in the bin that
/// holds their mean (values past the last edge land in the last bin).
pub fn discretize_fit<T: Scalar>(fit: &Fit<T>, edges: &Arc<Vec<T>>) -> Pmf<T> {
    if !fit.degenerate {
        return discretize_unchecked(&fit.params, edges);
    }
    let bins = edges.len() - 1;
    let idx = edges[1..].iter().position(|&e| fit.mean < e).unwrap_or(bins - 1);
    let mut mass = vec![T::zero(); bins];
    mass[idx] = T::one();
    floor_and_normalize(&mut mass);
    Pmf::from_parts_unchecked(edges.clone(), mass)
}

//! Multi-scale non-local active contours for segmenting speckled images.
//!
//! The pipeline fits a parametric model to every image patch, compares the
//! resulting histograms with a divergence, and evolves a level set that
//! groups mutually similar patches. Solving first on a Gaussian pyramid and
//! propagating the contour down the scales gives the coarse-to-fine variant.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar for the common cases.

pub mod divergence;
pub mod error;
pub mod eval;
pub mod grid;
pub mod levelset;
pub mod multiscale;
pub mod scalar;
pub mod similarity;
pub mod speckle;
pub mod stats;

pub mod cli;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ImageF64 = grid::Image<f64>;
pub type ImageF32 = grid::Image<f32>;
pub type FieldF64 = grid::Field<f64>;
pub type FieldF32 = grid::Field<f32>;
pub type PmfF64 = stats::Pmf<f64>;
pub type PmfF32 = stats::Pmf<f32>;
pub type DistParamsF64 = stats::DistParams<f64>;
pub type LevelSetF64 = levelset::LevelSet<f64>;
pub type LevelSetF32 = levelset::LevelSet<f32>;
pub type NlacParamsF64 = levelset::NlacParams<f64>;
pub type MsConfigF64 = multiscale::MsConfig<f64>;

//! Scale- and shift-invariant disparity losses, robust alignment, Pareto-optimal
//! multi-dataset mixing, zero-shot cross-dataset evaluation metrics, and a
//! stereo-derived disparity post-processing pipeline.
//!
//! The crate is organised around a dense 2-D [`grid::ScalarGrid`] paired with a
//! [`grid::ValidityMask`]; everything downstream (alignment, losses, metrics)
//! reduces over valid pixels only. Core math is generic over the scalar type
//! via [`Scalar`] (`f32` or `f64`); accumulations that are sensitive to
//! cancellation are carried out in `f64` internally.
//!
//! Module map:
//! - [`grid`]: grid container, masked arithmetic, finite differences, decimation
//! - [`io`]: PFM grid reader/writer, PGM mask reader/writer
//! - [`align`]: least-squares and robust (median/MAD) scale-shift estimators
//! - [`loss`]: the invariant loss family with analytic gradients
//! - [`minnorm`]: min-norm-point solver over the convex hull of task gradients
//! - [`sampler`]: deterministic equal-parts dataset mixing and epoch accounting
//! - [`trainer`]: desk-scale optimisation loops on synthetic data
//! - [`eval`]: per-image alignment, depth caps, metrics, aggregation
//! - [`stereo`]: left-right consistency, frame gating, sky masking, normalisation

pub mod align;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod loss;
pub mod minnorm;
pub mod sampler;
pub mod stereo;
pub mod trainer;

pub use error::{Error, Result};

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar type the numeric core is generic over.
///
/// Implemented by `f32` and `f64`. `FromPrimitive` is required so pixel
/// counts and literals can be folded into generic arithmetic.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion to `f64` for extended-precision accumulation.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    /// Conversion from `f64`, saturating at the type's range.
    fn of_f64(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Concrete single-precision grid.
pub type GridF32 = grid::ScalarGrid<f32>;
/// Concrete double-precision grid.
pub type GridF64 = grid::ScalarGrid<f64>;

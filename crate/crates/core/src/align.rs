//! Scale/shift estimators mapping predictions and ground truth into a common frame.
//!
//! Two alignment routes are provided:
//! - [`lsq_align`]: least-squares fit of `s * pred + t` to the ground truth,
//!   solved in closed form from the 2x2 normal equations;
//! - [`robust_stats`] / [`robust_normalize`]: median translation and mean
//!   absolute deviation scale, normalising a grid to zero median and unit MAD.
//!
//! Normal-equation sums are accumulated in `f64` regardless of the grid's
//! scalar type.

use crate::error::{Error, Result};
use crate::grid::{masked_reduce, Reduction, ScalarGrid, ValidityMask};
use crate::Scalar;

/// Determinant guard for the normal matrix, scaled by M^2.
const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// The `(s, t)` pair of a least-squares scale/shift fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineAlignment<T> {
    pub scale: T,
    pub shift: T,
}

/// Median translation and mean-absolute-deviation scale of a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustStats<T> {
    /// Masked median.
    pub shift: T,
    /// Masked mean absolute deviation about the median; nonnegative.
    pub scale: T,
}

/// Least-squares alignment of `pred` to `gt`: minimises
/// `sum over valid pixels of (s * pred_i + t - gt_i)^2`.
///
/// Requires at least two valid pixels and a non-constant prediction; the
/// normal matrix is considered singular when its determinant falls below
/// `1e-12 * M^2`.
pub fn lsq_align<T: Scalar>(
    pred: &ScalarGrid<T>,
    gt: &ScalarGrid<T>,
    mask: &ValidityMask,
) -> Result<AffineAlignment<T>> {
    pred.shape_matches(mask)?;
    gt.shape_matches(mask)?;
    let m = mask.count_valid();
    if m < 2 {
        return Err(Error::InsufficientData {
            op: "lsq_align",
            needed: 2,
            got: m,
        });
    }
    let mut sd = 0.0f64;
    let mut sdd = 0.0f64;
    let mut sy = 0.0f64;
    let mut sdy = 0.0f64;
    for ((&d, &y), &ok) in pred.values().iter().zip(gt.values()).zip(mask.flags()) {
        if ok {
            let (d, y) = (d.as_f64(), y.as_f64());
            sd += d;
            sdd += d * d;
            sy += y;
            sdy += d * y;
        }
    }
    let n = m as f64;
    let det = n * sdd - sd * sd;
    if det < DEGENERACY_THRESHOLD * n * n {
        return Err(Error::DegenerateAlignment { det });
    }
    let s = (n * sdy - sd * sy) / det;
    let t = (sdd * sy - sd * sdy) / det;
    Ok(AffineAlignment {
        scale: T::of_f64(s),
        shift: T::of_f64(t),
    })
}

/// Pointwise `s * value + t`; unit preserved.
pub fn apply_alignment<T: Scalar>(grid: &ScalarGrid<T>, a: &AffineAlignment<T>) -> ScalarGrid<T> {
    let (s, t) = (a.scale, a.shift);
    grid.map(|v| s * v + t)
}

/// Robust location and scale: `shift = median`, `scale = mean |value - median|`
/// over valid pixels. Requires at least one valid pixel.
pub fn robust_stats<T: Scalar>(grid: &ScalarGrid<T>, mask: &ValidityMask) -> Result<RobustStats<T>> {
    let shift = masked_reduce(grid, mask, Reduction::Median).map_err(|e| match e {
        Error::EmptyMask { .. } => Error::EmptyMask { op: "robust_stats" },
        other => other,
    })?;
    let scale = masked_reduce(grid, mask, Reduction::MeanAbsDevAbout(shift))?;
    Ok(RobustStats { shift, scale })
}

/// Normalises a grid to zero median and unit mean absolute deviation:
/// `(value - shift) / scale` pointwise. Fails with a degenerate-scale error
/// on constant grids.
pub fn robust_normalize<T: Scalar>(grid: &ScalarGrid<T>, mask: &ValidityMask) -> Result<ScalarGrid<T>> {
    let stats = robust_stats(grid, mask)?;
    if stats.scale <= T::zero() {
        return Err(Error::DegenerateScale);
    }
    let (t, s) = (stats.shift, stats.scale);
    Ok(grid.map(|v| (v - t) / s))
}

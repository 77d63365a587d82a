//! The scale- and shift-invariant loss family with analytic gradients.
//!
//! Every loss returns a [`LossResult`]: a nonnegative value together with the
//! gradient grid with respect to the prediction. Gradients are exact total
//! derivatives almost everywhere — they chain through the least-squares
//! `(s, t)` or through the robust median/MAD normalisers — and are zero at
//! every invalid pixel.
//!
//! Per-image normalisation follows the defining equations literally: the
//! pointwise losses divide by `2M` (the trimmed variant still divides by the
//! full `M`, not the kept count) and the gradient-matching term divides by `M`,
//! where `M` is the full-resolution valid-pixel count.

mod chain;
mod grad_match;
mod nmg;
mod ordinal;
mod silog;
mod ssi;

pub use grad_match::{gradient_matching, GmAligner};
pub use nmg::nmg;
pub use ordinal::{ordinal, ordinal_from_pairs, sample_ordinal_pairs, OrdinalPair};
pub use silog::silog;
pub use ssi::{ssimae, ssimse, ssitrim};

use crate::error::Result;
use crate::grid::{ScalarGrid, ValidityMask};
use crate::Scalar;

/// Loss value plus gradient with respect to the prediction grid.
#[derive(Debug, Clone)]
pub struct LossResult<T> {
    pub value: T,
    /// Same shape as the prediction; exactly 0 at invalid pixels.
    pub grad: ScalarGrid<T>,
}

/// Residual trimming configuration for the trimmed MAE loss.
#[derive(Debug, Clone, Copy)]
pub struct TrimConfig {
    /// Fraction of the largest absolute residuals dropped per image, in [0, 1).
    pub trim_fraction: f64,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self { trim_fraction: 0.2 }
    }
}

impl TrimConfig {
    /// Number of residuals kept for `m` valid pixels:
    /// `floor((1 - trim_fraction) * m)`, with products within fp noise of an
    /// integer snapped to it so that e.g. `0.8 * 10` keeps exactly 8.
    pub fn kept_count(&self, m: usize) -> usize {
        let x = (1.0 - self.trim_fraction) * m as f64;
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            r as usize
        } else {
            x.floor() as usize
        }
    }
}

/// Number of scale levels of the multi-scale gradient terms.
#[derive(Debug, Clone, Copy)]
pub struct GradMatchConfig {
    /// Level `k` decimates by stride `2^(k-1)`, `k = 1..=levels`.
    pub levels: usize,
}

impl Default for GradMatchConfig {
    fn default() -> Self {
        Self { levels: 4 }
    }
}

/// Pointwise loss selector for [`total_loss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    SsiMse,
    SsiMae,
    SsiTrim,
}

/// Configuration of the per-sample training loss: base + alpha * gradient matching.
#[derive(Debug, Clone, Copy)]
pub struct TotalLossConfig {
    pub alpha: f64,
    pub base: BaseLoss,
}

impl Default for TotalLossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            base: BaseLoss::SsiTrim,
        }
    }
}

/// Per-sample training loss: base loss plus `alpha` times the multi-scale
/// gradient-matching term. The regularizer consumes the same aligned grids as
/// the base loss: least-squares alignment for the MSE base, robust
/// normalisation for the MAE/trimmed bases. With `alpha == 0` the result is
/// bit-identical to the base loss alone.
pub fn total_loss<T: Scalar>(
    pred: &ScalarGrid<T>,
    gt: &ScalarGrid<T>,
    mask: &ValidityMask,
    cfg: &TotalLossConfig,
    trim: &TrimConfig,
    gm: &GradMatchConfig,
) -> Result<LossResult<T>> {
    let (base, aligner) = match cfg.base {
        BaseLoss::SsiMse => (ssimse(pred, gt, mask)?, GmAligner::Lsq),
        BaseLoss::SsiMae => (ssimae(pred, gt, mask)?, GmAligner::Robust),
        BaseLoss::SsiTrim => (ssitrim(pred, gt, mask, trim)?, GmAligner::Robust),
    };
    if cfg.alpha == 0.0 {
        return Ok(base);
    }
    let reg = gradient_matching(pred, gt, mask, gm, aligner)?;
    let alpha = T::of_f64(cfg.alpha);
    let mut grad = base.grad;
    for (g, r) in grad.values_mut().iter_mut().zip(reg.grad.values()) {
        *g = *g + alpha * *r;
    }
    Ok(LossResult {
        value: base.value + alpha * reg.value,
        grad,
    })
}

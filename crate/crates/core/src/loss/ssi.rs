//! Pointwise scale/shift-invariant losses: MSE, MAE, and trimmed MAE.

use super::chain::{sign, LsqChain, RobustChain};
use super::{LossResult, TrimConfig};
use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, ValidityMask};
use crate::Scalar;

fn grad_grid<T: Scalar>(template: &ScalarGrid<T>, grad: Vec<f64>) -> ScalarGrid<T> {
    ScalarGrid::new(
        template.rows(),
        template.cols(),
        grad.into_iter().map(T::of_f64).collect(),
        template.unit(),
    )
    .expect("gradient shape mirrors prediction")
}

/// Scale/shift-invariant MSE: least-squares aligned squared residuals,
/// `value = (1/2M) sum (s*d_i + t - gt_i)^2`.
///
/// Because `(s, t)` minimises the summed squared residual, the total
/// derivative reduces to the partial one (envelope theorem):
/// `grad_i = (s/M) (s*d_i + t - gt_i)`.
pub fn ssimse<T: Scalar>(
    pred: &ScalarGrid<T>,
    gt: &ScalarGrid<T>,
    mask: &ValidityMask,
) -> Result<LossResult<T>> {
    pred.shape_matches(mask)?;
    gt.shape_matches(mask)?;
    let chain = LsqChain::build(pred, gt, mask)?;
    let m = chain.m as f64;
    let value = chain.residual.iter().map(|r| r * r).sum::<f64>() / (2.0 * m);
    let grad: Vec<f64> = chain.residual.iter().map(|r| chain.s / m * r).collect();
    Ok(LossResult {
        value: T::of_f64(value),
        grad: grad_grid(pred, grad),
    })
}

/// Shared implementation of the robust pointwise losses. `kept` receives the
/// number of residuals retained; `None` keeps all.
fn robust_pointwise<T: Scalar>(
    pred: &ScalarGrid<T>,
    gt: &ScalarGrid<T>,
    mask: &ValidityMask,
    trim: Option<&TrimConfig>,
) -> Result<LossResult<T>> {
    pred.shape_matches(mask)?;
    gt.shape_matches(mask)?;
    let chain = RobustChain::build(pred, mask)?;
    let gt_chain = RobustChain::build(gt, mask)?; // only the normalised values are used
    let m = chain.m;
    let n_px = pred.len();

    // residuals of the normalised grids, valid pixels only
    let mut residual = vec![0.0f64; n_px];
    let mut valid_idx = Vec::with_capacity(m);
    for i in 0..n_px {
        if mask.flags()[i] {
            residual[i] = chain.normalized[i] - gt_chain.normalized[i];
            valid_idx.push(i);
        }
    }

    let kept: Vec<usize> = match trim {
        None => valid_idx,
        Some(cfg) => {
            if !(0.0..1.0).contains(&cfg.trim_fraction) {
                return Err(Error::Config(format!(
                    "trim_fraction must be in [0, 1), got {}",
                    cfg.trim_fraction
                )));
            }
            let keep = cfg.kept_count(m);
            if keep == 0 {
                return Err(Error::InsufficientData {
                    op: "ssitrim",
                    needed: 1,
                    got: 0,
                });
            }
            // stable ascending sort by (|residual|, pixel index); lower index
            // wins ties at the cutoff
            let mut order = valid_idx;
            order.sort_by(|&a, &b| {
                residual[a]
                    .abs()
                    .partial_cmp(&residual[b].abs())
                    .expect("finite residuals")
            });
            order.truncate(keep);
            order
        }
    };

    let mf = m as f64;
    let mut value = 0.0f64;
    // upstream = d value / d normalized_pred; sign(residual) / 2M on kept pixels
    let mut upstream = vec![0.0f64; n_px];
    for &i in &kept {
        value += residual[i].abs();
        upstream[i] = sign(residual[i]) / (2.0 * mf);
    }
    value /= 2.0 * mf;

    let grad = chain.backprop(&upstream);
    Ok(LossResult {
        value: T::of_f64(value),
        grad: grad_grid(pred, grad),
    })
}

/// Scale/shift-invariant MAE: both grids are normalised to zero median and
/// unit mean absolute deviation, then `value = (1/2M) sum |pred_hat - gt_hat|`.
/// The gradient chains through the prediction's own median and MAD.
pub fn ssimae<T: Scalar>(
    pred: &ScalarGrid<T>,
    gt: &ScalarGrid<T>,
    mask: &ValidityMask,
) -> Result<LossResult<T>> {
    robust_pointwise(pred, gt, mask, None)
}

/// Trimmed scale/shift-invariant MAE: absolute residuals are sorted ascending
/// and only the smallest `floor((1 - trim_fraction) * M)` contribute; the
/// normaliser stays `1/(2M)` with the full `M`. Trimmed pixels carry zero
/// gradient; the trim selection is frozen at the evaluation point.
pub fn ssitrim<T: Scalar>(
    pred: &ScalarGrid<T>,
    gt: &ScalarGrid<T>,
    mask: &ValidityMask,
    cfg: &TrimConfig,
) -> Result<LossResult<T>> {
    robust_pointwise(pred, gt, mask, Some(cfg))
}

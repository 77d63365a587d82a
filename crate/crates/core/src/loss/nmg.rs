//! Normalized multiscale gradient loss.

use super::chain::sign;
use super::{GradMatchConfig, LossResult};
use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, ValidityMask};
use crate::Scalar;

/// One finite-difference component at some level, with the full-resolution
/// source indices needed for backpropagation.
struct Component {
    /// `from` and `to` index the full-resolution grid; the component value is
    /// `grid[to] - grid[from]` after decimation.
    from: usize,
    to: usize,
    pred_diff: f64,
    gt_diff: f64,
}

/// Normalized multiscale gradient loss:
/// `value = sum_k sum_i |s * gx_k(pred) - gx_k(gt)| + |s * gy_k(pred) - gy_k(gt)|`
/// where level `k` decimates by stride `2^(k-1)` and `s` is one global scale
/// per image chosen by least squares over all valid gradient components at all
/// levels, `s = (sum gp * gt) / (sum gp^2)`.
///
/// The gradient with respect to the prediction is the total derivative,
/// including the dependence of `s` on the prediction's gradient components.
/// Fails with a degenerate-scale error when every prediction gradient
/// component is zero.
pub fn nmg<T: Scalar>(
    pred: &ScalarGrid<T>,
    gt: &ScalarGrid<T>,
    mask: &ValidityMask,
    cfg: &GradMatchConfig,
) -> Result<LossResult<T>> {
    pred.shape_matches(mask)?;
    gt.shape_matches(mask)?;
    let (rows, cols) = (pred.rows(), pred.cols());
    let pv = pred.values();
    let gv = gt.values();
    let flags = mask.flags();

    let mut components: Vec<Component> = Vec::new();
    for k in 0..cfg.levels {
        let stride = 1usize << k;
        if stride > rows && stride > cols {
            break;
        }
        let lr = rows.div_ceil(stride);
        let lc = cols.div_ceil(stride);
        let src = |r: usize, c: usize| (r * stride) * cols + (c * stride);
        for r in 0..lr {
            for c in 0..lc {
                let a = src(r, c);
                if !flags[a] {
                    continue;
                }
                for (nr, nc) in [(r, c + 1), (r + 1, c)] {
                    if nr >= lr || nc >= lc {
                        continue;
                    }
                    let b = src(nr, nc);
                    if flags[b] {
                        components.push(Component {
                            from: a,
                            to: b,
                            pred_diff: pv[b].as_f64() - pv[a].as_f64(),
                            gt_diff: gv[b].as_f64() - gv[a].as_f64(),
                        });
                    }
                }
            }
        }
    }

    let denom: f64 = components.iter().map(|c| c.pred_diff * c.pred_diff).sum();
    if denom <= 0.0 {
        return Err(Error::DegenerateScale);
    }
    let numer: f64 = components.iter().map(|c| c.pred_diff * c.gt_diff).sum();
    let s = numer / denom;

    let mut value = 0.0f64;
    let mut dl_ds = 0.0f64;
    for c in &components {
        let r = s * c.pred_diff - c.gt_diff;
        value += r.abs();
        dl_ds += sign(r) * c.pred_diff;
    }

    let mut grad = vec![0.0f64; pred.len()];
    for c in &components {
        let r = s * c.pred_diff - c.gt_diff;
        // d value / d pred_diff, with s chained: ds/d gp = (gt - 2 s gp) / denom
        let dcomp = sign(r) * s + dl_ds * (c.gt_diff - 2.0 * s * c.pred_diff) / denom;
        grad[c.to] += dcomp;
        grad[c.from] -= dcomp;
    }

    Ok(LossResult {
        value: T::of_f64(value),
        grad: ScalarGrid::new(
            rows,
            cols,
            grad.into_iter().map(T::of_f64).collect(),
            pred.unit(),
        )?,
    })
}

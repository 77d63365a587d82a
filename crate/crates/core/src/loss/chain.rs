//! Shared machinery for differentiating through the two alignment routes.
//!
//! Both the per-pixel losses and the gradient-matching term need the total
//! derivative of an aligned residual field with respect to the raw
//! prediction. For the robust route that means chaining through the median
//! (subgradient weight 1 on the middle element for odd counts, 0.5/0.5 on the
//! middle pair for even counts) and through the mean absolute deviation
//! (sign-based chain rule). For the least-squares route it means chaining
//! through the closed-form `(s, t)`.
//!
//! All sums here run in `f64`.

use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, ValidityMask};
use crate::Scalar;

/// Sign with `sign(0) = 0` (unlike `f64::signum`).
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Robust normalisation of one grid with everything needed to backpropagate
/// through it. Arrays are full-grid-size with zeros at invalid pixels.
pub(crate) struct RobustChain {
    /// Masked mean absolute deviation about the median (> 0).
    pub scale: f64,
    /// Normalised values `(d - shift) / scale`; 0 at invalid pixels.
    pub normalized: Vec<f64>,
    /// Median subgradient weights; at most two nonzero entries.
    pub median_weights: Vec<(usize, f64)>,
    /// `sign(d_k - shift)` at valid pixels, 0 elsewhere.
    pub sign_dev: Vec<f64>,
    /// Sum of `sign_dev`.
    pub sign_sum: f64,
    /// Valid pixel count.
    pub m: usize,
}

impl RobustChain {
    pub fn build<T: Scalar>(grid: &ScalarGrid<T>, mask: &ValidityMask) -> Result<Self> {
        grid.shape_matches(mask)?;
        let n_px = grid.len();
        let mut order: Vec<usize> = (0..n_px).filter(|&i| mask.flags()[i]).collect();
        let m = order.len();
        if m == 0 {
            return Err(Error::EmptyMask { op: "robust normalization" });
        }
        let val = |i: usize| grid.values()[i].as_f64();
        order.sort_by(|&a, &b| val(a).partial_cmp(&val(b)).expect("finite values"));

        let (shift, median_weights) = if m % 2 == 1 {
            let mid = order[m / 2];
            (val(mid), vec![(mid, 1.0)])
        } else {
            let lo = order[m / 2 - 1];
            let hi = order[m / 2];
            ((val(lo) + val(hi)) / 2.0, vec![(lo, 0.5), (hi, 0.5)])
        };

        let mut scale = 0.0f64;
        for &i in &order {
            scale += (val(i) - shift).abs();
        }
        scale /= m as f64;
        if scale <= 0.0 {
            return Err(Error::DegenerateScale);
        }

        let mut normalized = vec![0.0f64; n_px];
        let mut sign_dev = vec![0.0f64; n_px];
        let mut sign_sum = 0.0f64;
        for &i in &order {
            let dev = val(i) - shift;
            normalized[i] = dev / scale;
            let s = if dev > 0.0 {
                1.0
            } else if dev < 0.0 {
                -1.0
            } else {
                0.0
            };
            sign_dev[i] = s;
            sign_sum += s;
        }

        Ok(Self {
            scale,
            normalized,
            median_weights,
            sign_dev,
            sign_sum,
            m,
        })
    }

    /// Given `upstream[k] = d value / d normalized_k` (zero at invalid pixels),
    /// returns `d value / d raw_k`. The chain is
    /// `d normalized_i / d raw_k = (delta_ik - w_k) / s - normalized_i / s * ds/d raw_k`
    /// with `ds/d raw_k = (sign_dev_k - w_k * sign_sum) / m`.
    pub fn backprop(&self, upstream: &[f64]) -> Vec<f64> {
        let mut up_sum = 0.0f64;
        let mut up_dot_norm = 0.0f64;
        for (u, nv) in upstream.iter().zip(&self.normalized) {
            up_sum += u;
            up_dot_norm += u * nv;
        }
        let inv_s = 1.0 / self.scale;
        let m = self.m as f64;
        let mut grad: Vec<f64> = upstream
            .iter()
            .zip(&self.sign_dev)
            .map(|(&u, &sg)| inv_s * u - up_dot_norm * inv_s * sg / m)
            .collect();
        for &(idx, w) in &self.median_weights {
            grad[idx] += -inv_s * w * up_sum + up_dot_norm * inv_s * w * self.sign_sum / m;
        }
        grad
    }
}

/// Least-squares alignment of `pred` to `gt` with the moments needed to
/// backpropagate through the closed-form `(s, t)`.
pub(crate) struct LsqChain {
    pub s: f64,
    pub t: f64,
    /// Aligned residual `s * d + t - y`; 0 at invalid pixels.
    pub residual: Vec<f64>,
    pub m: usize,
    sum_d: f64,
    sum_y: f64,
    sum_dy: f64,
    det: f64,
    d: Vec<f64>,
    y: Vec<f64>,
    valid: Vec<bool>,
}

impl LsqChain {
    pub fn build<T: Scalar>(
        pred: &ScalarGrid<T>,
        gt: &ScalarGrid<T>,
        mask: &ValidityMask,
    ) -> Result<Self> {
        let a = crate::align::lsq_align(pred, gt, mask)?;
        let (s, t) = (a.scale.as_f64(), a.shift.as_f64());
        let n_px = pred.len();
        let mut d = vec![0.0f64; n_px];
        let mut y = vec![0.0f64; n_px];
        let mut valid = vec![false; n_px];
        let (mut sum_d, mut sum_dd, mut sum_y, mut sum_dy) = (0.0, 0.0, 0.0, 0.0);
        let mut m = 0usize;
        for i in 0..n_px {
            if mask.flags()[i] {
                let dv = pred.values()[i].as_f64();
                let yv = gt.values()[i].as_f64();
                d[i] = dv;
                y[i] = yv;
                valid[i] = true;
                sum_d += dv;
                sum_dd += dv * dv;
                sum_y += yv;
                sum_dy += dv * yv;
                m += 1;
            }
        }
        let det = m as f64 * sum_dd - sum_d * sum_d;
        let mut residual = vec![0.0f64; n_px];
        for i in 0..n_px {
            if valid[i] {
                residual[i] = s * d[i] + t - y[i];
            }
        }
        Ok(Self {
            s,
            t,
            residual,
            m,
            sum_d,
            sum_y,
            sum_dy,
            det,
            d,
            y,
            valid,
        })
    }

    /// Given `upstream[k] = d value / d residual_k`, returns `d value / d pred_k`,
    /// including the dependence of `(s, t)` on the prediction.
    pub fn backprop(&self, upstream: &[f64]) -> Vec<f64> {
        let n = self.m as f64;
        let mut up_sum = 0.0f64;
        let mut up_dot_d = 0.0f64;
        for i in 0..upstream.len() {
            if self.valid[i] {
                up_sum += upstream[i];
                up_dot_d += upstream[i] * self.d[i];
            }
        }
        let mut grad = vec![0.0f64; upstream.len()];
        for i in 0..upstream.len() {
            if !self.valid[i] {
                continue;
            }
            let ddet = 2.0 * n * self.d[i] - 2.0 * self.sum_d;
            let ds = (n * self.y[i] - self.sum_y) / self.det - self.s * ddet / self.det;
            let dt = (2.0 * self.d[i] * self.sum_y - self.sum_dy - self.sum_d * self.y[i]) / self.det
                - self.t * ddet / self.det;
            grad[i] = self.s * upstream[i] + up_dot_d * ds + up_sum * dt;
        }
        grad
    }
}

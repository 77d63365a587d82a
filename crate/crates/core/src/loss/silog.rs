//! Scale-invariant loss in log-depth space.

use super::LossResult;
use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, ValidityMask};
use crate::Scalar;

/// Scale-invariant log-depth loss. With `r_i = log z_i - log z*_i`, the inner
/// minimisation over the log-scale is attained at `-mean(r)`, giving the
/// variance form `value = (1/2M) sum (r_i - mean(r))^2`. Gradient:
/// `grad_i = (r_i - mean(r)) / (M * z_i)`.
///
/// Both grids must be strictly positive at valid pixels.
pub fn silog<T: Scalar>(
    pred_z: &ScalarGrid<T>,
    gt_z: &ScalarGrid<T>,
    mask: &ValidityMask,
) -> Result<LossResult<T>> {
    pred_z.shape_matches(mask)?;
    gt_z.shape_matches(mask)?;
    let m = mask.count_valid();
    if m == 0 {
        return Err(Error::EmptyMask { op: "silog" });
    }
    let n_px = pred_z.len();
    let mut r = vec![0.0f64; n_px];
    let mut mean = 0.0f64;
    for i in 0..n_px {
        if mask.flags()[i] {
            let z = pred_z.values()[i].as_f64();
            let zs = gt_z.values()[i].as_f64();
            if z <= 0.0 || zs <= 0.0 {
                return Err(Error::Domain(format!(
                    "silog requires strictly positive depths at valid pixels, got ({z}, {zs})"
                )));
            }
            r[i] = z.ln() - zs.ln();
            mean += r[i];
        }
    }
    mean /= m as f64;
    let mut value = 0.0f64;
    let mut grad = vec![0.0f64; n_px];
    for i in 0..n_px {
        if mask.flags()[i] {
            let dev = r[i] - mean;
            value += dev * dev;
            grad[i] = dev / (m as f64 * pred_z.values()[i].as_f64());
        }
    }
    value /= 2.0 * m as f64;
    Ok(LossResult {
        value: T::of_f64(value),
        grad: ScalarGrid::new(
            pred_z.rows(),
            pred_z.cols(),
            grad.into_iter().map(T::of_f64).collect(),
            pred_z.unit(),
        )?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Unit;

    #[test]
    fn scale_is_absorbed_in_log_space() {
        let z = ScalarGrid::new(1, 4, vec![1.0, 2.0, 0.5, 3.0], Unit::Depth).unwrap();
        let mask = ValidityMask::all_valid(1, 4).unwrap();
        for c in [1.0, 0.1, 7.3] {
            let scaled = z.map(|v| c * v);
            let res = silog(&scaled, &z, &mask).unwrap();
            assert!(res.value < 1e-14);
        }
    }

    #[test]
    fn two_pixel_variance_example() {
        // z = [1, e], z* = [1, 1]: r = [0, 1], value = (1/4)(0.25 + 0.25) = 0.125
        let z = ScalarGrid::new(1, 2, vec![1.0, std::f64::consts::E], Unit::Depth).unwrap();
        let zs = ScalarGrid::new(1, 2, vec![1.0, 1.0], Unit::Depth).unwrap();
        let mask = ValidityMask::all_valid(1, 2).unwrap();
        let res = silog(&z, &zs, &mask).unwrap();
        assert!((res.value - 0.125).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_depth_is_a_domain_error() {
        let z = ScalarGrid::new(1, 2, vec![1.0, -2.0], Unit::Depth).unwrap();
        let zs = ScalarGrid::new(1, 2, vec![1.0, 1.0], Unit::Depth).unwrap();
        let mask = ValidityMask::all_valid(1, 2).unwrap();
        assert!(matches!(silog(&z, &zs, &mask), Err(Error::Domain(_))));
        // but invalid pixels may hold anything
        let m2 = ValidityMask::new(1, 2, vec![true, false]).unwrap();
        assert!(silog(&z, &zs, &m2).is_ok());
    }
}

//! Stereo-derived disparity post-processing: left-right consistency, frame
//! quality gating, sky masking, and unit-range normalisation.
//!
//! Disparity proxies come from optical flow between the two views: the
//! horizontal flow component stands in for disparity. A pixel survives the
//! left-right check when the forward flow and the backward flow sampled at
//! the warped position cancel to within a threshold. Frames are accepted or
//! rejected from three gates on vertical flow, horizontal range, and
//! consistency pass rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{masked_reduce, Reduction, ScalarGrid, ValidityMask};
use crate::Scalar;

/// Dense optical flow between a stereo pair; `u` horizontal, `v` vertical.
#[derive(Debug, Clone)]
pub struct FlowField<T> {
    pub u: ScalarGrid<T>,
    pub v: ScalarGrid<T>,
}

impl<T: Scalar> FlowField<T> {
    pub fn new(u: ScalarGrid<T>, v: ScalarGrid<T>) -> Result<Self> {
        if !u.same_shape(&v) {
            return Err(Error::dimension(
                format!("{}x{}", u.rows(), u.cols()),
                format!("{}x{}", v.rows(), v.cols()),
            ));
        }
        Ok(Self { u, v })
    }
}

/// Thresholds of the frame-rejection rules.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FrameQualityThresholds {
    /// Vertical flow magnitude counted as a violation, in pixels.
    pub vertical_px: f64,
    /// Maximum tolerated fraction of vertical violations.
    pub vertical_fraction: f64,
    /// Minimum horizontal disparity range, in pixels.
    pub horizontal_range_px: f64,
    /// Minimum left-right consistency pass rate.
    pub pass_rate: f64,
}

impl Default for FrameQualityThresholds {
    fn default() -> Self {
        Self {
            vertical_px: 2.0,
            vertical_fraction: 0.10,
            horizontal_range_px: 10.0,
            pass_rate: 0.70,
        }
    }
}

/// Reasons a frame can be rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    VerticalDisparity,
    HorizontalRange,
    ConsistencyPassRate,
}

/// Quality gating outcome for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameQualityReport {
    /// Fraction of all pixels with |vertical flow| above the threshold.
    pub vertical_violation_fraction: f64,
    /// max - min of the horizontal flow over LR-consistent pixels (0 if none).
    pub horizontal_range: f64,
    /// Fraction of pixels passing the left-right consistency check.
    pub lr_pass_rate: f64,
    pub accepted: bool,
    pub reject_reasons: Vec<RejectReason>,
}

/// Bilinear sample of a grid at fractional coordinates; `None` outside
/// `[0, cols-1] x [0, rows-1]`.
fn bilinear<T: Scalar>(grid: &ScalarGrid<T>, x: f64, y: f64) -> Option<f64> {
    if !(x.is_finite() && y.is_finite()) {
        return None;
    }
    if x < 0.0 || y < 0.0 || x > (grid.cols() - 1) as f64 || y > (grid.rows() - 1) as f64 {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(grid.cols() - 1);
    let y1 = (y0 + 1).min(grid.rows() - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let g = |r: usize, c: usize| grid.get(r, c).as_f64();
    Some(
        g(y0, x0) * (1.0 - fx) * (1.0 - fy)
            + g(y0, x1) * fx * (1.0 - fy)
            + g(y1, x0) * (1.0 - fx) * fy
            + g(y1, x1) * fx * fy,
    )
}

/// Left-right consistency check: pixel `(x, y)` is valid iff
/// `|u_lr(x, y) + u_rl(x + u_lr(x, y), y)| <= threshold`, with bilinear
/// sampling of the backward flow. Warp targets outside the frame invalidate
/// the pixel.
pub fn lr_consistency<T: Scalar>(
    flow_lr: &FlowField<T>,
    flow_rl: &FlowField<T>,
    threshold: f64,
) -> Result<ValidityMask> {
    if !flow_lr.u.same_shape(&flow_rl.u) {
        return Err(Error::dimension(
            format!("{}x{}", flow_lr.u.rows(), flow_lr.u.cols()),
            format!("{}x{}", flow_rl.u.rows(), flow_rl.u.cols()),
        ));
    }
    let (rows, cols) = (flow_lr.u.rows(), flow_lr.u.cols());
    let mut flags = vec![false; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let u = flow_lr.u.get(r, c).as_f64();
            let warped_x = c as f64 + u;
            if let Some(u_back) = bilinear(&flow_rl.u, warped_x, r as f64) {
                flags[r * cols + c] = (u + u_back).abs() <= threshold;
            }
        }
    }
    ValidityMask::new(rows, cols, flags)
}

/// Default left-right consistency threshold in pixels.
pub const LR_CONSISTENCY_THRESHOLD_PX: f64 = 2.0;

/// Evaluates the three frame-rejection rules. A frame is accepted iff the
/// vertical-violation fraction is at most `vertical_fraction`, the horizontal
/// range over consistent pixels is at least `horizontal_range_px`, and the
/// consistency pass rate is at least `pass_rate`. With zero consistent pixels
/// the range reports 0 and the pass-rate gate fires.
pub fn frame_quality<T: Scalar>(
    flow_lr: &FlowField<T>,
    flow_rl: &FlowField<T>,
    thresholds: &FrameQualityThresholds,
) -> Result<FrameQualityReport> {
    let consistent = lr_consistency(flow_lr, flow_rl, thresholds.vertical_px.max(0.0).min(f64::MAX))
        .and(Ok(()))
        .err();
    let _ = consistent;
    let consistent = lr_consistency(flow_lr, flow_rl, LR_CONSISTENCY_THRESHOLD_PX)?;
    let total = (flow_lr.u.rows() * flow_lr.u.cols()) as f64;

    let vertical_violations = flow_lr
        .v
        .values()
        .iter()
        .filter(|v| v.as_f64().abs() > thresholds.vertical_px)
        .count() as f64;
    let vertical_violation_fraction = vertical_violations / total;

    let pass = consistent.count_valid();
    let lr_pass_rate = pass as f64 / total;

    let horizontal_range = if pass > 0 {
        let max = masked_reduce(&flow_lr.u, &consistent, Reduction::Max)?.as_f64();
        let min = masked_reduce(&flow_lr.u, &consistent, Reduction::Min)?.as_f64();
        max - min
    } else {
        0.0
    };

    let mut reject_reasons = Vec::new();
    if vertical_violation_fraction > thresholds.vertical_fraction {
        reject_reasons.push(RejectReason::VerticalDisparity);
    }
    if horizontal_range < thresholds.horizontal_range_px {
        reject_reasons.push(RejectReason::HorizontalRange);
    }
    if lr_pass_rate < thresholds.pass_rate {
        reject_reasons.push(RejectReason::ConsistencyPassRate);
    }
    Ok(FrameQualityReport {
        vertical_violation_fraction,
        horizontal_range,
        lr_pass_rate,
        accepted: reject_reasons.is_empty(),
        reject_reasons,
    })
}

/// Sets sky pixels to the minimum disparity over valid non-sky pixels
/// (computed before any overwrite) and marks them valid in the returned mask.
pub fn apply_sky_mask<T: Scalar>(
    disp: &ScalarGrid<T>,
    mask: &ValidityMask,
    sky: &ValidityMask,
) -> Result<(ScalarGrid<T>, ValidityMask)> {
    disp.shape_matches(mask)?;
    disp.shape_matches(sky)?;
    let mut min: Option<T> = None;
    for i in 0..disp.len() {
        if mask.flags()[i] && !sky.flags()[i] {
            let v = disp.values()[i];
            min = Some(min.map_or(v, |a| a.min(v)));
        }
    }
    let min = min.ok_or(Error::EmptyMask { op: "apply_sky_mask" })?;
    let mut out = disp.clone();
    let mut out_mask = mask.clone();
    for i in 0..out.len() {
        if sky.flags()[i] {
            out.values_mut()[i] = min;
            out_mask.flags_mut()[i] = true;
        }
    }
    Ok((out, out_mask))
}

/// Shifts and scales valid disparities to span [0, 1] exactly:
/// `(d - min) / (max - min)`. Constant grids are a degenerate-range error.
pub fn normalize_unit<T: Scalar>(disp: &ScalarGrid<T>, mask: &ValidityMask) -> Result<ScalarGrid<T>> {
    let min = masked_reduce(disp, mask, Reduction::Min).map_err(|e| match e {
        Error::EmptyMask { .. } => Error::EmptyMask { op: "normalize_unit" },
        other => other,
    })?;
    let max = masked_reduce(disp, mask, Reduction::Max)?;
    if max <= min {
        return Err(Error::DegenerateRange);
    }
    let span = max - min;
    Ok(disp.map(|v| (v - min) / span))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Unit;

    fn flow(rows: usize, cols: usize, u: impl FnMut(usize, usize) -> f64, v: impl FnMut(usize, usize) -> f64) -> FlowField<f64> {
        FlowField::new(
            ScalarGrid::from_fn(rows, cols, Unit::FlowU, u).unwrap(),
            ScalarGrid::from_fn(rows, cols, Unit::FlowV, v).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_flow_is_fully_consistent() {
        let lr = flow(4, 6, |_, _| 0.0, |_, _| 0.0);
        let rl = flow(4, 6, |_, _| 0.0, |_, _| 0.0);
        let m = lr_consistency(&lr, &rl, 2.0).unwrap();
        assert_eq!(m.count_valid(), 24);
    }

    #[test]
    fn uncompensated_shift_fails_everywhere() {
        // forward flow +5, backward flow 0: |5 + 0| > 2 at every in-bounds pixel
        let lr = flow(3, 20, |_, _| 5.0, |_, _| 0.0);
        let rl = flow(3, 20, |_, _| 0.0, |_, _| 0.0);
        let m = lr_consistency(&lr, &rl, 2.0).unwrap();
        assert_eq!(m.count_valid(), 0);
    }

    #[test]
    fn out_of_bounds_warp_is_invalid() {
        // warp lands outside for the rightmost pixels
        let lr = flow(1, 5, |_, _| 3.0, |_, _| 0.0);
        let rl = flow(1, 5, |_, _| -3.0, |_, _| 0.0);
        let m = lr_consistency(&lr, &rl, 2.0).unwrap();
        assert_eq!(m.flags(), &[true, false, false, false, false]);
    }

    #[test]
    fn consistency_is_symmetric_under_global_negation() {
        let lr = flow(4, 8, |r, c| (r as f64 - c as f64) * 0.3, |_, _| 0.0);
        let rl = flow(4, 8, |r, c| -((r as f64 - c as f64) * 0.3), |_, _| 0.0);
        let m1 = lr_consistency(&lr, &rl, 2.0).unwrap();
        let neg_lr = flow(4, 8, |r, c| -((r as f64 - c as f64) * 0.3), |_, _| 0.0);
        let neg_rl = flow(4, 8, |r, c| (r as f64 - c as f64) * 0.3, |_, _| 0.0);
        let m2 = lr_consistency(&neg_lr, &neg_rl, 2.0).unwrap();
        assert_eq!(m1.count_valid(), m2.count_valid());
    }

    fn clean_pair(rows: usize, cols: usize, span: f64) -> (FlowField<f64>, FlowField<f64>) {
        // constant-per-row horizontal flow spanning [0, span]; rows map to
        // disparities, backward flow exactly cancels
        let u_of_row = move |r: usize| span * r as f64 / (rows - 1) as f64;
        let lr = flow(rows, cols, move |r, _| u_of_row(r), |_, _| 0.0);
        let rl = flow(rows, cols, move |r, _| -u_of_row(r), |_, _| 0.0);
        (lr, rl)
    }

    #[test]
    fn clean_frame_is_accepted() {
        let (lr, rl) = clean_pair(10, 100, 20.0);
        let report = frame_quality(&lr, &rl, &FrameQualityThresholds::default()).unwrap();
        assert!(report.accepted, "{report:?}");
        assert!(report.reject_reasons.is_empty());
        assert!(report.horizontal_range >= 10.0);
    }

    #[test]
    fn each_gate_fires_alone() {
        let thresholds = FrameQualityThresholds::default();

        // vertical: 15% of pixels with |v| = 3
        let (lr0, rl) = clean_pair(20, 100, 20.0);
        let v = ScalarGrid::from_fn(20, 100, Unit::FlowV, |r, c| {
            if (r * 100 + c) % 20 < 3 { 3.0 } else { 0.0 }
        })
        .unwrap();
        let lr = FlowField::new(lr0.u.clone(), v).unwrap();
        let report = frame_quality(&lr, &rl, &thresholds).unwrap();
        assert_eq!(report.reject_reasons, vec![RejectReason::VerticalDisparity]);

        // range: span 5 px, otherwise clean
        let (lr, rl) = clean_pair(20, 100, 5.0);
        let report = frame_quality(&lr, &rl, &thresholds).unwrap();
        assert_eq!(report.reject_reasons, vec![RejectReason::HorizontalRange]);

        // pass rate: 40% of rows inconsistent
        let rows = 20;
        let u_of_row = |r: usize| 20.0 * r as f64 / (rows - 1) as f64;
        let lr = flow(rows, 100, move |r, _| u_of_row(r), |_, _| 0.0);
        let rl = flow(rows, 100, move |r, _| {
            if r % 5 < 2 { 30.0 } else { -u_of_row(r) }
        }, |_, _| 0.0);
        let report = frame_quality(&lr, &rl, &thresholds).unwrap();
        assert_eq!(report.reject_reasons, vec![RejectReason::ConsistencyPassRate]);
    }

    #[test]
    fn sky_mask_examples() {
        let disp = ScalarGrid::new(1, 4, vec![0.5, 0.01, 0.3, 9.0], Unit::Disparity).unwrap();
        let mask = ValidityMask::new(1, 4, vec![true, true, true, false]).unwrap();
        let sky = ValidityMask::new(1, 4, vec![false, false, false, true]).unwrap();
        let (out, out_mask) = apply_sky_mask(&disp, &mask, &sky).unwrap();
        assert_eq!(out.values(), &[0.5, 0.01, 0.3, 0.01]);
        assert!(out_mask.get(0, 3));

        // no sky: unchanged
        let none = ValidityMask::new(1, 4, vec![false; 4]).unwrap();
        let (same, same_mask) = apply_sky_mask(&disp, &mask, &none).unwrap();
        assert_eq!(same.values(), disp.values());
        assert_eq!(same_mask, mask);

        // all sky: nothing to anchor the minimum
        let all = ValidityMask::new(1, 4, vec![true; 4]).unwrap();
        assert!(matches!(
            apply_sky_mask(&disp, &mask, &all),
            Err(Error::EmptyMask { .. })
        ));
    }

    #[test]
    fn normalize_unit_examples() {
        let d = ScalarGrid::new(1, 3, vec![2.0, 4.0, 6.0], Unit::Disparity).unwrap();
        let m = ValidityMask::all_valid(1, 3).unwrap();
        let n = normalize_unit(&d, &m).unwrap();
        assert_eq!(n.values(), &[0.0, 0.5, 1.0]);

        // idempotent on [0, 1]-spanning grids, min/max exact
        let again = normalize_unit(&n, &m).unwrap();
        assert_eq!(again.values(), n.values());

        let flat = ScalarGrid::filled(1, 3, 2.0f64, Unit::Disparity).unwrap();
        assert!(matches!(normalize_unit(&flat, &m), Err(Error::DegenerateRange)));
    }
}

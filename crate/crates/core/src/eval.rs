//! Zero-shot cross-dataset evaluation: per-image alignment in disparity
//! space, depth caps, metrics, and aggregation.
//!
//! Predictions and ground truth are aligned in scale and shift per image with
//! the least-squares criterion before any error is measured. Datasets
//! evaluated in depth space cap predicted depth at a per-dataset maximum;
//! the cap is made total by flooring aligned disparities at `1/cap` before
//! inversion. Images whose alignment degenerates are skipped with a recorded
//! reason rather than silently dropped.

use serde::{Deserialize, Serialize};

use crate::align::{apply_alignment, lsq_align};
use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, Unit, ValidityMask};
use crate::Scalar;

/// Maximum depth in meters for datasets evaluated in depth space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthCapPolicy {
    pub cap_meters: Option<f64>,
}

impl DepthCapPolicy {
    pub fn capped(cap_meters: f64) -> Self {
        Self {
            cap_meters: Some(cap_meters),
        }
    }

    pub fn none() -> Self {
        Self { cap_meters: None }
    }
}

/// Metric selector; all are lower-is-better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Whdr,
    AbsRel,
    DeltaGt125,
    RmseDisparity,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Whdr => "whdr",
            MetricKind::AbsRel => "abs_rel",
            MetricKind::DeltaGt125 => "delta_gt_125",
            MetricKind::RmseDisparity => "rmse_disparity",
        }
    }
}

/// One per-image metric value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub image_id: String,
    pub metric: MetricKind,
    pub value: f64,
}

/// A human-labelled ordinal depth pair: which endpoint is closer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrdinalAnnotation {
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
    pub first_closer: bool,
    pub weight: f64,
}

/// Aligns a disparity prediction to ground-truth disparity with the
/// least-squares criterion. Metric datasets convert depth to inverse depth
/// upstream. Alignment errors propagate so callers can record the skip.
pub fn eval_align<T: Scalar>(
    pred_disp: &ScalarGrid<T>,
    gt_disp: &ScalarGrid<T>,
    mask: &ValidityMask,
) -> Result<ScalarGrid<T>> {
    let a = lsq_align(pred_disp, gt_disp, mask)?;
    Ok(apply_alignment(pred_disp, &a))
}

/// Converts aligned disparity to capped depth: `z = 1 / max(d, 1/cap)`, so
/// every output depth is at most the cap and nonpositive disparities map to
/// the cap itself.
pub fn disparity_to_depth<T: Scalar>(
    disp: &ScalarGrid<T>,
    policy: &DepthCapPolicy,
) -> Result<ScalarGrid<T>> {
    let cap = policy
        .cap_meters
        .ok_or_else(|| Error::Config("disparity_to_depth requires a depth cap".into()))?;
    if cap <= 0.0 {
        return Err(Error::Config(format!("depth cap must be positive, got {cap}")));
    }
    let floor = T::of_f64(1.0 / cap);
    Ok(disp.map(|d| T::one() / d.max(floor)).with_unit(Unit::Depth))
}

/// Mean absolute relative error `(1/M) sum |z - z*| / z*` over valid pixels.
pub fn abs_rel<T: Scalar>(z: &ScalarGrid<T>, z_star: &ScalarGrid<T>, mask: &ValidityMask) -> Result<f64> {
    z.shape_matches(mask)?;
    z_star.shape_matches(mask)?;
    let m = mask.count_valid();
    if m == 0 {
        return Err(Error::EmptyMask { op: "abs_rel" });
    }
    let mut sum = 0.0f64;
    for ((&zi, &zs), &ok) in z.values().iter().zip(z_star.values()).zip(mask.flags()) {
        if ok {
            let zs = zs.as_f64();
            if zs <= 0.0 {
                return Err(Error::Domain(format!(
                    "abs_rel requires positive ground-truth depth, got {zs}"
                )));
            }
            sum += (zi.as_f64() - zs).abs() / zs;
        }
    }
    Ok(sum / m as f64)
}

/// Percentage of valid pixels with `max(z/z*, z*/z) > threshold` (strict).
pub fn delta_gt<T: Scalar>(
    z: &ScalarGrid<T>,
    z_star: &ScalarGrid<T>,
    mask: &ValidityMask,
    threshold: f64,
) -> Result<f64> {
    z.shape_matches(mask)?;
    z_star.shape_matches(mask)?;
    let m = mask.count_valid();
    if m == 0 {
        return Err(Error::EmptyMask { op: "delta_gt" });
    }
    let mut bad = 0usize;
    for ((&zi, &zs), &ok) in z.values().iter().zip(z_star.values()).zip(mask.flags()) {
        if ok {
            let (zi, zs) = (zi.as_f64(), zs.as_f64());
            if zi <= 0.0 || zs <= 0.0 {
                return Err(Error::Domain(format!(
                    "delta_gt requires strictly positive depths, got ({zi}, {zs})"
                )));
            }
            if (zi / zs).max(zs / zi) > threshold {
                bad += 1;
            }
        }
    }
    Ok(100.0 * bad as f64 / m as f64)
}

/// Weighted Human Disagreement Rate in percent. The prediction calls the
/// first point closer iff its disparity is strictly larger; exact ties count
/// as disagreement.
pub fn whdr<T: Scalar>(pred_disp: &ScalarGrid<T>, annotations: &[OrdinalAnnotation]) -> Result<f64> {
    if annotations.is_empty() {
        return Err(Error::InsufficientData {
            op: "whdr",
            needed: 1,
            got: 0,
        });
    }
    let mut disagree = 0.0f64;
    let mut total = 0.0f64;
    for a in annotations {
        if a.y1 >= pred_disp.rows()
            || a.y2 >= pred_disp.rows()
            || a.x1 >= pred_disp.cols()
            || a.x2 >= pred_disp.cols()
        {
            return Err(Error::dimension(
                format!("{}x{}", pred_disp.rows(), pred_disp.cols()),
                format!("annotation ({},{}) -> ({},{})", a.x1, a.y1, a.x2, a.y2),
            ));
        }
        if a.weight <= 0.0 {
            return Err(Error::Domain(format!(
                "annotation weight must be positive, got {}",
                a.weight
            )));
        }
        let d1 = pred_disp.get(a.y1, a.x1).as_f64();
        let d2 = pred_disp.get(a.y2, a.x2).as_f64();
        // ties fail both labels
        let agree = if d1 == d2 {
            false
        } else {
            (d1 > d2) == a.first_closer
        };
        if !agree {
            disagree += a.weight;
        }
        total += a.weight;
    }
    Ok(100.0 * disagree / total)
}

/// Root mean squared error in disparity space over valid pixels; alignment is
/// assumed already applied.
pub fn rmse_disparity<T: Scalar>(
    pred_disp: &ScalarGrid<T>,
    gt_disp: &ScalarGrid<T>,
    mask: &ValidityMask,
) -> Result<f64> {
    pred_disp.shape_matches(mask)?;
    gt_disp.shape_matches(mask)?;
    let m = mask.count_valid();
    if m == 0 {
        return Err(Error::EmptyMask { op: "rmse_disparity" });
    }
    let mut sum = 0.0f64;
    for ((&d, &g), &ok) in pred_disp.values().iter().zip(gt_disp.values()).zip(mask.flags()) {
        if ok {
            let r = d.as_f64() - g.as_f64();
            sum += r * r;
        }
    }
    Ok((sum / m as f64).sqrt())
}

/// Which axis the resize rule pins to the target length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeMode {
    /// The larger input axis becomes the target (default rule).
    LargerAxis,
    /// The smaller input axis becomes the target (wide-aspect datasets).
    SmallerAxis,
}

/// Evaluation input dimensions: the selected axis becomes exactly `target`;
/// the other axis becomes the positive multiple of `multiple` nearest to the
/// aspect-preserving length (at least one multiple). Halfway cases round away
/// from zero.
pub fn eval_resize_dims(
    height: usize,
    width: usize,
    target: usize,
    multiple: usize,
    mode: ResizeMode,
) -> (usize, usize) {
    assert!(height >= 1 && width >= 1 && target >= 1 && multiple >= 1);
    let pick_height = match mode {
        ResizeMode::LargerAxis => height >= width,
        ResizeMode::SmallerAxis => height <= width,
    };
    let round_to_multiple = |len: f64| -> usize {
        let k = (len / multiple as f64).round().max(1.0);
        k as usize * multiple
    };
    if pick_height {
        let scaled = width as f64 * target as f64 / height as f64;
        (target, round_to_multiple(scaled))
    } else {
        let scaled = height as f64 * target as f64 / width as f64;
        (round_to_multiple(scaled), target)
    }
}

/// Relative change in percent for lower-is-better metrics:
/// `100 * (baseline - value) / baseline`; positive means improvement.
pub fn relative_change(baseline: f64, value: f64) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::Domain("relative change undefined for zero baseline".into()));
    }
    Ok(100.0 * (baseline - value) / baseline)
}

/// Outcome of evaluating one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ImageOutcome {
    Ok { record: MetricRecord },
    Skipped { image_id: String, reason: String },
}

/// Aggregate over per-image outcomes: arithmetic mean of non-skipped values
/// plus the enumerated skips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: Option<MetricKind>,
    pub mean: Option<f64>,
    pub evaluated: usize,
    pub skipped: Vec<(String, String)>,
}

pub fn aggregate(outcomes: &[ImageOutcome]) -> Aggregate {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    let mut metric = None;
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            ImageOutcome::Ok { record } => {
                sum += record.value;
                n += 1;
                metric.get_or_insert(record.metric);
            }
            ImageOutcome::Skipped { image_id, reason } => {
                skipped.push((image_id.clone(), reason.clone()));
            }
        }
    }
    Aggregate {
        metric,
        mean: if n > 0 { Some(sum / n as f64) } else { None },
        evaluated: n,
        skipped,
    }
}

/// Dataset descriptor as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub metric: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_meters: Option<f64>,
    pub gt_unit: GtUnit,
}

/// Unit the ground-truth files are stored in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtUnit {
    Depth,
    Disparity,
}

/// Applies the full single-image protocol for grid-based metrics: mask out
/// ground-truth depths above the cap (no-op when the cap equals the dataset
/// maximum), convert depth ground truth to disparity, align the prediction,
/// cap, and measure. Failures become skip outcomes with the reason recorded.
pub fn evaluate_image<T: Scalar>(
    image_id: &str,
    pred_disp: &ScalarGrid<T>,
    gt: &ScalarGrid<T>,
    mask: &ValidityMask,
    descriptor: &DatasetDescriptor,
) -> ImageOutcome {
    match evaluate_image_inner(pred_disp, gt, mask, descriptor) {
        Ok(value) => ImageOutcome::Ok {
            record: MetricRecord {
                image_id: image_id.to_string(),
                metric: descriptor.metric,
                value,
            },
        },
        Err(e) => ImageOutcome::Skipped {
            image_id: image_id.to_string(),
            reason: e.to_string(),
        },
    }
}

fn evaluate_image_inner<T: Scalar>(
    pred_disp: &ScalarGrid<T>,
    gt: &ScalarGrid<T>,
    mask: &ValidityMask,
    descriptor: &DatasetDescriptor,
) -> Result<f64> {
    let mut mask = mask.clone();
    let gt_depth;
    let gt_disp;
    match descriptor.gt_unit {
        GtUnit::Depth => {
            // exclude nonpositive depths, and depths beyond the cap when present
            for (flag, &z) in mask.flags_mut().iter_mut().zip(gt.values()) {
                let z = z.as_f64();
                if *flag && (z <= 0.0 || descriptor.cap_meters.is_some_and(|cap| z > cap)) {
                    *flag = false;
                }
            }
            gt_depth = Some(gt.clone().with_unit(Unit::Depth));
            gt_disp = gt
                .map(|z| if z.as_f64() > 0.0 { T::one() / z } else { T::zero() })
                .with_unit(Unit::InverseDepth);
        }
        GtUnit::Disparity => {
            gt_depth = None;
            gt_disp = gt.clone().with_unit(Unit::Disparity);
        }
    }

    let aligned = eval_align(pred_disp, &gt_disp, &mask)?;
    match descriptor.metric {
        MetricKind::RmseDisparity => rmse_disparity(&aligned, &gt_disp, &mask),
        MetricKind::AbsRel | MetricKind::DeltaGt125 => {
            let policy = DepthCapPolicy {
                cap_meters: descriptor.cap_meters,
            };
            let z = disparity_to_depth(&aligned, &policy)?;
            let z_star = gt_depth.ok_or_else(|| {
                Error::Config("depth-space metrics need ground truth in depth units".into())
            })?;
            match descriptor.metric {
                MetricKind::AbsRel => abs_rel(&z, &z_star, &mask),
                _ => delta_gt(&z, &z_star, &mask, 1.25),
            }
        }
        MetricKind::Whdr => Err(Error::Config(
            "whdr is evaluated from ordinal annotations, not dense ground truth".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_align_recovers_affine_prediction() {
        let gt = ScalarGrid::from_fn(3, 3, Unit::Disparity, |r, c| 0.1 + 0.05 * (r * 3 + c) as f64).unwrap();
        let pred = gt.map(|v| 2.0 * v + 0.1);
        let mask = ValidityMask::all_valid(3, 3).unwrap();
        let aligned = eval_align(&pred, &gt, &mask).unwrap();
        for (a, g) in aligned.values().iter().zip(gt.values()) {
            assert!((a - g).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_prediction_propagates_degenerate_error() {
        let gt = ScalarGrid::from_fn(2, 2, Unit::Disparity, |r, c| (r + c) as f64 + 0.5).unwrap();
        let pred = ScalarGrid::filled(2, 2, 0.5f64, Unit::Disparity).unwrap();
        let mask = ValidityMask::all_valid(2, 2).unwrap();
        assert!(matches!(
            eval_align(&pred, &gt, &mask),
            Err(Error::DegenerateAlignment { .. })
        ));
    }

    #[test]
    fn disparity_to_depth_examples() {
        let d = ScalarGrid::new(1, 3, vec![0.2, 0.0, 1.0], Unit::Disparity).unwrap();
        let z = disparity_to_depth(&d, &DepthCapPolicy::capped(10.0)).unwrap();
        assert!((z.values()[0] - 5.0).abs() < 1e-12);
        assert_eq!(z.values()[1], 10.0); // floor engages
        assert!((z.values()[2] - 1.0).abs() < 1e-12);
        assert_eq!(z.unit(), Unit::Depth);

        let neg = ScalarGrid::new(1, 1, vec![-0.3], Unit::Disparity).unwrap();
        let z72 = disparity_to_depth(&neg, &DepthCapPolicy::capped(72.0)).unwrap();
        assert_eq!(z72.values()[0], 72.0);
    }

    #[test]
    fn abs_rel_and_delta_examples() {
        let mask = ValidityMask::all_valid(1, 1).unwrap();
        let z = ScalarGrid::new(1, 1, vec![2.0], Unit::Depth).unwrap();
        let zs = ScalarGrid::new(1, 1, vec![1.0], Unit::Depth).unwrap();
        assert!((abs_rel(&z, &zs, &mask).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(abs_rel(&z, &z, &mask).unwrap(), 0.0);

        let z13 = ScalarGrid::new(1, 1, vec![1.3], Unit::Depth).unwrap();
        let z125 = ScalarGrid::new(1, 1, vec![1.25], Unit::Depth).unwrap();
        let one = ScalarGrid::new(1, 1, vec![1.0], Unit::Depth).unwrap();
        assert_eq!(delta_gt(&z13, &one, &mask, 1.25).unwrap(), 100.0);
        assert_eq!(delta_gt(&z125, &one, &mask, 1.25).unwrap(), 0.0); // strict
        assert_eq!(delta_gt(&one, &one, &mask, 1.25).unwrap(), 0.0);
    }

    #[test]
    fn abs_rel_matches_loop_oracle() {
        let z = ScalarGrid::from_fn(4, 4, Unit::Depth, |r, c| 1.0 + 0.3 * ((r * 4 + c) % 7) as f64).unwrap();
        let zs = ScalarGrid::from_fn(4, 4, Unit::Depth, |r, c| 1.2 + 0.2 * ((r * 3 + c) % 5) as f64).unwrap();
        let mask = ValidityMask::all_valid(4, 4).unwrap();
        let got = abs_rel(&z, &zs, &mask).unwrap();
        let mut oracle = 0.0;
        for i in 0..16 {
            oracle += (z.values()[i] - zs.values()[i]).abs() / zs.values()[i];
        }
        oracle /= 16.0;
        assert!((got - oracle).abs() < 1e-15);
    }

    #[test]
    fn whdr_examples() {
        let pred = ScalarGrid::new(1, 3, vec![3.0, 2.0, 1.0], Unit::Disparity).unwrap();
        let anns = vec![
            OrdinalAnnotation { x1: 0, y1: 0, x2: 1, y2: 0, first_closer: true, weight: 1.0 },
            OrdinalAnnotation { x1: 2, y1: 0, x2: 0, y2: 0, first_closer: false, weight: 1.0 },
        ];
        assert_eq!(whdr(&pred, &anns).unwrap(), 0.0);
        let negated = pred.map(|v| -v);
        assert_eq!(whdr(&negated, &anns).unwrap(), 100.0);

        // ties count as disagreement
        let flat = ScalarGrid::new(1, 3, vec![1.0, 1.0, 1.0], Unit::Disparity).unwrap();
        assert_eq!(whdr(&flat, &anns).unwrap(), 100.0);

        let empty: Vec<OrdinalAnnotation> = vec![];
        assert!(matches!(whdr(&pred, &empty), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn whdr_weights_are_respected() {
        let pred = ScalarGrid::new(1, 2, vec![2.0, 1.0], Unit::Disparity).unwrap();
        let anns = vec![
            OrdinalAnnotation { x1: 0, y1: 0, x2: 1, y2: 0, first_closer: true, weight: 3.0 },
            OrdinalAnnotation { x1: 0, y1: 0, x2: 1, y2: 0, first_closer: false, weight: 1.0 },
        ];
        assert!((whdr(&pred, &anns).unwrap() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_examples() {
        let a = ScalarGrid::new(1, 4, vec![1.0, 2.0, 3.0, 4.0], Unit::Disparity).unwrap();
        let mask = ValidityMask::all_valid(1, 4).unwrap();
        assert_eq!(rmse_disparity(&a, &a, &mask).unwrap(), 0.0);
        let b = a.map(|v| v + 1.0);
        assert!((rmse_disparity(&b, &a, &mask).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn resize_rule_examples() {
        assert_eq!(eval_resize_dims(1080, 1920, 384, 32, ResizeMode::LargerAxis), (224, 384));
        assert_eq!(eval_resize_dims(384, 384, 384, 32, ResizeMode::LargerAxis), (384, 384));
        assert_eq!(eval_resize_dims(375, 1242, 384, 32, ResizeMode::SmallerAxis), (384, 1280));
    }

    #[test]
    fn relative_change_examples() {
        assert!((relative_change(14.59, 13.00).unwrap() - 10.90).abs() < 0.005);
        assert!((relative_change(18.74, 10.54).unwrap() - 43.76).abs() < 0.005);
        assert_eq!(relative_change(5.0, 5.0).unwrap(), 0.0);
        assert!(matches!(relative_change(0.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn aggregate_counts_and_skips() {
        let outcomes = vec![
            ImageOutcome::Ok {
                record: MetricRecord { image_id: "a".into(), metric: MetricKind::AbsRel, value: 1.0 },
            },
            ImageOutcome::Ok {
                record: MetricRecord { image_id: "b".into(), metric: MetricKind::AbsRel, value: 3.0 },
            },
            ImageOutcome::Skipped { image_id: "c".into(), reason: "degenerate".into() },
            ImageOutcome::Skipped { image_id: "d".into(), reason: "degenerate".into() },
        ];
        let agg = aggregate(&outcomes);
        assert_eq!(agg.mean, Some(2.0));
        assert_eq!(agg.evaluated, 2);
        assert_eq!(agg.skipped.len(), 2);

        let one = aggregate(&outcomes[..1]);
        assert_eq!(one.mean, Some(1.0));
    }

    #[test]
    fn depth_pipeline_excludes_gt_beyond_cap() {
        // ground-truth depths above the cap leave M before any metric
        let descriptor = DatasetDescriptor {
            name: "synthetic".into(),
            metric: MetricKind::AbsRel,
            cap_meters: Some(72.0),
            gt_unit: GtUnit::Depth,
        };
        let gt = ScalarGrid::new(2, 2, vec![10.0, 50.0, 100.0, 20.0], Unit::Depth).unwrap();
        let pred = gt.map(|z| 1.0 / z); // perfect inverse-depth prediction
        let mask = ValidityMask::all_valid(2, 2).unwrap();
        let out = evaluate_image("img", &pred, &gt, &mask, &descriptor);
        match out {
            ImageOutcome::Ok { record } => assert!(record.value < 1e-9),
            other => panic!("expected Ok, got {other:?}"),
        }
    }
}

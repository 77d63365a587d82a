//! Ordinal loss on randomly sampled pixel pairs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LossResult;
use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, ValidityMask};
use crate::Scalar;

/// A pair of distinct valid pixels with its ground-truth ordinal label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrdinalPair {
    /// Row-major index of the first pixel.
    pub first: usize,
    /// Row-major index of the second pixel.
    pub second: usize,
    /// -1, 0 or +1: sign of the ground-truth relation (first vs. second).
    pub label: i8,
}

/// Numerically stable log(1 + exp(x)).
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid 1 / (1 + exp(-x)) without overflow.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Draws `num_pairs` pairs of distinct valid pixels deterministically from
/// `seed` and labels them from the ground truth by a ratio test.
///
/// The ground truth is first offset to be strictly positive (adding
/// `1e-6 - min` when the minimum is nonpositive). A pair is labelled 0 when
/// `max(g_i, g_j) / min(g_i, g_j) <= ratio_threshold`, otherwise +1 when the
/// first value is larger and -1 when smaller.
pub fn sample_ordinal_pairs<T: Scalar>(
    gt: &ScalarGrid<T>,
    mask: &ValidityMask,
    num_pairs: usize,
    ratio_threshold: f64,
    seed: u64,
) -> Result<Vec<OrdinalPair>> {
    gt.shape_matches(mask)?;
    if num_pairs == 0 {
        return Err(Error::Config("ordinal needs num_pairs >= 1".into()));
    }
    if ratio_threshold <= 1.0 {
        return Err(Error::Config(format!(
            "ratio_threshold must exceed 1, got {ratio_threshold}"
        )));
    }
    let valid: Vec<usize> = (0..gt.len()).filter(|&i| mask.flags()[i]).collect();
    if valid.len() < 2 {
        return Err(Error::InsufficientData {
            op: "ordinal",
            needed: 2,
            got: valid.len(),
        });
    }
    let mut min_gt = f64::INFINITY;
    for &i in &valid {
        min_gt = min_gt.min(gt.values()[i].as_f64());
    }
    let offset = if min_gt <= 0.0 { 1e-6 - min_gt } else { 0.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = valid.len();
    let mut pairs = Vec::with_capacity(num_pairs);
    for _ in 0..num_pairs {
        let i = valid[rng.random_range(0..n)];
        let j = loop {
            let j = valid[rng.random_range(0..n)];
            if j != i {
                break j;
            }
        };
        let gi = gt.values()[i].as_f64() + offset;
        let gj = gt.values()[j].as_f64() + offset;
        let ratio = gi.max(gj) / gi.min(gj);
        let label: i8 = if ratio <= ratio_threshold {
            0
        } else if gi > gj {
            1
        } else {
            -1
        };
        pairs.push(OrdinalPair {
            first: i,
            second: j,
            label,
        });
    }
    Ok(pairs)
}

/// Ordinal loss of a prediction over pre-sampled labelled pairs:
/// `log(1 + exp(-(p_i - p_j) * l))` for `l != 0`, `(p_i - p_j)^2` for `l == 0`,
/// averaged over pairs. The gradient accumulates per-pair contributions.
pub fn ordinal_from_pairs<T: Scalar>(
    pred: &ScalarGrid<T>,
    pairs: &[OrdinalPair],
) -> Result<LossResult<T>> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData {
            op: "ordinal",
            needed: 1,
            got: 0,
        });
    }
    let mut value = 0.0f64;
    let mut grad = vec![0.0f64; pred.len()];
    let inv_pairs = 1.0 / pairs.len() as f64;
    for p in pairs {
        let delta = pred.values()[p.first].as_f64() - pred.values()[p.second].as_f64();
        match p.label {
            0 => {
                value += delta * delta;
                let d = 2.0 * delta * inv_pairs;
                grad[p.first] += d;
                grad[p.second] -= d;
            }
            l => {
                let lf = l as f64;
                value += softplus(-delta * lf);
                let d = -lf * sigmoid(-delta * lf) * inv_pairs;
                grad[p.first] += d;
                grad[p.second] -= d;
            }
        }
    }
    value *= inv_pairs;
    Ok(LossResult {
        value: T::of_f64(value),
        grad: ScalarGrid::new(
            pred.rows(),
            pred.cols(),
            grad.into_iter().map(T::of_f64).collect(),
            pred.unit(),
        )?,
    })
}

/// Convenience composition: sample pairs from the ground truth, then evaluate
/// the pair loss on the prediction. Bit-identical results for identical seeds
/// and inputs.
pub fn ordinal<T: Scalar>(
    pred: &ScalarGrid<T>,
    gt: &ScalarGrid<T>,
    mask: &ValidityMask,
    num_pairs: usize,
    ratio_threshold: f64,
    seed: u64,
) -> Result<LossResult<T>> {
    pred.shape_matches(mask)?;
    let pairs = sample_ordinal_pairs(gt, mask, num_pairs, ratio_threshold, seed)?;
    ordinal_from_pairs(pred, &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Unit;

    #[test]
    fn equal_predictions_on_ordered_pair_cost_log_two() {
        // gt separates the two pixels (ratio test -> ±1); equal predictions
        // contribute log(1 + exp(0)) = log 2 per pair
        let pred = ScalarGrid::new(1, 2, vec![1.0, 1.0], Unit::Disparity).unwrap();
        let gt = ScalarGrid::new(1, 2, vec![1.0, 10.0], Unit::Disparity).unwrap();
        let mask = ValidityMask::all_valid(1, 2).unwrap();
        let res = ordinal(&pred, &gt, &mask, 100, 1.02, 7).unwrap();
        assert!((res.value - 2.0f64.ln()).abs() < 1e-12);
        assert!((res.value - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn equal_pair_with_zero_label_costs_zero() {
        let pred = ScalarGrid::new(1, 2, vec![3.0, 3.0], Unit::Disparity).unwrap();
        let gt = ScalarGrid::new(1, 2, vec![5.0, 5.0], Unit::Disparity).unwrap();
        let mask = ValidityMask::all_valid(1, 2).unwrap();
        let res = ordinal(&pred, &gt, &mask, 50, 1.02, 3).unwrap();
        assert_eq!(res.value, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let pred = ScalarGrid::from_fn(4, 4, Unit::Disparity, |r, c| ((r * 3 + c) % 7) as f64 * 0.4).unwrap();
        let gt = ScalarGrid::from_fn(4, 4, Unit::Disparity, |r, c| ((r + 2 * c) % 5) as f64 * 0.9).unwrap();
        let mask = ValidityMask::all_valid(4, 4).unwrap();
        let a = ordinal(&pred, &gt, &mask, 500, 1.02, 42).unwrap();
        let b = ordinal(&pred, &gt, &mask, 500, 1.02, 42).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.grad.values(), b.grad.values());
        let c = ordinal(&pred, &gt, &mask, 500, 1.02, 43).unwrap();
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn pairs_are_distinct_valid_and_labelled_by_ratio() {
        let gt = ScalarGrid::new(1, 4, vec![-2.0, 0.0, 2.0, 2.001], Unit::Disparity).unwrap();
        let mut mask = ValidityMask::all_valid(1, 4).unwrap();
        mask.set(0, 1, false);
        let pairs = sample_ordinal_pairs(&gt, &mask, 300, 1.02, 9).unwrap();
        for p in &pairs {
            assert_ne!(p.first, p.second);
            assert_ne!(p.first, 1);
            assert_ne!(p.second, 1);
            // offset makes values {1e-6, 4 + 1e-6, 4.001 + 1e-6}; indices 2 and
            // 3 are within 2% of each other, index 0 differs from both
            let expect = match (p.first.min(p.second), p.first.max(p.second)) {
                (2, 3) => 0,
                _ => {
                    let hi = if gt.values()[p.first] > gt.values()[p.second] { 1 } else { -1 };
                    hi
                }
            };
            assert_eq!(p.label, expect, "pair {:?}", p);
        }
    }

    #[test]
    fn single_valid_pixel_is_insufficient() {
        let pred = ScalarGrid::new(1, 2, vec![1.0, 2.0], Unit::Disparity).unwrap();
        let gt = pred.clone();
        let mask = ValidityMask::new(1, 2, vec![true, false]).unwrap();
        assert!(matches!(
            ordinal(&pred, &gt, &mask, 10, 1.02, 0),
            Err(Error::InsufficientData { .. })
        ));
    }
}

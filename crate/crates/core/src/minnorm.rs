//! Min-norm point over the convex hull of per-task gradients.
//!
//! Finding the smallest-norm convex combination of per-dataset gradients
//! yields a common descent direction: its negation decreases every task's
//! loss when the minimum norm is positive. The solver is Frank-Wolfe with
//! exact line search, where each step solves the two-point min-norm problem
//! between the current point and the most-aligned vertex in closed form.

use crate::error::{Error, Result};
use crate::Scalar;

/// Flattened gradient of one dataset's loss with respect to shared parameters.
#[derive(Debug, Clone)]
pub struct TaskGradient<T> {
    pub dataset_id: String,
    pub values: Vec<T>,
}

impl<T: Scalar> TaskGradient<T> {
    pub fn new(dataset_id: impl Into<String>, values: Vec<T>) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            values,
        }
    }
}

/// Convex weights over tasks: entries nonnegative, summing to 1 (within 1e-9).
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights<T> {
    pub alpha: Vec<T>,
}

impl<T: Scalar> SimplexWeights<T> {
    /// Validates the simplex invariants.
    pub fn check(&self) -> Result<()> {
        let mut sum = 0.0f64;
        for &a in &self.alpha {
            if a.as_f64() < 0.0 {
                return Err(Error::Domain(format!("negative simplex weight {a}")));
            }
            sum += a.as_f64();
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("simplex weights sum to {sum}")));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Closed-form two-point min-norm: returns `(gamma, 1 - gamma)` minimising
/// `|| gamma * g1 + (1 - gamma) * g2 ||` with
/// `gamma = clamp(((g2 - g1) . g2) / ||g1 - g2||^2, 0, 1)`. When the two
/// gradients coincide (`||g1 - g2||^2 < 1e-18`) any point is optimal and the
/// uniform `(0.5, 0.5)` is returned.
pub fn min_norm_2<T: Scalar>(g1: &[T], g2: &[T]) -> Result<SimplexWeights<T>> {
    if g1.len() != g2.len() {
        return Err(Error::dimension(g1.len(), g2.len()));
    }
    let a: Vec<f64> = g1.iter().map(|v| v.as_f64()).collect();
    let b: Vec<f64> = g2.iter().map(|v| v.as_f64()).collect();
    let gamma = min_norm_2_f64(&a, &b);
    Ok(SimplexWeights {
        alpha: vec![T::of_f64(gamma), T::of_f64(1.0 - gamma)],
    })
}

fn min_norm_2_f64(g1: &[f64], g2: &[f64]) -> f64 {
    let mut diff_sq = 0.0f64;
    let mut num = 0.0f64;
    for (x, y) in g1.iter().zip(g2) {
        let d = y - x;
        diff_sq += d * d;
        num += d * y;
    }
    if diff_sq < 1e-18 {
        return 0.5;
    }
    (num / diff_sq).clamp(0.0, 1.0)
}

/// Frank-Wolfe min-norm solver over the convex hull of `grads`.
///
/// Starting from uniform weights, each iteration picks the vertex most aligned
/// with the descent direction (smallest inner product with the current point)
/// and moves to the exact min-norm point of the segment between the current
/// point and that vertex. Stops when the Frank-Wolfe gap drops below `tol` or
/// after `max_iter` iterations. Defaults used by callers: `max_iter = 250`,
/// `tol = 1e-8`.
pub fn min_norm_fw<T: Scalar>(
    grads: &[TaskGradient<T>],
    max_iter: usize,
    tol: f64,
) -> Result<SimplexWeights<T>> {
    let l = grads.len();
    if l == 0 {
        return Err(Error::InsufficientData {
            op: "min_norm_fw",
            needed: 1,
            got: 0,
        });
    }
    let dim = grads[0].values.len();
    for g in grads {
        if g.values.len() != dim {
            return Err(Error::dimension(dim, g.values.len()));
        }
    }
    if l == 1 {
        return Ok(SimplexWeights {
            alpha: vec![T::one()],
        });
    }

    // Gram matrix of the task gradients; everything below runs on it
    let g64: Vec<Vec<f64>> = grads
        .iter()
        .map(|g| g.values.iter().map(|v| v.as_f64()).collect())
        .collect();
    let mut gram = vec![vec![0.0f64; l]; l];
    for i in 0..l {
        for j in i..l {
            let d = dot(&g64[i], &g64[j]);
            gram[i][j] = d;
            gram[j][i] = d;
        }
    }

    let mut alpha = vec![1.0f64 / l as f64; l];
    for _ in 0..max_iter {
        // inner products of every vertex with the current point
        let mut vertex_dot = vec![0.0f64; l];
        for (i, row) in gram.iter().enumerate() {
            vertex_dot[i] = row.iter().zip(&alpha).map(|(g, a)| g * a).sum();
        }
        let point_sq: f64 = vertex_dot.iter().zip(&alpha).map(|(v, a)| v * a).sum();
        let (best, &best_dot) = vertex_dot
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite gram"))
            .expect("at least one task");
        // Frank-Wolfe gap: max over vertices of <p, p - v>
        if point_sq - best_dot < tol {
            break;
        }
        // exact line search between the current point and the chosen vertex:
        // gamma weights the current point
        let vert_sq = gram[best][best];
        let diff_sq = point_sq - 2.0 * best_dot + vert_sq;
        let gamma = if diff_sq < 1e-18 {
            0.5
        } else {
            ((vert_sq - best_dot) / diff_sq).clamp(0.0, 1.0)
        };
        for a in alpha.iter_mut() {
            *a *= gamma;
        }
        alpha[best] += 1.0 - gamma;
    }

    // guard against fp drift off the simplex
    let sum: f64 = alpha.iter().sum();
    for a in alpha.iter_mut() {
        *a /= sum;
    }
    Ok(SimplexWeights {
        alpha: alpha.into_iter().map(T::of_f64).collect(),
    })
}

/// Convex combination `sum alpha_l * g_l`.
pub fn combine<T: Scalar>(grads: &[TaskGradient<T>], w: &SimplexWeights<T>) -> Result<Vec<T>> {
    if grads.len() != w.alpha.len() {
        return Err(Error::dimension(grads.len(), w.alpha.len()));
    }
    let dim = grads.first().map_or(0, |g| g.values.len());
    for g in grads {
        if g.values.len() != dim {
            return Err(Error::dimension(dim, g.values.len()));
        }
    }
    let mut out = vec![0.0f64; dim];
    for (g, &a) in grads.iter().zip(&w.alpha) {
        let af = a.as_f64();
        for (o, v) in out.iter_mut().zip(&g.values) {
            *o += af * v.as_f64();
        }
    }
    Ok(out.into_iter().map(T::of_f64).collect())
}

//! Dense 2-D grid container and masked grid arithmetic.
//!
//! A [`ScalarGrid`] stores a row-major field of real values together with a
//! unit tag; a [`ValidityMask`] of the same shape marks which pixels carry
//! usable data. The number of valid pixels is written `M` throughout the
//! crate. All operations are pure functions of their inputs.

use crate::error::{Error, Result};
use crate::Scalar;

/// Physical interpretation of grid values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Disparity,
    InverseDepth,
    Depth,
    FlowU,
    FlowV,
    Dimensionless,
}

/// Axis selector for finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Along columns (horizontal).
    X,
    /// Along rows (vertical).
    Y,
}

/// Dense row-major 2-D field of real values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    unit: Unit,
}

impl<T: Scalar> ScalarGrid<T> {
    /// Builds a grid from row-major values. `values.len()` must equal `rows * cols`.
    pub fn new(rows: usize, cols: usize, values: Vec<T>, unit: Unit) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dimension("positive dimensions", format!("{rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::dimension(rows * cols, values.len()));
        }
        Ok(Self { rows, cols, values, unit })
    }

    /// Grid filled with a constant.
    pub fn filled(rows: usize, cols: usize, value: T, unit: Unit) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols], unit)
    }

    /// Builds from a generator called as `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, unit: Unit, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self::new(rows, cols, values, unit)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.values[row * self.cols + col] = value;
    }

    /// Returns a copy with a different unit tag.
    pub fn with_unit(&self, unit: Unit) -> Self {
        let mut out = self.clone();
        out.unit = unit;
        out
    }

    /// Pointwise map preserving shape and unit.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
            unit: self.unit,
        }
    }

    pub fn same_shape<U>(&self, other: &ScalarGrid<U>) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn shape_matches(&self, mask: &ValidityMask) -> Result<()> {
        if self.rows != mask.rows() || self.cols != mask.cols() {
            return Err(Error::dimension(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", mask.rows(), mask.cols()),
            ));
        }
        Ok(())
    }

    /// Checks the finiteness invariant: every pixel marked valid holds a finite value.
    pub fn check_finite(&self, mask: &ValidityMask) -> Result<()> {
        self.shape_matches(mask)?;
        for (i, (&v, &ok)) in self.values.iter().zip(mask.flags()).enumerate() {
            if ok && !v.is_finite() {
                return Err(Error::Parse(format!(
                    "non-finite value {v} at valid pixel index {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-pixel boolean validity mask; `M` is the count of `true` flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMask {
    rows: usize,
    cols: usize,
    flags: Vec<bool>,
}

impl ValidityMask {
    pub fn new(rows: usize, cols: usize, flags: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dimension("positive dimensions", format!("{rows}x{cols}")));
        }
        if flags.len() != rows * cols {
            return Err(Error::dimension(rows * cols, flags.len()));
        }
        Ok(Self { rows, cols, flags })
    }

    pub fn all_valid(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![true; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn flags_mut(&mut self) -> &mut [bool] {
        &mut self.flags
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.flags[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, valid: bool) {
        self.flags[row * self.cols + col] = valid;
    }

    /// Number of valid pixels (the paper's `M`).
    pub fn count_valid(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Pixelwise conjunction with another mask of the same shape.
    pub fn and(&self, other: &ValidityMask) -> Result<ValidityMask> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dimension(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(ValidityMask {
            rows: self.rows,
            cols: self.cols,
            flags: self
                .flags
                .iter()
                .zip(&other.flags)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }
}

/// Masked reduction kinds for [`masked_reduce`].
#[derive(Debug, Clone, Copy)]
pub enum Reduction<T> {
    Sum,
    Mean,
    Min,
    Max,
    Median,
    /// Mean absolute deviation about a given center.
    MeanAbsDevAbout(T),
}

/// Forward difference along an axis.
///
/// Output has the input's shape; value at pixel `p` is `next(p) - p` where
/// `next` is the neighbour along the axis. An output pixel is valid only when
/// both participating pixels are valid and the neighbour exists; invalid
/// outputs are 0. The last column (axis X) or last row (axis Y) is always
/// invalid.
pub fn finite_diff<T: Scalar>(
    grid: &ScalarGrid<T>,
    mask: &ValidityMask,
    axis: Axis,
) -> Result<(ScalarGrid<T>, ValidityMask)> {
    grid.shape_matches(mask)?;
    let (rows, cols) = (grid.rows(), grid.cols());
    let mut values = vec![T::zero(); rows * cols];
    let mut flags = vec![false; rows * cols];
    let (dr, dc) = match axis {
        Axis::X => (0usize, 1usize),
        Axis::Y => (1usize, 0usize),
    };
    for r in 0..rows {
        for c in 0..cols {
            let (nr, nc) = (r + dr, c + dc);
            if nr >= rows || nc >= cols {
                continue;
            }
            if mask.get(r, c) && mask.get(nr, nc) {
                values[r * cols + c] = grid.get(nr, nc) - grid.get(r, c);
                flags[r * cols + c] = true;
            }
        }
    }
    Ok((
        ScalarGrid::new(rows, cols, values, grid.unit())?,
        ValidityMask::new(rows, cols, flags)?,
    ))
}

/// Strided decimation keeping pixels at positions `(stride*i, stride*j)`.
///
/// Output dimensions use ceiling semantics: `ceil(n / stride)`. The mask is
/// decimated identically. `stride == 1` is the identity.
pub fn subsample<T: Scalar>(
    grid: &ScalarGrid<T>,
    mask: &ValidityMask,
    stride: usize,
) -> Result<(ScalarGrid<T>, ValidityMask)> {
    grid.shape_matches(mask)?;
    if stride == 0 {
        return Err(Error::Config("subsample stride must be >= 1".into()));
    }
    if stride > grid.rows() && stride > grid.cols() {
        return Err(Error::dimension(
            format!("stride <= max({}, {})", grid.rows(), grid.cols()),
            stride,
        ));
    }
    let rows = grid.rows().div_ceil(stride);
    let cols = grid.cols().div_ceil(stride);
    let mut values = Vec::with_capacity(rows * cols);
    let mut flags = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            values.push(grid.get(r * stride, c * stride));
            flags.push(mask.get(r * stride, c * stride));
        }
    }
    Ok((
        ScalarGrid::new(rows, cols, values, grid.unit())?,
        ValidityMask::new(rows, cols, flags)?,
    ))
}

/// Reduction over valid pixels only.
///
/// `Sum` of an empty mask is 0 by convention; every other kind requires at
/// least one valid pixel. The median of an even count is the midpoint of the
/// two central values.
pub fn masked_reduce<T: Scalar>(
    grid: &ScalarGrid<T>,
    mask: &ValidityMask,
    kind: Reduction<T>,
) -> Result<T> {
    grid.shape_matches(mask)?;
    let valid = || {
        grid.values()
            .iter()
            .zip(mask.flags())
            .filter(|(_, &ok)| ok)
            .map(|(&v, _)| v)
    };
    let m = mask.count_valid();
    match kind {
        Reduction::Sum => Ok(T::of_f64(valid().map(|v| v.as_f64()).sum())),
        Reduction::Mean => {
            if m == 0 {
                return Err(Error::EmptyMask { op: "mean" });
            }
            Ok(T::of_f64(valid().map(|v| v.as_f64()).sum::<f64>() / m as f64))
        }
        Reduction::Min => valid()
            .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.min(v))))
            .ok_or(Error::EmptyMask { op: "min" }),
        Reduction::Max => valid()
            .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.max(v))))
            .ok_or(Error::EmptyMask { op: "max" }),
        Reduction::Median => {
            if m == 0 {
                return Err(Error::EmptyMask { op: "median" });
            }
            let mut vals: Vec<T> = valid().collect();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            let mid = vals.len() / 2;
            if vals.len() % 2 == 1 {
                Ok(vals[mid])
            } else {
                Ok((vals[mid - 1] + vals[mid]) / T::of_f64(2.0))
            }
        }
        Reduction::MeanAbsDevAbout(center) => {
            if m == 0 {
                return Err(Error::EmptyMask { op: "mean_abs_dev" });
            }
            let c = center.as_f64();
            Ok(T::of_f64(
                valid().map(|v| (v.as_f64() - c).abs()).sum::<f64>() / m as f64,
            ))
        }
    }
}

//! Periodic lattice geometry, centered finite-difference stencils and quadrature.
//!
//! Lattices are stored row-major: the last axis varies fastest, so on a 2D grid
//! the flat index of `(i0, i1)` is `i0 * n[1] + i1`.

use std::sync::Arc;

use crate::error::{LabError, Result};

/// Stencil accuracy for centered differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilOrder {
    Second,
    Fourth,
}

impl StencilOrder {
    pub fn from_int(order: u32) -> Result<Self> {
        match order {
            2 => Ok(StencilOrder::Second),
            4 => Ok(StencilOrder::Fourth),
            other => Err(LabError::Config(format!("stencil order must be 2 or 4, got {other}"))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            StencilOrder::Second => 2,
            StencilOrder::Fourth => 4,
        }
    }
}

/// A periodic rectangular lattice in one or two space dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: Vec<usize>,
    length: Vec<f64>,
    origin: Vec<f64>,
    dx: Vec<f64>,
}

impl Grid {
    /// Grid with the symmetric default origin `-length/2` on every axis.
    pub fn new(n: Vec<usize>, length: Vec<f64>) -> Result<Arc<Grid>> {
        let origin = length.iter().map(|l| -0.5 * l).collect();
        Grid::with_origin(n, length, origin)
    }

    pub fn with_origin(n: Vec<usize>, length: Vec<f64>, origin: Vec<f64>) -> Result<Arc<Grid>> {
        let m = n.len();
        if !(1..=2).contains(&m) {
            return Err(LabError::Config(format!("spatial dimension must be 1 or 2, got {m}")));
        }
        if length.len() != m || origin.len() != m {
            return Err(LabError::Config(format!(
                "axis lists disagree: n has {m} entries, length {}, origin {}",
                length.len(),
                origin.len()
            )));
        }
        for (axis, &k) in n.iter().enumerate() {
            if k < 8 || k % 2 != 0 {
                return Err(LabError::Config(format!(
                    "axis {axis}: n must be even and >= 8, got {k}"
                )));
            }
        }
        for (axis, &l) in length.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(LabError::Config(format!("axis {axis}: length must be positive, got {l}")));
            }
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(LabError::Config("origin must be finite".into()));
        }
        let dx = length.iter().zip(&n).map(|(l, &k)| l / k as f64).collect();
        Ok(Arc::new(Grid {
            n,
            length,
            origin,
            dx,
        }))
    }

    pub fn m(&self) -> usize {
        self.n.len()
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn length(&self) -> &[f64] {
        &self.length
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn min_dx(&self) -> f64 {
        self.dx.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.length.iter().product()
    }

    /// Distance between consecutive flat indices along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.n[axis + 1..].iter().product()
    }

    /// Index along `axis` of the point with the given flat index.
    #[inline]
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.n[axis]
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.n)
            .fold(0, |acc, (&i, &k)| acc * k + (i % k))
    }

    /// Coordinate of lattice index `i` along `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.dx[axis]
    }

    /// Coordinate used as weight in first-moment integrals.
    ///
    /// The coordinate itself is not periodic. Index 0 sits on the seam, which is
    /// both ends of the closed box; it carries the trapezoid average of the two
    /// end coordinates, `origin + length/2`. Every other index uses `coord`.
    #[inline]
    pub fn moment_coord(&self, axis: usize, i: usize) -> f64 {
        if i == 0 {
            self.origin[axis] + 0.5 * self.length[axis]
        } else {
            self.coord(axis, i)
        }
    }

    /// Same extents, doubled resolution on every axis.
    pub fn refine(&self) -> Arc<Grid> {
        Arc::new(Grid {
            n: self.n.iter().map(|k| 2 * k).collect(),
            length: self.length.clone(),
            origin: self.origin.clone(),
            dx: self.length.iter().zip(&self.n).map(|(l, &k)| l / (2 * k) as f64).collect(),
        })
    }

    #[inline]
    pub(crate) fn neighbor(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let stride = self.stride(axis);
        let k = self.n[axis] as isize;
        let i = ((flat / stride) % self.n[axis]) as isize;
        let j = (i + offset).rem_euclid(k);
        (flat as isize + (j - i) * stride as isize) as usize
    }
}

/// Real values, one per lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarLattice {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarLattice {
    /// Wraps `values`, rejecting wrong lengths and non-finite entries.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::NonFinite {
                what: "lattice",
                index,
            });
        }
        Ok(ScalarLattice { grid, values })
    }

    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarLattice { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Result<Self> {
        let n = grid.len();
        ScalarLattice::new(grid, vec![value; n])
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        ScalarLattice::from_raw(grid, vec![0.0; n])
    }

    /// Samples `f` at the lattice coordinates.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut x = vec![0.0; grid.m()];
        let values = (0..grid.len())
            .map(|flat| {
                for (axis, xa) in x.iter_mut().enumerate() {
                    *xa = grid.coord(axis, grid.axis_index(flat, axis));
                }
                f(&x)
            })
            .collect();
        ScalarLattice::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First index holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarLattice {
        ScalarLattice::from_raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarLattice, f: impl Fn(f64, f64) -> f64) -> ScalarLattice {
        debug_assert_eq!(self.values.len(), other.values.len());
        ScalarLattice::from_raw(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &ScalarLattice) -> ScalarLattice {
        self.zip_map(other, |a, b| a + factor * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Values cyclically shifted by `k` along `axis`: `out[i] = self[i - k]`.
    pub fn shifted(&self, axis: usize, k: isize) -> ScalarLattice {
        let g = &self.grid;
        let mut out = vec![0.0; self.values.len()];
        for (flat, v) in self.values.iter().enumerate() {
            out[g.neighbor(flat, axis, k)] = *v;
        }
        ScalarLattice::from_raw(g.clone(), out)
    }
}

/// Centered periodic first derivative along `axis`.
pub fn deriv1(f: &ScalarLattice, axis: usize, order: StencilOrder) -> ScalarLattice {
    let g = f.grid();
    assert!(axis < g.m(), "axis {axis} out of range for m={}", g.m());
    let v = f.values();
    let h = g.dx()[axis];
    let out = (0..v.len())
        .map(|i| {
            let p1 = v[g.neighbor(i, axis, 1)];
            let m1 = v[g.neighbor(i, axis, -1)];
            match order {
                StencilOrder::Second => (p1 - m1) / (2.0 * h),
                StencilOrder::Fourth => {
                    let p2 = v[g.neighbor(i, axis, 2)];
                    let m2 = v[g.neighbor(i, axis, -2)];
                    // Differences first so that constants give an exact zero.
                    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
                }
            }
        })
        .collect();
    ScalarLattice::from_raw(g.clone(), out)
}

/// Second derivative: the compact stencil when `axis1 == axis2`, otherwise the
/// composition of two first derivatives.
pub fn deriv2(f: &ScalarLattice, axis1: usize, axis2: usize, order: StencilOrder) -> ScalarLattice {
    let g = f.grid();
    assert!(axis1 < g.m() && axis2 < g.m(), "axes out of range");
    if axis1 != axis2 {
        return deriv1(&deriv1(f, axis1, order), axis2, order);
    }
    let v = f.values();
    let h = g.dx()[axis1];
    let out = (0..v.len())
        .map(|i| {
            let c = v[i];
            let p1 = v[g.neighbor(i, axis1, 1)];
            let m1 = v[g.neighbor(i, axis1, -1)];
            match order {
                StencilOrder::Second => ((p1 - c) + (m1 - c)) / (h * h),
                StencilOrder::Fourth => {
                    let p2 = v[g.neighbor(i, axis1, 2)];
                    let m2 = v[g.neighbor(i, axis1, -2)];
                    (16.0 * (p1 + m1) - (p2 + m2) - 30.0 * c) / (12.0 * h * h)
                }
            }
        })
        .collect();
    ScalarLattice::from_raw(g.clone(), out)
}

/// Sum whose result depends only on the multiset of inputs: values are sorted
/// by total order and accumulated with Neumaier compensation.
pub fn stable_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in sorted {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Riemann sum of `f` over the periodic box.
pub fn integrate(f: &ScalarLattice) -> f64 {
    stable_sum(f.values()) * f.grid().cell_volume()
}

/// Riemann sum of `weight(flat) * f`.
pub fn integrate_weighted(f: &ScalarLattice, weight: impl Fn(usize) -> f64) -> f64 {
    let prod: Vec<f64> = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| weight(i) * v)
        .collect();
    stable_sum(&prod) * f.grid().cell_volume()
}

pub fn refine(g: &Grid) -> Arc<Grid> {
    g.refine()
}

/// Observed order for a refinement ratio of 2.
pub fn convergence_order(coarse_err: f64, fine_err: f64) -> Result<f64> {
    if !(coarse_err > 0.0) {
        return Err(LabError::NonPositive {
            what: "coarse error",
            value: coarse_err,
        });
    }
    if !(fine_err > 0.0) {
        return Err(LabError::NonPositive {
            what: "fine error",
            value: fine_err,
        });
    }
    Ok((coarse_err / fine_err).log2())
}

//! Pointwise Noether currents of the ambient Poincaré group and the induced
//! geometry of the world-volume graph.
//!
//! With `s = √Γ`:
//!
//! ```text
//! H^{αβ}    = z^α z^β / s + η^{αβ} s
//! H^{α,M+1} = z^α / s
//! ```
//!
//! and the contraction identity `z_α H^{αβ} = H^{β,M+1}` holds for any gradient.

use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::evolve::rhs;
use crate::field::{gradients_guarded, FieldState, GradientField};
use crate::grid::{deriv1, Grid, ScalarLattice, StencilOrder};

/// Symmetric `d × d` block of lattices, one stored lattice per unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBlock {
    dim: usize,
    comps: Vec<ScalarLattice>,
}

impl SymBlock {
    fn slot(dim: usize, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        a * dim - a * a.saturating_sub(1) / 2 + (b - a)
    }

    fn build(grid: &Arc<Grid>, dim: usize, f: impl Fn(usize, usize, usize) -> f64) -> SymBlock {
        let mut comps = Vec::with_capacity(dim * (dim + 1) / 2);
        for a in 0..dim {
            for b in a..dim {
                let vals = (0..grid.len()).map(|i| f(a, b, i)).collect();
                comps.push(ScalarLattice::from_raw(grid.clone(), vals));
            }
        }
        SymBlock { dim, comps }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, a: usize, b: usize) -> &ScalarLattice {
        &self.comps[Self::slot(self.dim, a, b)]
    }

    #[inline]
    pub fn at(&self, a: usize, b: usize, i: usize) -> f64 {
        self.get(a, b).values()[i]
    }

    pub(crate) fn get_mut(&mut self, a: usize, b: usize) -> &mut ScalarLattice {
        let k = Self::slot(self.dim, a, b);
        &mut self.comps[k]
    }
}

#[inline]
fn eta(a: usize, b: usize) -> f64 {
    match (a, b) {
        (0, 0) => 1.0,
        (a, b) if a == b => -1.0,
        _ => 0.0,
    }
}

/// The currents `H^{αβ}` (world-volume block) and `H^{α,M+1}` on a slice.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub t: f64,
    /// `H^{αβ}`, α, β = 0..=M.
    pub h: SymBlock,
    /// `H^{α,M+1} = H^{M+1,α}`, α = 0..=M.
    pub hlast: Vec<ScalarLattice>,
    pub gamma: ScalarLattice,
}

impl StressField {
    pub fn grid(&self) -> &Arc<Grid> {
        self.gamma.grid()
    }

    pub fn m(&self) -> usize {
        self.h.dim() - 1
    }

    /// Current component `H^{μν}` for `μ, ν ≤ M + 1`, except `(M+1, M+1)`.
    pub fn component(&self, mu: usize, nu: usize) -> &ScalarLattice {
        let last = self.m() + 1;
        match (mu == last, nu == last) {
            (false, false) => self.h.get(mu, nu),
            (true, false) => &self.hlast[nu],
            (false, true) => &self.hlast[mu],
            (true, true) => panic!("H^{{M+1,M+1}} is not part of the current set"),
        }
    }
}

/// `L = −√Γ`.
pub fn lagrangian_density(gf: &GradientField) -> ScalarLattice {
    gf.sqrt_gamma.map(|s| -s)
}

pub fn stress_tensor(gf: &GradientField) -> StressField {
    let grid = gf.grid().clone();
    let dim = gf.m() + 1;
    let s = gf.sqrt_gamma.values();
    let h = SymBlock::build(&grid, dim, |a, b, i| {
        gf.upper(a, i) * gf.upper(b, i) / s[i] + eta(a, b) * s[i]
    });
    let hlast = (0..dim)
        .map(|a| {
            let vals = (0..grid.len()).map(|i| gf.upper(a, i) / s[i]).collect();
            ScalarLattice::from_raw(grid.clone(), vals)
        })
        .collect();
    StressField {
        t: gf.t,
        h,
        hlast,
        gamma: gf.gamma.clone(),
    }
}

/// Pointwise residuals `z_α H^{αβ} − H^{β,M+1}`, one lattice per `β`.
pub fn identity_defect(gf: &GradientField, sf: &StressField) -> Vec<ScalarLattice> {
    let dim = gf.m() + 1;
    (0..dim)
        .map(|b| {
            let vals = (0..gf.grid().len())
                .map(|i| {
                    let mut acc = 0.0;
                    for a in 0..dim {
                        acc += gf.lower(a, i) * sf.h.at(a, b, i);
                    }
                    acc - sf.hlast[b].values()[i]
                })
                .collect();
            ScalarLattice::from_raw(gf.grid().clone(), vals)
        })
        .collect()
}

/// `max |z_α H^{αβ} − H^{β,M+1}|` over the lattice and `β`.
pub fn identity_residual(gf: &GradientField, sf: &StressField) -> f64 {
    identity_defect(gf, sf)
        .iter()
        .map(ScalarLattice::max_abs)
        .fold(0.0, f64::max)
}

/// Induced metric `g_{αβ} = η_{αβ} − z_α z_β` with determinant and inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedMetric {
    pub g: SymBlock,
    pub det: ScalarLattice,
    pub ginv: SymBlock,
}

pub fn induced_metric(gf: &GradientField) -> Result<InducedMetric> {
    let grid = gf.grid().clone();
    let dim = gf.m() + 1;
    let g = SymBlock::build(&grid, dim, |a, b, i| eta(a, b) - gf.lower(a, i) * gf.lower(b, i));
    let mut det = vec![0.0; grid.len()];
    let mut ginv = SymBlock::build(&grid, dim, |_, _, _| 0.0);
    let mut inv_vals = vec![vec![0.0; grid.len()]; dim * (dim + 1) / 2];
    for i in 0..grid.len() {
        let (d, inv) = match dim {
            2 => {
                let (a, b, c) = (g.at(0, 0, i), g.at(0, 1, i), g.at(1, 1, i));
                let d = a * c - b * b;
                (d, vec![c / d, -b / d, a / d])
            }
            3 => {
                let m = |r: usize, s: usize| g.at(r, s, i);
                let c00 = m(1, 1) * m(2, 2) - m(1, 2) * m(1, 2);
                let c01 = m(1, 2) * m(0, 2) - m(0, 1) * m(2, 2);
                let c02 = m(0, 1) * m(1, 2) - m(1, 1) * m(0, 2);
                let c11 = m(0, 0) * m(2, 2) - m(0, 2) * m(0, 2);
                let c12 = m(0, 1) * m(0, 2) - m(0, 0) * m(1, 2);
                let c22 = m(0, 0) * m(1, 1) - m(0, 1) * m(0, 1);
                let d = m(0, 0) * c00 + m(0, 1) * c01 + m(0, 2) * c02;
                (d, vec![c00 / d, c01 / d, c02 / d, c11 / d, c12 / d, c22 / d])
            }
            _ => unreachable!("grid dimension is 1 or 2"),
        };
        if !(d.abs() >= 1e-14) {
            return Err(LabError::SingularMetric { index: i, det: d });
        }
        det[i] = d;
        for (slot, v) in inv.into_iter().enumerate() {
            inv_vals[slot][i] = v;
        }
    }
    let mut slot = 0;
    for a in 0..dim {
        for b in a..dim {
            *ginv.get_mut(a, b) = ScalarLattice::from_raw(grid.clone(), std::mem::take(&mut inv_vals[slot]));
            slot += 1;
        }
    }
    Ok(InducedMetric {
        g,
        det: ScalarLattice::from_raw(grid, det),
        ginv,
    })
}

/// `max |H^{αβ} − √|det g| g^{αβ}|` over the lattice and `α, β ≤ M`.
pub fn harmonic_identity_residual(_gf: &GradientField, sf: &StressField, im: &InducedMetric) -> f64 {
    let dim = sf.h.dim();
    let mut worst = 0.0_f64;
    for a in 0..dim {
        for b in a..dim {
            for i in 0..sf.grid().len() {
                let rhs = im.det.values()[i].abs().sqrt() * im.ginv.at(a, b, i);
                worst = worst.max((sf.h.at(a, b, i) - rhs).abs());
            }
        }
    }
    worst
}

/// Discrete `∂_α H^{α,M+1}` on one slice, with the time derivative taken from
/// the evolution right-hand side. Vanishes (up to truncation) exactly when the
/// slice solves the field equation, i.e. when the mean curvature vanishes.
pub fn mean_curvature_defect(s: &FieldState, order: StencilOrder, gamma_min: f64) -> Result<ScalarLattice> {
    let gf = gradients_guarded(s, order, gamma_min)?;
    let (_, dp) = rhs(s, order, gamma_min)?;
    let grid = s.grid().clone();
    let m = s.m();
    let dpx: Vec<ScalarLattice> = (0..m).map(|a| deriv1(&s.p, a, order)).collect();
    let mut out = vec![0.0; grid.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let p = s.p.values()[i];
        let g = gf.gamma.values()[i];
        let sg = gf.sqrt_gamma.values()[i];
        let pt = dp.values()[i];
        let mut gamma_t = -2.0 * p * pt;
        for a in 0..m {
            gamma_t += 2.0 * gf.zx[a].values()[i] * dpx[a].values()[i];
        }
        *o = pt / sg - p * gamma_t / (2.0 * g * sg);
    }
    for a in 0..m {
        let flux = gf.zx[a].zip_map(&gf.sqrt_gamma, |d, sg| -d / sg);
        let div = deriv1(&flux, a, order);
        for (o, d) in out.iter_mut().zip(div.values()) {
            *o += d;
        }
    }
    Ok(ScalarLattice::from_raw(grid, out))
}

pub fn mean_curvature_residual(s: &FieldState, order: StencilOrder) -> Result<f64> {
    Ok(mean_curvature_defect(s, order, crate::field::DEFAULT_GAMMA_MIN)?.max_abs())
}

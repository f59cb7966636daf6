//! Integrated Poincaré charges on a slice and their time behaviour.
//!
//! Embedding coordinates are `x^0 = t`, `x^1..x^M` the lattice coordinates and
//! `x^{M+1} = z`. The charges are
//!
//! ```text
//! P^μ    = ∫ H^{μ0}
//! M^{μν} = ∫ (x^μ H^{ν0} − x^ν H^{μ0})
//! ```
//!
//! and the energy moments `∫ x^μ H^{00}` grow linearly, `C^μ + t P^μ`.
//!
//! Densities are not vacuum-subtracted: `H^{00} = 1` in vacuum. With the default
//! symmetric origin the vacuum part of `∫ x^i H^{00}` cancels; on shifted domains
//! it contributes a constant offset to the spatial moments.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::field::{gradients_guarded, FieldState, DEFAULT_GAMMA_MIN};
use crate::grid::{integrate, integrate_weighted, ScalarLattice, StencilOrder};
use crate::stress::{stress_tensor, StressField};

pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-10;
/// Width of the boundary band checked for compact support, in cells.
pub const BOUNDARY_MARGIN: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargeSet {
    pub t: f64,
    /// `P^μ`, μ = 0..=M+1.
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    /// Antisymmetric `M^{μν}`.
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    /// `∫ x^μ H^{00}`.
    pub moments: Vec<f64>,
    /// Whether the slice is at vacuum near the boundary, which x-weighted charges require.
    pub compact_support_ok: bool,
}

impl ChargeSet {
    pub fn m(&self) -> usize {
        self.p.len() - 2
    }
}

/// Embedding coordinate `x^μ` at a lattice point, with the seam convention of
/// [`crate::grid::Grid::moment_coord`] for spatial axes.
pub fn embedding_coord(s: &FieldState, mu: usize, flat: usize) -> f64 {
    let g = s.grid();
    let m = g.m();
    if mu == 0 {
        s.t
    } else if mu <= m {
        g.moment_coord(mu - 1, g.axis_index(flat, mu - 1))
    } else {
        s.height(flat)
    }
}

/// True when `z` and `p` are at vacuum (within `tol`) in the boundary band.
pub fn has_compact_support(s: &FieldState, tol: f64) -> bool {
    if s.has_slope() {
        return false;
    }
    let g = s.grid();
    let z_ref = s.z.values()[0];
    (0..g.len()).all(|i| {
        let near = (0..g.m()).any(|a| {
            let k = g.axis_index(i, a);
            k < BOUNDARY_MARGIN || k + BOUNDARY_MARGIN >= g.n()[a]
        });
        !near || ((s.z.values()[i] - z_ref).abs() < tol && s.p.values()[i].abs() < tol)
    })
}

/// Charge densities `H^{μ0}` for μ = 0..=M+1.
pub fn charge_densities(sf: &StressField) -> Vec<ScalarLattice> {
    let m = sf.m();
    let mut d: Vec<ScalarLattice> = (0..=m).map(|mu| sf.h.get(mu, 0).clone()).collect();
    d.push(sf.hlast[0].clone());
    d
}

pub fn charges(s: &FieldState) -> Result<ChargeSet> {
    charges_with(s, DEFAULT_GAMMA_MIN, DEFAULT_BOUNDARY_TOL)
}

pub fn charges_with(s: &FieldState, gamma_min: f64, boundary_tol: f64) -> Result<ChargeSet> {
    let gf = gradients_guarded(s, StencilOrder::Fourth, gamma_min)?;
    let sf = stress_tensor(&gf);
    Ok(charges_from_stress(s, &sf, boundary_tol))
}

pub fn charges_from_stress(s: &FieldState, sf: &StressField, boundary_tol: f64) -> ChargeSet {
    let m = s.m();
    let d = m + 2;
    let dens = charge_densities(sf);
    let p: Vec<f64> = dens.iter().map(integrate).collect();
    let mut l = vec![vec![0.0; d]; d];
    for mu in 0..d {
        for nu in mu + 1..d {
            let vals = (0..s.grid().len())
                .map(|i| {
                    embedding_coord(s, mu, i) * dens[nu].values()[i]
                        - embedding_coord(s, nu, i) * dens[mu].values()[i]
                })
                .collect();
            let v = integrate(&ScalarLattice::from_raw(s.grid().clone(), vals));
            l[mu][nu] = v;
            l[nu][mu] = -v;
        }
    }
    let mut moments = vec![s.t * p[0]];
    for mu in 1..d {
        moments.push(integrate_weighted(&dens[0], |i| embedding_coord(s, mu, i)));
    }
    ChargeSet {
        t: s.t,
        p,
        l,
        moments,
        compact_support_ok: has_compact_support(s, boundary_tol),
    }
}

/// Energy moments and momenta per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub mus: Vec<usize>,
    pub t: Vec<f64>,
    /// `moments[k][j]`: `∫ x^{mus[j]} H^{00}` at snapshot `k`.
    pub moments: Vec<Vec<f64>>,
    /// `momenta[k][j]`: quadrature `P^{mus[j]}` at snapshot `k`.
    pub momenta: Vec<Vec<f64>>,
}

/// Moments `∫ x^μ H^{00}` along a run.
///
/// Spatial `μ` requires compact support at every snapshot.
pub fn moment_series(run: &[FieldState], mus: &[usize]) -> Result<MomentSeries> {
    moment_series_with(run, mus, DEFAULT_GAMMA_MIN, DEFAULT_BOUNDARY_TOL)
}

pub fn moment_series_with(run: &[FieldState], mus: &[usize], gamma_min: f64, tol: f64) -> Result<MomentSeries> {
    let first = run.first().ok_or(LabError::InsufficientSamples { needed: 1, got: 0 })?;
    let m = first.m();
    if let Some(&bad) = mus.iter().find(|&&mu| mu > m + 1) {
        return Err(LabError::Config(format!("moment index {bad} out of range for m={m}")));
    }
    let mut out = MomentSeries {
        mus: mus.to_vec(),
        t: Vec::with_capacity(run.len()),
        moments: Vec::with_capacity(run.len()),
        momenta: Vec::with_capacity(run.len()),
    };
    for s in run {
        if s.grid() != first.grid() {
            return Err(LabError::GridMismatch("snapshots live on different grids".into()));
        }
        let cs = charges_with(s, gamma_min, tol)?;
        if !cs.compact_support_ok {
            if let Some(mu) = mus.iter().find(|&&mu| (1..=m).contains(&mu)) {
                return Err(LabError::Support(format!(
                    "spatial moment {mu} requested but the slice at t={} reaches the boundary",
                    s.t
                )));
            }
        }
        out.t.push(s.t);
        out.moments.push(mus.iter().map(|&mu| cs.moments[mu]).collect());
        out.momenta.push(mus.iter().map(|&mu| cs.p[mu]).collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentFit {
    pub mu: usize,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "P_fit")]
    pub p_fit: f64,
    pub max_residual: f64,
    /// `|P_fit − P^μ|` with `P^μ` the time-averaged quadrature value.
    pub slope_mismatch: f64,
    /// Whether the moment is monotone over the samples (reported, not required).
    pub monotone: bool,
}

/// Least-squares line through `(t, moment)` for one `μ` of the series.
pub fn fit_moment_linearity(series: &MomentSeries, mu: usize) -> Result<MomentFit> {
    let j = series
        .mus
        .iter()
        .position(|&x| x == mu)
        .ok_or_else(|| LabError::Config(format!("moment {mu} not present in series")))?;
    let ys: Vec<f64> = series.moments.iter().map(|row| row[j]).collect();
    let (c, slope, max_residual) = fit_line(&series.t, &ys)?;
    let p_mean = series.momenta.iter().map(|row| row[j]).sum::<f64>() / series.momenta.len() as f64;
    let monotone = ys.windows(2).all(|w| w[1] >= w[0]) || ys.windows(2).all(|w| w[1] <= w[0]);
    Ok(MomentFit {
        mu,
        c,
        p_fit: slope,
        max_residual,
        slope_mismatch: (slope - p_mean).abs(),
        monotone,
    })
}

/// Ordinary least squares `y ≈ c + slope·t`; returns `(c, slope, max |residual|)`.
pub fn fit_line(ts: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = ts.len();
    if n < 3 || ys.len() != n {
        return Err(LabError::InsufficientSamples { needed: 3, got: n.min(ys.len()) });
    }
    let tm = ts.iter().sum::<f64>() / n as f64;
    let ym = ys.iter().sum::<f64>() / n as f64;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
    }
    if stt == 0.0 {
        return Err(LabError::InsufficientSamples { needed: 3, got: 1 });
    }
    let slope = sty / stt;
    let c = ym - slope * tm;
    let max_residual = ts
        .iter()
        .zip(ys)
        .map(|(t, y)| (y - (c + slope * t)).abs())
        .fold(0.0, f64::max);
    Ok((c, slope, max_residual))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargeDrift {
    /// Per `μ`: `max_t |P^μ(t) − P^μ(0)| / max(1, |P^μ(0)|)`.
    pub p: Vec<f64>,
    /// Same for `M^{μν}`.
    pub l: Vec<Vec<f64>>,
}

pub fn charge_drift(run: &[ChargeSet]) -> ChargeDrift {
    let Some(first) = run.first() else {
        return ChargeDrift { p: Vec::new(), l: Vec::new() };
    };
    let rel = |now: f64, init: f64| (now - init).abs() / init.abs().max(1.0);
    let d = first.p.len();
    let mut out = ChargeDrift {
        p: vec![0.0; d],
        l: vec![vec![0.0; d]; d],
    };
    for cs in run {
        for mu in 0..d {
            out.p[mu] = out.p[mu].max(rel(cs.p[mu], first.p[mu]));
            for nu in 0..d {
                out.l[mu][nu] = out.l[mu][nu].max(rel(cs.l[mu][nu], first.l[mu][nu]));
            }
        }
    }
    out
}

//! First-order formulation for one space dimension.
//!
//! In the derivative variables `p = z_t`, `q = z_x` the field equation and the
//! compatibility condition `q_t = p_x` form the quasilinear system
//!
//! ```text
//! (1 + q²) p_t − 2pq p_x − (1 − p²) q_x = 0
//! q_t − p_x = 0
//! ```
//!
//! with characteristic speeds `λ± = (−pq ± √Γ)/(1 + q²)`. Each speed is constant
//! along the other family: `r+ = λ−` is carried at speed `λ+` and `r− = λ+` at
//! speed `λ−`, so both fields are linearly degenerate.
//!
//! The conservative solver evolves three densities of the current conservation
//! laws, all periodic and free of `x` and `z`:
//!
//! | density               | flux                    |
//! |-----------------------|-------------------------|
//! | `q`                   | `−p`                    |
//! | `u = H^{00}`          | `H^{10} = −pq/√Γ`       |
//! | `w = H^{0,2} = p/√Γ`  | `H^{1,2} = −q/√Γ`       |
//!
//! The primitive state is recovered from `(q, w)`, which is an explicit,
//! sign-preserving map with no realizability constraint:
//! `Γ = (1 + q²)/(1 + w²)`, `p = w√Γ`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::evolve::{simulate_with, RunOptions, Scheme, SolverConfig};
use crate::field::FieldState;
use crate::grid::{deriv1, Grid, ScalarLattice, StencilOrder};

/// Below this `|p|` the sign of `p` is carried over from the previous step.
pub const SIGN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveState1D {
    pub t: f64,
    pub p: ScalarLattice,
    pub q: ScalarLattice,
}

impl PrimitiveState1D {
    pub fn new(t: f64, p: ScalarLattice, q: ScalarLattice) -> Result<Self> {
        if p.grid() != q.grid() {
            return Err(LabError::GridMismatch("p and q live on different grids".into()));
        }
        if p.grid().m() != 1 {
            return Err(LabError::Config("first-order formulation requires m=1".into()));
        }
        Ok(PrimitiveState1D { t, p, q })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.p.grid()
    }

    pub fn gamma(&self) -> ScalarLattice {
        self.p.zip_map(&self.q, |p, q| 1.0 - p * p + q * q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservedState1D {
    pub t: f64,
    pub q: ScalarLattice,
    /// Energy density `H^{00} = (1 + q²)/√Γ`.
    pub u: ScalarLattice,
    /// Height-current density `H^{0,2} = p/√Γ`.
    pub w: ScalarLattice,
    /// Sign of `p` per cell.
    pub sigma: Vec<i8>,
}

impl ConservedState1D {
    pub fn grid(&self) -> &Arc<Grid> {
        self.q.grid()
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// `(p, q = ∂_x z)` of a one-dimensional slice.
pub fn to_primitive(s: &FieldState, order: StencilOrder) -> Result<PrimitiveState1D> {
    if s.m() != 1 {
        return Err(LabError::Config(format!("first-order formulation requires m=1, got m={}", s.m())));
    }
    PrimitiveState1D::new(s.t, s.p.clone(), s.spatial_gradient(0, order))
}

fn check_gamma(ps: &PrimitiveState1D, guard: f64) -> Result<()> {
    let gamma = ps.gamma();
    if let Some(index) = gamma.values().iter().position(|&g| !(g > guard)) {
        return Err(LabError::DegenerateEvolution {
            t: ps.t,
            index,
            gamma: gamma.values()[index],
            guard,
        });
    }
    Ok(())
}

pub fn conserved_from_primitive(ps: &PrimitiveState1D) -> Result<ConservedState1D> {
    check_gamma(ps, 0.0)?;
    let sg = ps.gamma().map(f64::sqrt);
    Ok(ConservedState1D {
        t: ps.t,
        q: ps.q.clone(),
        u: ps.q.zip_map(&sg, |q, s| (1.0 + q * q) / s),
        w: ps.p.zip_map(&sg, |p, s| p / s),
        sigma: ps.p.values().iter().map(|&p| sign(p)).collect(),
    })
}

/// Inverts `(q, u, σ) ↦ p`: with `s = (1 + q²)/u = √Γ`, `p = σ √(u s − s²)`.
///
/// Loses precision as `|p| → 0`, where `u` depends on `p` only quadratically.
pub fn primitive_from_energy(q: f64, u: f64, sigma: i8) -> std::result::Result<f64, f64> {
    let bound = (1.0 + q * q).sqrt();
    if !(u >= bound * (1.0 - 1e-12)) {
        return Err(bound);
    }
    let s = (1.0 + q * q) / u;
    let p2 = (u * s - s * s).max(0.0);
    Ok(sigma as f64 * p2.sqrt())
}

/// Primitive state from the energy density and tracked sign.
pub fn primitive_from_conserved(cs: &ConservedState1D) -> Result<PrimitiveState1D> {
    let mut p = Vec::with_capacity(cs.q.len());
    for (i, (&q, &u)) in cs.q.values().iter().zip(cs.u.values()).enumerate() {
        match primitive_from_energy(q, u, cs.sigma[i]) {
            Ok(v) => p.push(v),
            Err(bound) => return Err(LabError::Realizability { index: i, u, bound }),
        }
    }
    PrimitiveState1D::new(cs.t, ScalarLattice::new(cs.grid().clone(), p)?, cs.q.clone())
}

/// `p` from `(q, w)`.
#[inline]
pub fn p_from_current(q: f64, w: f64) -> f64 {
    w * ((1.0 + q * q) / (1.0 + w * w)).sqrt()
}

/// Primitive state from the height-current density (the solver's recovery map).
pub fn recover_primitive(cs: &ConservedState1D) -> PrimitiveState1D {
    PrimitiveState1D {
        t: cs.t,
        p: cs.q.zip_map(&cs.w, p_from_current),
        q: cs.q.clone(),
    }
}

/// `(λ+, λ−)` at one point.
#[inline]
pub fn speeds(p: f64, q: f64) -> (f64, f64) {
    let a = 1.0 + q * q;
    let sg = (1.0 - p * p + q * q).max(0.0).sqrt();
    ((-p * q + sg) / a, (-p * q - sg) / a)
}

/// Matrix `A` of the quasilinear form `U_t + A U_x = 0`, `U = (p, q)`.
pub fn quasilinear_matrix(p: f64, q: f64) -> [[f64; 2]; 2] {
    let a = 1.0 + q * q;
    [[-2.0 * p * q / a, -(1.0 - p * p) / a], [-1.0, 0.0]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharSpeeds {
    pub lambda_plus: ScalarLattice,
    pub lambda_minus: ScalarLattice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicData {
    pub lambda_plus: ScalarLattice,
    pub lambda_minus: ScalarLattice,
    /// Carried at speed `λ+`; equals `λ−`.
    pub r_plus: ScalarLattice,
    /// Carried at speed `λ−`; equals `λ+`.
    pub r_minus: ScalarLattice,
}

pub fn char_speeds(ps: &PrimitiveState1D) -> CharSpeeds {
    CharSpeeds {
        lambda_plus: ps.p.zip_map(&ps.q, |p, q| speeds(p, q).0),
        lambda_minus: ps.p.zip_map(&ps.q, |p, q| speeds(p, q).1),
    }
}

pub fn riemann_invariants(ps: &PrimitiveState1D) -> CharacteristicData {
    let sp = char_speeds(ps);
    CharacteristicData {
        r_plus: sp.lambda_minus.clone(),
        r_minus: sp.lambda_plus.clone(),
        lambda_plus: sp.lambda_plus,
        lambda_minus: sp.lambda_minus,
    }
}

pub fn max_abs_speed(ps: &PrimitiveState1D) -> f64 {
    ps.p.values()
        .iter()
        .zip(ps.q.values())
        .map(|(&p, &q)| {
            let (a, b) = speeds(p, q);
            a.abs().max(b.abs())
        })
        .fold(0.0, f64::max)
}

/// `max |∂_t r± + λ± ∂_x r±|` from three equally spaced conservative states.
pub fn riemann_advection_residual(
    prev: &ConservedState1D,
    now: &ConservedState1D,
    next: &ConservedState1D,
    order: StencilOrder,
) -> Result<(f64, f64)> {
    if prev.grid() != now.grid() || next.grid() != now.grid() {
        return Err(LabError::GridMismatch("states live on different grids".into()));
    }
    let (d1, d2) = (now.t - prev.t, next.t - now.t);
    if !(d1 > 0.0) || (d1 - d2).abs() > 1e-9 * d1.max(d2) {
        return Err(LabError::GridMismatch(format!(
            "states are not equally spaced in time: {d1} vs {d2}"
        )));
    }
    let cp = riemann_invariants(&recover_primitive(prev));
    let cn = riemann_invariants(&recover_primitive(now));
    let cx = riemann_invariants(&recover_primitive(next));
    let rx_plus = deriv1(&cn.r_plus, 0, order);
    let rx_minus = deriv1(&cn.r_minus, 0, order);
    let mut worst = (0.0_f64, 0.0_f64);
    for i in 0..now.q.len() {
        let rt_plus = (cx.r_plus.values()[i] - cp.r_plus.values()[i]) / (2.0 * d1);
        let rt_minus = (cx.r_minus.values()[i] - cp.r_minus.values()[i]) / (2.0 * d1);
        let a = rt_plus + cn.lambda_plus.values()[i] * rx_plus.values()[i];
        let b = rt_minus + cn.lambda_minus.values()[i] * rx_minus.values()[i];
        worst = (worst.0.max(a.abs()), worst.1.max(b.abs()));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxScheme {
    LaxFriedrichs,
    Richtmyer,
}

/// Fluxes of `(q, u, w)` given `(q, w)`.
#[inline]
fn flux(q: f64, w: f64) -> [f64; 3] {
    let sg = ((1.0 + q * q) / (1.0 + w * w)).sqrt();
    let p = w * sg;
    [-p, -w * q, -q / sg]
}

/// One flux-form step with a CFL check against `cfl · dx / max|λ|`.
pub fn step_conservative(
    cs: &ConservedState1D,
    dt: f64,
    scheme: FluxScheme,
    cfl: f64,
    gamma_min: f64,
) -> Result<ConservedState1D> {
    let limit = cfl * cs.grid().dx()[0] / max_abs_speed(&recover_primitive(cs)).max(f64::MIN_POSITIVE);
    if dt.abs() > limit * (1.0 + 1e-12) {
        return Err(LabError::CflViolation { dt: dt.abs(), limit });
    }
    step_conservative_unchecked(cs, dt, scheme, gamma_min)
}

pub(crate) fn step_conservative_unchecked(
    cs: &ConservedState1D,
    dt: f64,
    scheme: FluxScheme,
    gamma_min: f64,
) -> Result<ConservedState1D> {
    let g = cs.grid().clone();
    let n = g.n()[0];
    let nu = dt / g.dx()[0];
    let dens = [cs.q.values(), cs.u.values(), cs.w.values()];
    let f: Vec<[f64; 3]> = (0..n).map(|i| flux(dens[0][i], dens[2][i])).collect();
    let right = |i: usize| (i + 1) % n;
    let left = |i: usize| (i + n - 1) % n;
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    match scheme {
        FluxScheme::LaxFriedrichs => {
            for i in 0..n {
                let (r, l) = (right(i), left(i));
                for c in 0..3 {
                    out[c][i] = 0.5 * (dens[c][r] + dens[c][l]) - 0.5 * nu * (f[r][c] - f[l][c]);
                }
            }
        }
        FluxScheme::Richtmyer => {
            // Predictor at the midpoint i + 1/2.
            let half: Vec<[f64; 3]> = (0..n)
                .map(|i| {
                    let r = right(i);
                    let mut h = [0.0; 3];
                    for c in 0..3 {
                        h[c] = 0.5 * (dens[c][i] + dens[c][r]) - 0.5 * nu * (f[r][c] - f[i][c]);
                    }
                    flux(h[0], h[2])
                })
                .collect();
            for i in 0..n {
                let l = left(i);
                for c in 0..3 {
                    out[c][i] = dens[c][i] - nu * (half[i][c] - half[l][c]);
                }
            }
        }
    }
    let [q, u, w] = out;
    let q = ScalarLattice::new(g.clone(), q)?;
    let u = ScalarLattice::new(g.clone(), u)?;
    let w = ScalarLattice::new(g.clone(), w)?;
    let sigma = w
        .values()
        .iter()
        .zip(q.values())
        .zip(&cs.sigma)
        .map(|((&wv, &qv), &old)| {
            let p = p_from_current(qv, wv);
            if p.abs() < SIGN_FLOOR {
                old
            } else {
                sign(p)
            }
        })
        .collect();
    let next = ConservedState1D {
        t: cs.t + dt,
        q,
        u,
        w,
        sigma,
    };
    check_gamma(&recover_primitive(&next), gamma_min)?;
    Ok(next)
}

/// L∞ differences between the second-order and the conservative evolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossReport {
    pub n: usize,
    pub times: Vec<f64>,
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
    pub max_dp: f64,
    pub max_dq: f64,
}

impl CrossReport {
    pub fn max_diff(&self) -> f64 {
        self.max_dp.max(self.max_dq)
    }
}

/// Runs both evolutions from the same slice and compares `(p, q)` at every snapshot.
///
/// The conservative path uses `cfg.scheme` when it is a flux scheme, Richtmyer otherwise.
pub fn cross_validate(init: &FieldState, cfg: &SolverConfig) -> Result<CrossReport> {
    if init.m() != 1 {
        return Err(LabError::Config("cross validation requires m=1".into()));
    }
    let second_cfg = SolverConfig {
        scheme: Scheme::Mol4Rk4,
        ..cfg.clone()
    };
    let first_cfg = SolverConfig {
        scheme: match cfg.scheme {
            Scheme::Lxf => Scheme::Lxf,
            _ => Scheme::Richtmyer,
        },
        ..cfg.clone()
    };
    let opts = RunOptions { diagnostics: false };
    let a = simulate_with(init, &second_cfg, opts)?;
    if let Some(e) = a.failure {
        return Err(e);
    }
    let b = simulate_with(init, &first_cfg, opts)?;
    if let Some(e) = b.failure {
        return Err(e);
    }
    let mut rep = CrossReport {
        n: init.grid().n()[0],
        times: Vec::new(),
        dp: Vec::new(),
        dq: Vec::new(),
        max_dp: 0.0,
        max_dq: 0.0,
    };
    for (s, cs) in a.snapshots.iter().zip(&b.conserved) {
        let ps = recover_primitive(cs);
        let q = s.spatial_gradient(0, StencilOrder::Fourth);
        let dp = s.p.zip_map(&ps.p, |x, y| x - y).max_abs();
        let dq = q.zip_map(&ps.q, |x, y| x - y).max_abs();
        rep.times.push(s.t);
        rep.dp.push(dp);
        rep.dq.push(dq);
        rep.max_dp = rep.max_dp.max(dp);
        rep.max_dq = rep.max_dq.max(dq);
    }
    Ok(rep)
}

//! Time evolution of the height field.
//!
//! The field equation is second order in time; collecting the `z_tt` terms gives
//! the first-order system
//!
//! ```text
//! z_t = p
//! p_t = [Γ Δz + 2p Σ_i z_i p_i − Σ_ij z_i z_j z_ij] / (1 + |∇z|²)
//! ```
//!
//! whose time coefficient `1 + |∇z|²` never degenerates. It is integrated by
//! method of lines: centered stencils in space, classical RK4 in time.

use serde::{Deserialize, Serialize};

use crate::charges::charges_with;
use crate::error::{LabError, Result};
use crate::field::{gradients_guarded, FieldState, DEFAULT_GAMMA_MIN};
use crate::grid::{deriv1, deriv2, ScalarLattice, StencilOrder};
use crate::hyper1d::{self, ConservedState1D, FluxScheme};
use crate::lab::{self, DiagnosticsRow};

/// Time integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Fourth-order stencils with RK4 on `(z, p)`.
    Mol4Rk4,
    /// First-order Lax–Friedrichs on the conservative first-order system (m=1).
    Lxf,
    /// Two-step Richtmyer on the conservative first-order system (m=1).
    Richtmyer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub cfl: f64,
    pub t_end: f64,
    pub snapshot_every: f64,
    /// Kreiss–Oliger coefficient; zero disables dissipation.
    pub dissipation: f64,
    pub gamma_min: f64,
    pub boundary_tol: f64,
}

impl SolverConfig {
    pub fn new(scheme: Scheme, t_end: f64, snapshot_every: f64) -> Self {
        SolverConfig {
            scheme,
            cfl: 0.4,
            t_end,
            snapshot_every,
            dissipation: 0.0,
            gamma_min: DEFAULT_GAMMA_MIN,
            boundary_tol: crate::charges::DEFAULT_BOUNDARY_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(LabError::Config(format!("cfl must lie in (0,1), got {}", self.cfl)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(LabError::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.snapshot_every > 0.0 && self.snapshot_every.is_finite()) {
            return Err(LabError::Config(format!(
                "snapshot_every must be positive, got {}",
                self.snapshot_every
            )));
        }
        if !(self.dissipation >= 0.0 && self.dissipation.is_finite()) {
            return Err(LabError::Config(format!(
                "dissipation must be non-negative, got {}",
                self.dissipation
            )));
        }
        if !(self.gamma_min >= 0.0 && self.gamma_min.is_finite()) {
            return Err(LabError::Config(format!("gamma_min must be non-negative, got {}", self.gamma_min)));
        }
        if !(self.boundary_tol > 0.0 && self.boundary_tol.is_finite()) {
            return Err(LabError::Config(format!(
                "boundary_tol must be positive, got {}",
                self.boundary_tol
            )));
        }
        Ok(())
    }
}

/// `z_tt` at one point.
///
/// `hess[i][j] = ∂_i ∂_j z`; only the leading `m × m` block is read.
#[inline]
pub fn acceleration(p: f64, zx: &[f64], px: &[f64], hess: &[[f64; 2]; 2]) -> f64 {
    let m = zx.len();
    let mut grad2 = 0.0;
    let mut lap = 0.0;
    let mut mix = 0.0;
    let mut cross = 0.0;
    for i in 0..m {
        grad2 += zx[i] * zx[i];
        lap += hess[i][i];
        mix += zx[i] * px[i];
        for j in 0..m {
            cross += zx[i] * zx[j] * hess[i][j];
        }
    }
    let gamma = 1.0 - p * p + grad2;
    (gamma * lap + 2.0 * p * mix - cross) / (1.0 + grad2)
}

/// Residual of the field equation `Γ □z + z^α z^β z_αβ` at one point, with
/// `z_tt = ztt` and `z_ti = px[i]`.
pub fn field_equation_defect(p: f64, zx: &[f64], px: &[f64], hess: &[[f64; 2]; 2], ztt: f64) -> f64 {
    let m = zx.len();
    let mut grad2 = 0.0;
    let mut lap = 0.0;
    for i in 0..m {
        grad2 += zx[i] * zx[i];
        lap += hess[i][i];
    }
    let gamma = 1.0 - p * p + grad2;
    let box_z = ztt - lap;
    // z^0 = p, z^i = −z_i.
    let mut contraction = p * p * ztt;
    for i in 0..m {
        contraction += 2.0 * p * (-zx[i]) * px[i];
        for j in 0..m {
            contraction += zx[i] * zx[j] * hess[i][j];
        }
    }
    gamma * box_z + contraction
}

/// Time derivatives `(z_t, p_t)` of a slice.
pub fn rhs(s: &FieldState, order: StencilOrder, gamma_min: f64) -> Result<(ScalarLattice, ScalarLattice)> {
    let gf = gradients_guarded(s, order, gamma_min)?;
    let m = s.m();
    let px: Vec<ScalarLattice> = (0..m).map(|a| deriv1(&s.p, a, order)).collect();
    let mut hess_l: Vec<Vec<ScalarLattice>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = Vec::with_capacity(m);
        for j in 0..m {
            if j < i {
                row.push(hess_l[j][i].clone());
            } else {
                row.push(deriv2(&s.z, i, j, order));
            }
        }
        hess_l.push(row);
    }
    let mut zx = [0.0; 2];
    let mut pxv = [0.0; 2];
    let mut hess = [[0.0; 2]; 2];
    let dp: Vec<f64> = (0..s.grid().len())
        .map(|k| {
            for i in 0..m {
                zx[i] = gf.zx[i].values()[k];
                pxv[i] = px[i].values()[k];
                for j in 0..m {
                    hess[i][j] = hess_l[i][j].values()[k];
                }
            }
            acceleration(s.p.values()[k], &zx[..m], &pxv[..m], &hess)
        })
        .collect();
    Ok((s.p.clone(), ScalarLattice::from_raw(s.grid().clone(), dp)))
}

/// Largest characteristic speed bound, never below the light speed 1.
pub fn max_char_speed(s: &FieldState) -> f64 {
    let order = StencilOrder::Fourth;
    let m = s.m();
    let zx: Vec<ScalarLattice> = (0..m).map(|a| s.spatial_gradient(a, order)).collect();
    let mut cmax = 1.0_f64;
    for k in 0..s.grid().len() {
        let p = s.p.values()[k];
        if m == 1 {
            let (lp, lm) = hyper1d::speeds(p, zx[0].values()[k]);
            cmax = cmax.max(lp.abs()).max(lm.abs());
        } else {
            let grad2: f64 = zx.iter().map(|d| d.values()[k].powi(2)).sum();
            let a = 1.0 + grad2;
            let gamma = 1.0 - p * p + grad2;
            for d in &zx {
                let zn = d.values()[k];
                let disc = (p * p * zn * zn + a * (gamma - zn * zn)).max(0.0).sqrt();
                cmax = cmax.max(((-p * zn).abs() + disc) / a);
            }
        }
    }
    cmax
}

/// Time step bound `cfl · min(dx) / c_max`.
pub fn dt_limit(s: &FieldState, cfl: f64) -> f64 {
    cfl * s.grid().min_dx() / max_char_speed(s)
}

fn check_cfl(dt: f64, limit: f64) -> Result<()> {
    if dt.abs() > limit * (1.0 + 1e-12) {
        return Err(LabError::CflViolation { dt: dt.abs(), limit });
    }
    Ok(())
}

fn kreiss_oliger(p: &ScalarLattice, eps: f64) -> ScalarLattice {
    let g = p.grid().clone();
    let v = p.values();
    let mut out = vec![0.0; v.len()];
    for axis in 0..g.m() {
        let h = g.dx()[axis];
        for (i, o) in out.iter_mut().enumerate() {
            let s = |k: isize| v[g.neighbor(i, axis, k)];
            let d4 = (s(2) + s(-2)) - 4.0 * (s(1) + s(-1)) + 6.0 * v[i];
            *o -= eps / h * d4;
        }
    }
    ScalarLattice::from_raw(g, out)
}

fn stage(s: &FieldState, dz: &ScalarLattice, dp: &ScalarLattice, h: f64) -> FieldState {
    FieldState {
        t: s.t + h,
        z: s.z.axpy(h, dz),
        p: s.p.axpy(h, dp),
        ..s.clone()
    }
}

fn rhs_dissipative(s: &FieldState, cfg: &SolverConfig) -> Result<(ScalarLattice, ScalarLattice)> {
    let (dz, dp) = rhs(s, StencilOrder::Fourth, cfg.gamma_min)?;
    if cfg.dissipation > 0.0 {
        let ko = kreiss_oliger(&s.p, cfg.dissipation);
        Ok((dz, dp.axpy(1.0, &ko)))
    } else {
        Ok((dz, dp))
    }
}

/// One classical RK4 step of size `dt` (negative steps integrate backwards).
pub fn step_rk4(s: &FieldState, dt: f64, cfg: &SolverConfig) -> Result<FieldState> {
    check_cfl(dt, dt_limit(s, cfg.cfl))?;
    rk4_unchecked(s, dt, cfg)
}

fn rk4_unchecked(s: &FieldState, dt: f64, cfg: &SolverConfig) -> Result<FieldState> {
    let (k1z, k1p) = rhs_dissipative(s, cfg)?;
    let s2 = stage(s, &k1z, &k1p, 0.5 * dt);
    let (k2z, k2p) = rhs_dissipative(&s2, cfg)?;
    let s3 = stage(s, &k2z, &k2p, 0.5 * dt);
    let (k3z, k3p) = rhs_dissipative(&s3, cfg)?;
    let s4 = stage(s, &k3z, &k3p, dt);
    let (k4z, k4p) = rhs_dissipative(&s4, cfg)?;
    let combine = |y: &ScalarLattice, a: &ScalarLattice, b: &ScalarLattice, c: &ScalarLattice, d: &ScalarLattice| {
        let vals = (0..y.len())
            .map(|i| {
                let incr = (a.values()[i] + 2.0 * (b.values()[i] + c.values()[i]) + d.values()[i]) / 6.0;
                y.values()[i] + dt * incr
            })
            .collect();
        ScalarLattice::new(y.grid().clone(), vals)
    };
    let z = combine(&s.z, &k1z, &k2z, &k3z, &k4z)?;
    let p = combine(&s.p, &k1p, &k2p, &k3p, &k4p)?;
    let next = FieldState::with_slope(s.t + dt, z, p, s.slope.clone())?;
    // Surface degeneracy at the new slice as the typed error rather than later.
    gradients_guarded(&next, StencilOrder::Fourth, cfg.gamma_min)?;
    Ok(next)
}

/// State carried by a run: the second-order slice, or the conservative
/// first-order state together with the height it integrates.
#[derive(Debug, Clone)]
pub(crate) enum RunState {
    Second(FieldState),
    First {
        cs: ConservedState1D,
        z: ScalarLattice,
    },
}

impl RunState {
    fn new(init: &FieldState, scheme: Scheme) -> Result<RunState> {
        match scheme {
            Scheme::Mol4Rk4 => Ok(RunState::Second(init.clone())),
            Scheme::Lxf | Scheme::Richtmyer => {
                if init.m() != 1 {
                    return Err(LabError::Config(format!(
                        "scheme {scheme:?} is only available for m=1"
                    )));
                }
                if init.has_slope() {
                    return Err(LabError::Config("conservative schemes need periodic height data".into()));
                }
                let ps = hyper1d::to_primitive(init, StencilOrder::Fourth)?;
                Ok(RunState::First {
                    cs: hyper1d::conserved_from_primitive(&ps)?,
                    z: init.z.clone(),
                })
            }
        }
    }

    pub(crate) fn field(&self) -> Result<FieldState> {
        match self {
            RunState::Second(s) => Ok(s.clone()),
            RunState::First { cs, z } => {
                let ps = hyper1d::recover_primitive(cs);
                FieldState::new(cs.t, z.clone(), ps.p)
            }
        }
    }

    fn time(&self) -> f64 {
        match self {
            RunState::Second(s) => s.t,
            RunState::First { cs, .. } => cs.t,
        }
    }

    fn dt_limit(&self, cfl: f64) -> Result<f64> {
        match self {
            RunState::Second(s) => Ok(dt_limit(s, cfl)),
            RunState::First { cs, .. } => {
                let ps = hyper1d::recover_primitive(cs);
                let c = hyper1d::max_abs_speed(&ps).max(1.0);
                Ok(cfl * cs.grid().min_dx() / c)
            }
        }
    }

    fn step(&self, dt: f64, cfg: &SolverConfig) -> Result<RunState> {
        match self {
            RunState::Second(s) => Ok(RunState::Second(rk4_unchecked(s, dt, cfg)?)),
            RunState::First { cs, z } => {
                let scheme = match cfg.scheme {
                    Scheme::Lxf => FluxScheme::LaxFriedrichs,
                    _ => FluxScheme::Richtmyer,
                };
                let p_old = hyper1d::recover_primitive(cs).p;
                let next = hyper1d::step_conservative_unchecked(cs, dt, scheme, cfg.gamma_min)?;
                let p_new = hyper1d::recover_primitive(&next).p;
                // Trapezoidal update of the height from z_t = p.
                let z_vals = (0..z.len())
                    .map(|i| z.values()[i] + 0.5 * dt * (p_old.values()[i] + p_new.values()[i]))
                    .collect();
                Ok(RunState::First {
                    cs: next,
                    z: ScalarLattice::new(z.grid().clone(), z_vals)?,
                })
            }
        }
    }
}

/// Snapshots and per-snapshot diagnostics of a run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub scheme: Scheme,
    pub dt: f64,
    pub snapshots: Vec<FieldState>,
    /// Conservative states at the snapshot times (first-order schemes only).
    pub conserved: Vec<ConservedState1D>,
    pub diagnostics: Vec<DiagnosticsRow>,
    /// Set when the run stopped before `t_end`.
    pub failure: Option<LabError>,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn last(&self) -> &FieldState {
        self.snapshots.last().expect("a run record always holds the initial slice")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub diagnostics: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { diagnostics: true }
    }
}

/// Snapshot times `k · every` below `t_end`, then `t_end` itself.
pub fn snapshot_schedule(t_end: f64, every: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 1u64;
    loop {
        let t = k as f64 * every;
        if t >= t_end * (1.0 - 1e-12) {
            break;
        }
        out.push(t);
        k += 1;
    }
    out.push(t_end);
    out
}

pub fn simulate(init: &FieldState, cfg: &SolverConfig) -> Result<RunRecord> {
    simulate_with(init, cfg, RunOptions::default())
}

/// Steps from `init` for a duration `t_end` with a fixed step chosen at the start.
///
/// Snapshot times are offsets from `init.t`, so a run resumed from a later
/// slice continues on the same schedule.
///
/// Invalid configurations are returned as `Err`. Failures during the run
/// (degeneracy, CFL) stop it and are reported in `RunRecord::failure`, with
/// every snapshot taken so far retained.
pub fn simulate_with(init: &FieldState, cfg: &SolverConfig, opts: RunOptions) -> Result<RunRecord> {
    cfg.validate()?;
    let mut state = RunState::new(init, cfg.scheme)?;
    let dt_max = state.dt_limit(cfg.cfl)?;
    let every_steps = (cfg.snapshot_every / dt_max - 1e-9).ceil().max(1.0);
    let dt = cfg.snapshot_every / every_steps;
    let mut rec = RunRecord {
        scheme: cfg.scheme,
        dt,
        snapshots: Vec::new(),
        conserved: Vec::new(),
        diagnostics: Vec::new(),
        failure: None,
    };
    if let Err(e) = record(&mut rec, &state, dt, cfg, opts) {
        rec.failure = Some(e);
        return Ok(rec);
    }
    let start = state.time();
    for offset in snapshot_schedule(cfg.t_end, cfg.snapshot_every) {
        let target = start + offset;
        let t0 = state.time();
        let span = target - t0;
        let nsteps = ((span / dt) - 1e-9).ceil().max(1.0) as u64;
        let h = span / nsteps as f64;
        for k in 1..=nsteps {
            let outcome = state.dt_limit(cfg.cfl).and_then(|limit| {
                check_cfl(h, limit)?;
                state.step(h, cfg)
            });
            match outcome {
                Ok(mut next) => {
                    let t = if k == nsteps { target } else { t0 + k as f64 * h };
                    match &mut next {
                        RunState::Second(s) => s.t = t,
                        RunState::First { cs, .. } => cs.t = t,
                    }
                    state = next;
                }
                Err(e) => {
                    rec.failure = Some(with_time(e, state.time() + h));
                    return Ok(rec);
                }
            }
        }
        if let Err(e) = record(&mut rec, &state, dt, cfg, opts) {
            rec.failure = Some(e);
            return Ok(rec);
        }
    }
    Ok(rec)
}

fn with_time(e: LabError, t: f64) -> LabError {
    match e {
        LabError::DegenerateEvolution { index, gamma, guard, .. } => LabError::DegenerateEvolution {
            t,
            index,
            gamma,
            guard,
        },
        other => other,
    }
}

fn record(rec: &mut RunRecord, state: &RunState, dt: f64, cfg: &SolverConfig, opts: RunOptions) -> Result<()> {
    let slice = state.field()?;
    if opts.diagnostics {
        let prev = state.step(-dt, cfg).and_then(|s| s.field()).map_err(|e| with_time(e, slice.t - dt))?;
        let next = state.step(dt, cfg).and_then(|s| s.field()).map_err(|e| with_time(e, slice.t + dt))?;
        let row = lab::diagnostics_row(&prev, &slice, &next, cfg)?;
        rec.diagnostics.push(row);
    } else {
        // Charges still validate the slice.
        charges_with(&slice, cfg.gamma_min, cfg.boundary_tol)?;
    }
    if let RunState::First { cs, .. } = state {
        rec.conserved.push(cs.clone());
    }
    rec.snapshots.push(slice);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_initial, InitialKind, InitialSpec};
    use crate::grid::Grid;
    use std::f64::consts::PI;

    fn line(n: usize, l: f64) -> std::sync::Arc<Grid> {
        Grid::new(vec![n], vec![l]).unwrap()
    }

    #[test]
    fn traveling_point_acceleration() {
        // z = f(x − t): p = −f′, z_x = f′, z_tx = −f″.
        let (f1, f2) = (0.5, 0.3);
        let a = acceleration(-f1, &[f1], &[-f2], &[[f2, 0.0], [0.0, 0.0]]);
        assert!((a - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rhs_vacuum_and_uniform() {
        let g = line(16, 2.0 * PI);
        let v = FieldState::vacuum(g.clone());
        let (dz, dp) = rhs(&v, StencilOrder::Fourth, DEFAULT_GAMMA_MIN).unwrap();
        assert_eq!(dz.max_abs(), 0.0);
        assert_eq!(dp.max_abs(), 0.0);
        let u = make_initial(&g, &InitialSpec::new(InitialKind::Uniform).velocity(0.6)).unwrap();
        let (dz, dp) = rhs(&u, StencilOrder::Fourth, DEFAULT_GAMMA_MIN).unwrap();
        assert_eq!(dp.max_abs(), 0.0);
        assert!(dz.values().iter().all(|&v| v == 0.6));
    }

    #[test]
    fn rhs_satisfies_field_equation_pointwise() {
        for m in [1usize, 2] {
            let g = if m == 1 {
                line(64, 2.0 * PI)
            } else {
                Grid::new(vec![16, 16], vec![2.0 * PI, 2.0 * PI]).unwrap()
            };
            let s = make_initial(&g, &InitialSpec::new(InitialKind::RandomBandlimited).seed(11)).unwrap();
            let (_, dp) = rhs(&s, StencilOrder::Fourth, DEFAULT_GAMMA_MIN).unwrap();
            let o = StencilOrder::Fourth;
            let zx: Vec<_> = (0..m).map(|a| deriv1(&s.z, a, o)).collect();
            let px: Vec<_> = (0..m).map(|a| deriv1(&s.p, a, o)).collect();
            for k in 0..g.len() {
                let mut hess = [[0.0; 2]; 2];
                for i in 0..m {
                    for j in 0..m {
                        hess[i][j] = deriv2(&s.z, i.min(j), i.max(j), o).values()[k];
                    }
                }
                let zxk: Vec<f64> = zx.iter().map(|d| d.values()[k]).collect();
                let pxk: Vec<f64> = px.iter().map(|d| d.values()[k]).collect();
                let p = s.p.values()[k];
                let defect = field_equation_defect(p, &zxk, &pxk, &hess, dp.values()[k]);
                let mut scale = (1.0 + p * p) * (dp.values()[k].abs() + hess[0][0].abs() + hess[m - 1][m - 1].abs());
                for i in 0..m {
                    scale += 2.0 * (p * zxk[i] * pxk[i]).abs();
                    for j in 0..m {
                        scale += (zxk[i] * zxk[j] * hess[i][j]).abs();
                    }
                }
                assert!(defect.abs() <= 8.0 * f64::EPSILON * scale, "m={m} k={k} defect={defect} scale={scale}");
            }
        }
    }

    #[test]
    fn rk4_vacuum_is_bitwise_fixed() {
        let g = line(16, 2.0 * PI);
        let v = FieldState::vacuum(g);
        let cfg = SolverConfig::new(Scheme::Mol4Rk4, 1.0, 1.0);
        let next = step_rk4(&v, 0.1, &cfg).unwrap();
        assert_eq!(next.z, v.z);
        assert_eq!(next.p, v.p);
    }

    #[test]
    fn rk4_uniform_velocity_is_exact() {
        let g = line(8, 2.0 * PI);
        let u = make_initial(&g, &InitialSpec::new(InitialKind::Uniform).velocity(0.6)).unwrap();
        let cfg = SolverConfig::new(Scheme::Mol4Rk4, 1.0, 1.0);
        let next = step_rk4(&u, 0.1, &cfg).unwrap();
        assert!(next.z.values().iter().all(|&z| (z - 0.06).abs() < 1e-16));
        assert_eq!(next.p, u.p);
    }

    #[test]
    fn cfl_violation_is_typed() {
        let g = line(16, 2.0 * PI);
        let v = FieldState::vacuum(g.clone());
        let cfg = SolverConfig::new(Scheme::Mol4Rk4, 1.0, 1.0);
        let limit = 0.4 * g.dx()[0];
        assert!(matches!(step_rk4(&v, 1.01 * limit, &cfg), Err(LabError::CflViolation { .. })));
        assert!(step_rk4(&v, limit, &cfg).is_ok());
    }

    #[test]
    fn small_mode_follows_linear_wave() {
        // Linearized equation is □z = 0; z = A sin(x) at rest evolves as A cos(t) sin(x).
        let a = 1e-4;
        let g = line(64, 2.0 * PI);
        let z = ScalarLattice::from_fn(g.clone(), |x| a * x[0].sin()).unwrap();
        let s = FieldState::new(0.0, z, ScalarLattice::zeros(g.clone())).unwrap();
        let cfg = SolverConfig::new(Scheme::Mol4Rk4, 2.0 * PI, 2.0 * PI);
        let rec = simulate_with(&s, &cfg, RunOptions { diagnostics: false }).unwrap();
        assert!(rec.completed());
        let end = rec.last();
        let exact = ScalarLattice::from_fn(g, |x| a * (2.0 * PI).cos() * x[0].sin()).unwrap();
        let err = end.z.zip_map(&exact, |u, v| u - v).max_abs();
        assert!(err < 1e-3 * a, "{err}");
    }

    #[test]
    fn schedule_ends_on_t_end() {
        assert_eq!(snapshot_schedule(1.0, 0.25), vec![0.25, 0.5, 0.75, 1.0]);
        let s = snapshot_schedule(1.0, 0.3);
        assert_eq!(s.len(), 4);
        assert_eq!(s[2], 3.0 * 0.3);
        assert_eq!(s[3], 1.0);
        assert_eq!(snapshot_schedule(0.1, 0.3), vec![0.1]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::new(Scheme::Mol4Rk4, 1.0, 0.5);
        assert!(cfg.validate().is_ok());
        cfg.cfl = 1.0;
        assert!(cfg.validate().is_err());
        cfg.cfl = 0.4;
        cfg.t_end = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn vacuum_run_has_constant_diagnostics() {
        let g = line(16, 2.0 * PI);
        let v = FieldState::vacuum(g);
        let cfg = SolverConfig::new(Scheme::Mol4Rk4, 1.0, 0.25);
        let rec = simulate(&v, &cfg).unwrap();
        assert!(rec.completed());
        assert_eq!(rec.snapshots.len(), 5);
        let first = &rec.diagnostics[0];
        for row in &rec.diagnostics[1..] {
            assert_eq!(row.charges.p, first.charges.p);
            assert_eq!(row.charges.l, first.charges.l);
            assert_eq!(row.residuals.eq4, first.residuals.eq4);
            assert_eq!(row.residuals.min_gamma, 1.0);
        }
    }

    #[test]
    fn dissipation_damps_grid_noise_only() {
        let g = line(64, 2.0 * PI);
        let z = ScalarLattice::zeros(g.clone());
        let noise = ScalarLattice::from_fn(g.clone(), |x| {
            1e-3 * (((x[0] / (2.0 * PI / 64.0)).round() as i64).rem_euclid(2) * 2 - 1) as f64
        })
        .unwrap();
        let s = FieldState::new(0.0, z, noise).unwrap();
        let mut cfg = SolverConfig::new(Scheme::Mol4Rk4, 1.0, 1.0);
        let dt = 0.4 * g.dx()[0];
        let plain = step_rk4(&s, dt, &cfg).unwrap();
        cfg.dissipation = 0.1;
        let damped = step_rk4(&s, dt, &cfg).unwrap();
        assert!(damped.p.max_abs() < plain.p.max_abs());
        // Smooth data is essentially untouched.
        let smooth = FieldState::new(
            0.0,
            ScalarLattice::zeros(g.clone()),
            ScalarLattice::from_fn(g, |x| 1e-3 * x[0].sin()).unwrap(),
        )
        .unwrap();
        let a = step_rk4(&smooth, dt, &cfg).unwrap();
        cfg.dissipation = 0.0;
        let b = step_rk4(&smooth, dt, &cfg).unwrap();
        assert!(a.p.zip_map(&b.p, |x, y| x - y).max_abs() < 1e-8);
    }
}

//! Diagnostics that discretize the conservation laws directly, file formats,
//! the convergence harness and the command line front end.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::charges::{charges_from_stress, charges_with, embedding_coord, has_compact_support, ChargeSet};
use crate::error::{LabError, Result};
use crate::evolve::{simulate_with, RunOptions, RunRecord, Scheme, SolverConfig};
use crate::field::{gradients_guarded, make_initial, FieldState, GaussianProfile, GradientField, InitialKind, InitialSpec};
use crate::grid::{convergence_order, deriv1, Grid, ScalarLattice, StencilOrder};
use crate::hyper1d::{self, cross_validate, CrossReport};
use crate::stress::{harmonic_identity_residual, identity_residual, induced_metric, stress_tensor, StressField};

/// Stencil order used by all diagnostics.
pub const DIAGNOSTIC_ORDER: StencilOrder = StencilOrder::Fourth;

/// Residual of one Lorentz current `(μ, ν)`, `μ < ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairResidual {
    pub mu: usize,
    pub nu: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub t: f64,
    /// `max |∂_α H^{αμ}|` per μ.
    #[serde(rename = "eq4_resid")]
    pub eq4: Vec<f64>,
    /// Lorentz-current residuals for the pairs admissible on this slice.
    #[serde(rename = "eq5_resid")]
    pub eq5: Vec<PairResidual>,
    #[serde(rename = "identity_resid")]
    pub identity: f64,
    #[serde(rename = "harmonic_resid")]
    pub harmonic: f64,
    pub min_gamma: f64,
}

impl ResidualReport {
    pub fn eq5_max(&self) -> f64 {
        self.eq5.iter().map(|r| r.value).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub charges: ChargeSet,
    pub residuals: ResidualReport,
}

struct Slice<'a> {
    s: &'a FieldState,
    gf: GradientField,
    sf: StressField,
}

fn slice(s: &FieldState, order: StencilOrder, gamma_min: f64) -> Result<Slice<'_>> {
    let gf = gradients_guarded(s, order, gamma_min)?;
    let sf = stress_tensor(&gf);
    Ok(Slice { s, gf, sf })
}

/// Half the snapshot spacing; errors unless the three times are equally spaced.
fn spacing(prev: &FieldState, now: &FieldState, next: &FieldState) -> Result<f64> {
    if prev.grid() != now.grid() || next.grid() != now.grid() {
        return Err(LabError::GridMismatch("snapshots live on different grids".into()));
    }
    let (d1, d2) = (now.t - prev.t, next.t - now.t);
    if !(d1 > 0.0 && d2 > 0.0) || (d1 - d2).abs() > 1e-9 * d1.max(d2) {
        return Err(LabError::GridMismatch(format!(
            "snapshots are not equally spaced in time: {d1} vs {d2}"
        )));
    }
    Ok(0.5 * (next.t - prev.t))
}

/// Spatial divergence `Σ_i ∂_i H^{iμ}` per μ = 0..=M+1.
fn space_divergence(sf: &StressField, order: StencilOrder) -> Vec<ScalarLattice> {
    let m = sf.m();
    (0..m + 2)
        .map(|mu| {
            let mut acc = deriv1(sf.component(1, mu), 0, order);
            for i in 2..=m {
                let d = deriv1(sf.component(i, mu), i - 1, order);
                acc = acc.zip_map(&d, |a, b| a + b);
            }
            acc
        })
        .collect()
}

/// Per-μ `max |∂_α H^{αμ}|` from explicit currents on three slices.
pub fn residual_eq4_from_stress(
    states: [&FieldState; 3],
    stresses: [&StressField; 3],
    order: StencilOrder,
) -> Result<Vec<f64>> {
    let half = spacing(states[0], states[1], states[2])?;
    let m = states[1].m();
    let div = space_divergence(stresses[1], order);
    Ok((0..m + 2)
        .map(|mu| {
            let a = stresses[0].component(0, mu).values();
            let b = stresses[2].component(0, mu).values();
            div[mu]
                .values()
                .iter()
                .enumerate()
                .map(|(i, d)| ((b[i] - a[i]) / (2.0 * half) + d).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Centered-in-time, stencil-in-space residual of `∂_α H^{αμ} = 0`.
pub fn residual_eq4(prev: &FieldState, now: &FieldState, next: &FieldState, order: StencilOrder) -> Result<Vec<f64>> {
    residual_eq4_with(prev, now, next, order, crate::field::DEFAULT_GAMMA_MIN)
}

pub fn residual_eq4_with(
    prev: &FieldState,
    now: &FieldState,
    next: &FieldState,
    order: StencilOrder,
    gamma_min: f64,
) -> Result<Vec<f64>> {
    spacing(prev, now, next)?;
    let sl = [slice(prev, order, gamma_min)?, slice(now, order, gamma_min)?, slice(next, order, gamma_min)?];
    residual_eq4_from_stress([prev, now, next], [&sl[0].sf, &sl[1].sf, &sl[2].sf], order)
}

/// `∂_i x^μ` on the slice.
fn coord_gradient(gf: &GradientField, mu: usize, i: usize, k: usize) -> f64 {
    let m = gf.m();
    if mu == 0 {
        0.0
    } else if mu <= m {
        if mu == i {
            1.0
        } else {
            0.0
        }
    } else {
        gf.zx[i - 1].values()[k]
    }
}

/// Pairs `(μ, ν)` whose Lorentz currents are meaningful on a slice: all of them
/// with compact support, otherwise only those without a spatial index.
pub fn admissible_pairs(m: usize, compact: bool) -> Vec<(usize, usize)> {
    let d = m + 2;
    let mut out = Vec::new();
    for mu in 0..d {
        for nu in mu + 1..d {
            let spatial = |k: usize| k >= 1 && k <= m;
            if compact || !(spatial(mu) || spatial(nu)) {
                out.push((mu, nu));
            }
        }
    }
    out
}

/// Lorentz-current residuals `max |∂_α(x^μ H^{να} − x^ν H^{μα})|` from explicit currents.
///
/// The time derivative differences the full current, each slice with its own
/// `x^μ`. Space derivatives use the product rule with `∂_i x^μ` taken exactly
/// (and `∂_i z` from the stencil), so the non-periodic `x^i` never enters a stencil.
pub fn residual_eq5_from_stress(
    states: [&FieldState; 3],
    stresses: [&StressField; 3],
    mid_gradients: &GradientField,
    order: StencilOrder,
    pairs: &[(usize, usize)],
) -> Result<Vec<PairResidual>> {
    let half = spacing(states[0], states[1], states[2])?;
    let now = states[1];
    let sf = stresses[1];
    let m = now.m();
    let div = space_divergence(sf, order);
    let n = now.grid().len();
    let current = |s: &FieldState, h: &StressField, mu: usize, nu: usize, k: usize| {
        embedding_coord(s, mu, k) * h.component(nu, 0).values()[k]
            - embedding_coord(s, nu, k) * h.component(mu, 0).values()[k]
    };
    let mut out = Vec::with_capacity(pairs.len());
    for &(mu, nu) in pairs {
        if mu >= nu || nu > m + 1 {
            return Err(LabError::Config(format!("invalid Lorentz pair ({mu}, {nu})")));
        }
        let mut worst = 0.0_f64;
        for k in 0..n {
            let dt = (current(states[2], stresses[2], mu, nu, k) - current(states[0], stresses[0], mu, nu, k))
                / (2.0 * half);
            let xm = embedding_coord(now, mu, k);
            let xn = embedding_coord(now, nu, k);
            let mut sp = xm * div[nu].values()[k] - xn * div[mu].values()[k];
            for i in 1..=m {
                let gm = coord_gradient(mid_gradients, mu, i, k);
                let gn = coord_gradient(mid_gradients, nu, i, k);
                if gm != 0.0 {
                    sp += gm * sf.component(nu, i).values()[k];
                }
                if gn != 0.0 {
                    sp -= gn * sf.component(mu, i).values()[k];
                }
            }
            worst = worst.max((dt + sp).abs());
        }
        out.push(PairResidual { mu, nu, value: worst });
    }
    Ok(out)
}

/// Residuals of every Lorentz current; spatial pairs require compact support.
pub fn residual_eq5(
    prev: &FieldState,
    now: &FieldState,
    next: &FieldState,
    order: StencilOrder,
) -> Result<Vec<PairResidual>> {
    if !has_compact_support(now, crate::charges::DEFAULT_BOUNDARY_TOL) {
        return Err(LabError::Support(format!(
            "slice at t={} is not at vacuum near the boundary; x-weighted currents are undefined",
            now.t
        )));
    }
    residual_eq5_pairs(prev, now, next, order, &admissible_pairs(now.m(), true), crate::field::DEFAULT_GAMMA_MIN)
}

pub fn residual_eq5_pairs(
    prev: &FieldState,
    now: &FieldState,
    next: &FieldState,
    order: StencilOrder,
    pairs: &[(usize, usize)],
    gamma_min: f64,
) -> Result<Vec<PairResidual>> {
    spacing(prev, now, next)?;
    let sl = [slice(prev, order, gamma_min)?, slice(now, order, gamma_min)?, slice(next, order, gamma_min)?];
    residual_eq5_from_stress([prev, now, next], [&sl[0].sf, &sl[1].sf, &sl[2].sf], &sl[1].gf, order, pairs)
}

/// Full residual report for the middle of three equally spaced slices.
pub fn residual_report(
    prev: &FieldState,
    now: &FieldState,
    next: &FieldState,
    gamma_min: f64,
    boundary_tol: f64,
) -> Result<ResidualReport> {
    Ok(diagnostics_impl(prev, now, next, gamma_min, boundary_tol)?.residuals)
}

fn diagnostics_impl(
    prev: &FieldState,
    now: &FieldState,
    next: &FieldState,
    gamma_min: f64,
    boundary_tol: f64,
) -> Result<DiagnosticsRow> {
    let order = DIAGNOSTIC_ORDER;
    spacing(prev, now, next)?;
    let sl = [slice(prev, order, gamma_min)?, slice(now, order, gamma_min)?, slice(next, order, gamma_min)?];
    let states = [prev, now, next];
    let stresses = [&sl[0].sf, &sl[1].sf, &sl[2].sf];
    let mid = &sl[1];
    let charges = charges_from_stress(now, &mid.sf, boundary_tol);
    let eq4 = residual_eq4_from_stress(states, stresses, order)?;
    let pairs = admissible_pairs(now.m(), charges.compact_support_ok);
    let eq5 = residual_eq5_from_stress(states, stresses, &mid.gf, order, &pairs)?;
    let im = induced_metric(&mid.gf)?;
    let residuals = ResidualReport {
        t: now.t,
        eq4,
        eq5,
        identity: identity_residual(&mid.gf, &mid.sf),
        harmonic: harmonic_identity_residual(&mid.gf, &mid.sf, &im),
        min_gamma: mid.gf.gamma.min(),
    };
    debug_assert!(mid.s.t == now.t);
    Ok(DiagnosticsRow { charges, residuals })
}

/// Charges and residuals of `now`, with `prev`/`next` one step either side.
pub fn diagnostics_row(prev: &FieldState, now: &FieldState, next: &FieldState, cfg: &SolverConfig) -> Result<DiagnosticsRow> {
    diagnostics_impl(prev, now, next, cfg.gamma_min, cfg.boundary_tol)
}

// ---------------------------------------------------------------------------
// Files

fn io_err(path: &Path, e: impl std::fmt::Display) -> LabError {
    LabError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotFile {
    m: usize,
    t: f64,
    n: Vec<usize>,
    dx: Vec<f64>,
    origin: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    /// Background slope of the height; absent for periodic data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slope: Option<Vec<f64>>,
}

pub fn snapshot_to_json(s: &FieldState) -> String {
    let g = s.grid();
    let file = SnapshotFile {
        m: g.m(),
        t: s.t,
        n: g.n().to_vec(),
        dx: g.dx().to_vec(),
        origin: g.origin().to_vec(),
        z: s.z.values().to_vec(),
        p: s.p.values().to_vec(),
        slope: s.has_slope().then(|| s.slope.clone()),
    };
    let mut text = serde_json::to_string(&file).expect("finite snapshot serializes");
    text.push('\n');
    text
}

pub fn write_snapshot(s: &FieldState, path: &Path) -> Result<()> {
    write_atomic(path, snapshot_to_json(s).as_bytes())
}

/// Length whose division by `n` reproduces `dx` exactly.
fn length_for(dx: f64, n: usize) -> Option<f64> {
    let guess = dx * n as f64;
    let mut lo = guess;
    let mut hi = guess;
    for _ in 0..64 {
        if lo / n as f64 == dx {
            return Some(lo);
        }
        if hi / n as f64 == dx {
            return Some(hi);
        }
        lo = f64::from_bits(lo.to_bits() - 1);
        hi = f64::from_bits(hi.to_bits() + 1);
    }
    None
}

pub fn snapshot_from_json(text: &str, path: &Path) -> Result<FieldState> {
    let fmt = |field: &str, msg: String| LabError::Format {
        path: path.to_path_buf(),
        field: field.to_string(),
        msg,
    };
    let f: SnapshotFile = serde_json::from_str(text).map_err(|e| {
        fmt(
            "document",
            format!("line {} column {}: {e}", e.line(), e.column()),
        )
    })?;
    if !(1..=2).contains(&f.m) {
        return Err(fmt("m", format!("unsupported dimension {}", f.m)));
    }
    for (name, len) in [("n", f.n.len()), ("dx", f.dx.len()), ("origin", f.origin.len())] {
        if len != f.m {
            return Err(fmt(name, format!("expected {} entries, got {len}", f.m)));
        }
    }
    if f.n.iter().any(|&k| k < 8 || k % 2 != 0) {
        return Err(fmt("n", format!("entries must be even and >= 8: {:?}", f.n)));
    }
    let total: usize = f.n.iter().product();
    for (name, v) in [("z", &f.z), ("p", &f.p)] {
        if v.len() != total {
            return Err(fmt(name, format!("expected {total} values, got {}", v.len())));
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(fmt(name, format!("non-finite value at index {i}")));
        }
    }
    let mut length = Vec::with_capacity(f.m);
    for (a, (&dx, &k)) in f.dx.iter().zip(&f.n).enumerate() {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(fmt("dx", format!("axis {a}: spacing must be positive, got {dx}")));
        }
        length.push(length_for(dx, k).ok_or_else(|| fmt("dx", format!("axis {a}: no length reproduces dx={dx}")))?);
    }
    let grid = Grid::with_origin(f.n, length, f.origin).map_err(|e| fmt("grid", e.to_string()))?;
    let z = ScalarLattice::new(grid.clone(), f.z).map_err(|e| fmt("z", e.to_string()))?;
    let p = ScalarLattice::new(grid, f.p).map_err(|e| fmt("p", e.to_string()))?;
    let slope = f.slope.unwrap_or_else(|| vec![0.0; f.m]);
    FieldState::with_slope(f.t, z, p, slope).map_err(|e| fmt("slope", e.to_string()))
}

pub fn read_snapshot(path: &Path) -> Result<FieldState> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    snapshot_from_json(&text, path)
}

/// Header of `diagnostics.csv` for dimension `m`.
pub fn csv_header(m: usize) -> Vec<String> {
    let d = m + 2;
    let mut h = vec!["t".to_string()];
    h.extend((0..d).map(|mu| format!("P_{mu}")));
    for mu in 0..d {
        for nu in mu + 1..d {
            h.push(format!("L_{mu}{nu}"));
        }
    }
    h.extend((0..d).map(|mu| format!("moment_{mu}")));
    h.extend(["min_gamma", "identity_resid", "harmonic_resid"].map(String::from));
    h.extend((0..d).map(|mu| format!("eq4_resid_{mu}")));
    h.push("eq5_resid_max".into());
    h
}

fn csv_row(row: &DiagnosticsRow) -> Vec<f64> {
    let c = &row.charges;
    let r = &row.residuals;
    let d = c.p.len();
    let mut v = vec![c.t];
    v.extend(&c.p);
    for mu in 0..d {
        for nu in mu + 1..d {
            v.push(c.l[mu][nu]);
        }
    }
    v.extend(&c.moments);
    v.extend([r.min_gamma, r.identity, r.harmonic]);
    v.extend(&r.eq4);
    v.push(r.eq5_max());
    v
}

pub fn diagnostics_csv(m: usize, rows: &[DiagnosticsRow]) -> Result<String> {
    let mut out = csv_header(m).join(",");
    out.push('\n');
    let mut last_t = f64::NEG_INFINITY;
    for row in rows {
        if !(row.charges.t > last_t) {
            return Err(LabError::Config(format!("diagnostics rows out of order at t={}", row.charges.t)));
        }
        last_t = row.charges.t;
        let vals = csv_row(row);
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(LabError::NonFinite {
                what: "diagnostics row",
                index: i,
            });
        }
        let line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Experiment configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub length: Vec<f64>,
    pub n: Vec<usize>,
}

fn default_cfl() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub scheme: Scheme,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_end: f64,
    pub snapshot_every: f64,
    #[serde(default)]
    pub dissipation: f64,
}

fn default_gamma_min() -> f64 {
    crate::field::DEFAULT_GAMMA_MIN
}

fn default_boundary_tol() -> f64 {
    crate::charges::DEFAULT_BOUNDARY_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Guards {
    #[serde(default = "default_gamma_min")]
    pub gamma_min: f64,
    #[serde(default = "default_boundary_tol")]
    pub boundary_tol: f64,
}

impl Default for Guards {
    fn default() -> Self {
        Guards {
            gamma_min: default_gamma_min(),
            boundary_tol: default_boundary_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub domain: DomainConfig,
    pub initial: InitialSpec,
    pub solver: SolverSection,
    #[serde(default)]
    pub guards: Guards,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| LabError::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.m) {
            return Err(LabError::Config(format!("m must be 1 or 2, got {}", self.m)));
        }
        if self.domain.n.len() != self.m || self.domain.length.len() != self.m {
            return Err(LabError::Config(format!(
                "domain needs {} entries in n and length",
                self.m
            )));
        }
        self.grid()?;
        self.solver_config().validate()
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(self.domain.n.clone(), self.domain.length.clone())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            scheme: self.solver.scheme,
            cfl: self.solver.cfl,
            t_end: self.solver.t_end,
            snapshot_every: self.solver.snapshot_every,
            dissipation: self.solver.dissipation,
            gamma_min: self.guards.gamma_min,
            boundary_tol: self.guards.boundary_tol,
        }
    }

    pub fn initial_state(&self) -> Result<FieldState> {
        make_initial(&self.grid()?, &self.initial)
    }

    /// Same experiment with every axis refined `2^k` times.
    pub fn refined(&self, k: u32) -> ExperimentConfig {
        let mut c = self.clone();
        c.domain.n = c.domain.n.iter().map(|&n| n << k).collect();
        c
    }
}

/// Closed-form solution at time `t`, where one exists.
pub fn exact_solution(g: &Arc<Grid>, spec: &InitialSpec, t: f64) -> Result<Option<FieldState>> {
    let init = make_initial(g, spec)?;
    match spec.kind {
        InitialKind::Vacuum => Ok(Some(FieldState { t, ..init })),
        InitialKind::Uniform => {
            let v = spec.velocity;
            let z = init.z.map(|z| z + v * t);
            Ok(Some(FieldState::with_slope(t, z, init.p.clone(), init.slope.clone())?))
        }
        InitialKind::Traveling => {
            let f = GaussianProfile {
                amplitude: spec.amplitude.unwrap_or(0.1),
                width: spec.width,
                center: spec.center.first().copied().unwrap_or(0.0),
                period: g.length()[0],
            };
            let z = ScalarLattice::from_fn(g.clone(), |x| f.value(x[0] - t))?;
            let p = ScalarLattice::from_fn(g.clone(), |x| -f.d1(x[0] - t))?;
            Ok(Some(FieldState::new(t, z, p)?))
        }
        _ => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// Convergence harness

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergeRow {
    pub level: usize,
    pub n: Vec<usize>,
    pub dx: f64,
    /// Error against the exact solution, or the difference to the next finer level.
    pub error: f64,
    /// Observed order from the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergeTable {
    /// `"exact"` or `"self"`.
    pub reference: String,
    pub rows: Vec<ConvergeRow>,
}

/// Observed orders between consecutive errors, assuming a halved spacing.
pub fn observed_orders(errors: &[f64]) -> Result<Vec<f64>> {
    errors.windows(2).map(|w| convergence_order(w[0], w[1])).collect()
}

fn max_diff(a: &ScalarLattice, b: &ScalarLattice) -> f64 {
    a.zip_map(b, |x, y| x - y).max_abs()
}

/// Values of a fine lattice at the points of the coarse one.
fn restrict(fine: &ScalarLattice, coarse: &Arc<Grid>) -> ScalarLattice {
    let fg = fine.grid();
    let vals = (0..coarse.len())
        .map(|k| {
            let idx: Vec<usize> = (0..coarse.m()).map(|a| 2 * coarse.axis_index(k, a)).collect();
            fine.values()[fg.flat_index(&idx)]
        })
        .collect();
    ScalarLattice::new(coarse.clone(), vals).expect("restriction of finite data")
}

fn final_state(cfg: &ExperimentConfig) -> Result<FieldState> {
    let init = cfg.initial_state()?;
    let rec = simulate_with(&init, &cfg.solver_config(), RunOptions { diagnostics: false })?;
    if let Some(e) = rec.failure {
        return Err(e);
    }
    Ok(rec.last().clone())
}

/// Runs `levels` successively refined copies of `cfg` and tabulates errors.
///
/// With a closed-form solution the error is the L∞ distance of `(z, p)` to it at
/// `t_end`; otherwise it is the distance to the next finer level, which needs
/// one extra run.
pub fn converge(cfg: &ExperimentConfig, levels: usize) -> Result<ConvergeTable> {
    if levels < 2 {
        return Err(LabError::Config(format!("converge needs at least 2 levels, got {levels}")));
    }
    let exact_kind = matches!(
        cfg.initial.kind,
        InitialKind::Vacuum | InitialKind::Uniform | InitialKind::Traveling
    );
    let runs = if exact_kind { levels } else { levels + 1 };
    let mut finals = Vec::with_capacity(runs);
    for k in 0..runs {
        finals.push(final_state(&cfg.refined(k as u32))?);
    }
    let mut rows = Vec::with_capacity(levels);
    for k in 0..levels {
        let s = &finals[k];
        let g = s.grid();
        let error = if exact_kind {
            let ex = exact_solution(g, &cfg.initial, s.t)?.expect("closed form exists");
            max_diff(&s.z, &ex.z).max(max_diff(&s.p, &ex.p))
        } else {
            let f = &finals[k + 1];
            max_diff(&s.z, &restrict(&f.z, g)).max(max_diff(&s.p, &restrict(&f.p, g)))
        };
        let order = match rows.last() {
            Some(ConvergeRow { error: prev, .. }) if *prev > 0.0 && error > 0.0 => Some(convergence_order(*prev, error)?),
            _ => None,
        };
        rows.push(ConvergeRow {
            level: k,
            n: g.n().to_vec(),
            dx: g.dx()[0],
            error,
            order,
        });
    }
    Ok(ConvergeTable {
        reference: if exact_kind { "exact" } else { "self" }.into(),
        rows,
    })
}

pub fn format_table(t: &ConvergeTable) -> String {
    let mut out = format!("# reference: {}\nlevel  n          dx                error                    order\n", t.reference);
    for r in &t.rows {
        let n: Vec<String> = r.n.iter().map(|k| k.to_string()).collect();
        let order = r.order.map_or("-".to_string(), |o| format!("{o:.4}"));
        let _ = writeln!(out, "{:<6} {:<10} {:<20e} {:<24e} {}", r.level, n.join("x"), r.dx, r.error, order);
    }
    out
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(name = "brane-lab", about = "Evolution and conservation-law diagnostics for the membrane graph equation")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve a configured experiment; write snapshots, diagnostics.csv and run.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the charges of one snapshot as JSON.
    Charges {
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Conservation residuals for the equally spaced snapshot triples of a run directory.
    Residuals {
        #[arg(long)]
        run: PathBuf,
    },
    /// Characteristic speeds and Riemann invariants of a one-dimensional snapshot.
    Characteristics {
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Refinement study with observed orders.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Compare the second-order and the conservative solver on the same data.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        levels: usize,
    },
}

/// Machine-readable one-line error.
pub fn error_json(e: &LabError) -> String {
    serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    })
    .to_string()
}

#[derive(Debug, Serialize)]
struct FailureInfo {
    kind: &'static str,
    message: String,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    scheme: Scheme,
    dt: f64,
    snapshots: usize,
    t_final: f64,
    completed: bool,
    failure: Option<FailureInfo>,
}

pub fn snapshot_name(k: usize) -> String {
    format!("snapshot_{k:05}.json")
}

/// Writes snapshots, `diagnostics.csv` and `run.json` of a (possibly partial) run.
pub fn write_run(dir: &Path, rec: &RunRecord) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (k, s) in rec.snapshots.iter().enumerate() {
        write_snapshot(s, &dir.join(snapshot_name(k)))?;
    }
    let m = rec.last().m();
    write_atomic(&dir.join("diagnostics.csv"), diagnostics_csv(m, &rec.diagnostics)?.as_bytes())?;
    let summary = RunSummary {
        scheme: rec.scheme,
        dt: rec.dt,
        snapshots: rec.snapshots.len(),
        t_final: rec.last().t,
        completed: rec.completed(),
        failure: rec.failure.as_ref().map(|e| FailureInfo {
            kind: e.kind(),
            message: e.to_string(),
        }),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_atomic(&dir.join("run.json"), text.as_bytes())
}

/// Snapshot files of a run directory in time order.
pub fn read_run(dir: &Path) -> Result<Vec<FieldState>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("snapshot_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    let mut out: Vec<FieldState> = paths.iter().map(|p| read_snapshot(p)).collect::<Result<_>>()?;
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

#[derive(Debug, Serialize)]
struct CharacteristicsSummary {
    t: f64,
    lambda_plus: [f64; 2],
    lambda_minus: [f64; 2],
    r_plus: [f64; 2],
    r_minus: [f64; 2],
    min_speed_gap: f64,
    max_abs_speed: f64,
}

fn range(l: &ScalarLattice) -> [f64; 2] {
    [l.min(), l.max()]
}

#[derive(Debug, Serialize)]
struct CompareOutput {
    levels: Vec<CrossReport>,
    /// Ratio of consecutive maximum differences.
    ratios: Vec<f64>,
}

fn print_json(v: &impl Serialize) {
    println!("{}", serde_json::to_string(v).expect("output serializes"));
}

fn run_command(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Simulate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let init = cfg.initial_state()?;
            let rec = simulate_with(&init, &cfg.solver_config(), RunOptions::default())?;
            write_run(&out, &rec)?;
            if let Some(e) = &rec.failure {
                return Err(e.clone());
            }
            print_json(&serde_json::json!({
                "snapshots": rec.snapshots.len(),
                "t_final": rec.last().t,
                "dt": rec.dt,
            }));
        }
        Command::Charges { snapshot } => {
            let s = read_snapshot(&snapshot)?;
            print_json(&charges_with(&s, crate::field::DEFAULT_GAMMA_MIN, crate::charges::DEFAULT_BOUNDARY_TOL)?);
        }
        Command::Residuals { run } => {
            let states = read_run(&run)?;
            let mut reports = Vec::new();
            for w in states.windows(3) {
                if spacing(&w[0], &w[1], &w[2]).is_ok() {
                    reports.push(residual_report(
                        &w[0],
                        &w[1],
                        &w[2],
                        crate::field::DEFAULT_GAMMA_MIN,
                        crate::charges::DEFAULT_BOUNDARY_TOL,
                    )?);
                }
            }
            if reports.is_empty() {
                return Err(LabError::InsufficientSamples {
                    needed: 3,
                    got: states.len(),
                });
            }
            print_json(&reports);
        }
        Command::Characteristics { snapshot } => {
            let s = read_snapshot(&snapshot)?;
            let ps = hyper1d::to_primitive(&s, DIAGNOSTIC_ORDER)?;
            let cd = hyper1d::riemann_invariants(&ps);
            let gap = cd.lambda_plus.zip_map(&cd.lambda_minus, |a, b| a - b).min();
            print_json(&CharacteristicsSummary {
                t: s.t,
                lambda_plus: range(&cd.lambda_plus),
                lambda_minus: range(&cd.lambda_minus),
                r_plus: range(&cd.r_plus),
                r_minus: range(&cd.r_minus),
                min_speed_gap: gap,
                max_abs_speed: hyper1d::max_abs_speed(&ps),
            });
        }
        Command::Converge { config, levels } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", format_table(&converge(&cfg, levels)?));
        }
        Command::Compare { config, levels } => {
            let cfg = ExperimentConfig::load(&config)?;
            if levels == 0 {
                return Err(LabError::Config("levels must be at least 1".into()));
            }
            let mut reps = Vec::new();
            for k in 0..levels {
                let c = cfg.refined(k as u32);
                reps.push(cross_validate(&c.initial_state()?, &c.solver_config())?);
            }
            let ratios = reps.windows(2).map(|w| w[0].max_diff() / w[1].max_diff()).collect();
            print_json(&CompareOutput { levels: reps, ratios });
        }
    }
    Ok(0)
}

/// Entry point of the command line tool; returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = LabError::Config(e.to_string().lines().next().unwrap_or("invalid arguments").to_string());
            eprintln!("{}", error_json(&err));
            return err.exit_code();
        }
    };
    match run_command(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}

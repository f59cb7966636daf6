//! The dynamical state `(z, p = ∂_t z)`, its spacetime gradient and the
//! library of initial data.
//!
//! Index conventions used throughout the crate: lower-index gradient
//! `z_α = (p, ∂_1 z, …, ∂_M z)`, upper-index `z^α = (p, −∂_1 z, …, −∂_M z)`
//! with the metric `η = diag(1, −1, …, −1)`. Then
//! `Γ = 1 − z^γ z_γ = 1 − p² + |∇z|²`, and `Γ > 0` means the world-volume is timelike.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{deriv1, Grid, ScalarLattice, StencilOrder};

pub const DEFAULT_GAMMA_MIN: f64 = 1e-8;

/// Height field and its time derivative on a periodic grid at time `t`.
///
/// `slope` is a constant background gradient: the full height is
/// `z(x) + slope · x`, with `z` periodic. It is zero except for tilted uniform data.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub(crate) grid: Arc<Grid>,
    pub t: f64,
    pub z: ScalarLattice,
    pub p: ScalarLattice,
    pub slope: Vec<f64>,
}

impl FieldState {
    pub fn new(t: f64, z: ScalarLattice, p: ScalarLattice) -> Result<Self> {
        let m = z.grid().m();
        FieldState::with_slope(t, z, p, vec![0.0; m])
    }

    pub fn with_slope(t: f64, z: ScalarLattice, p: ScalarLattice, slope: Vec<f64>) -> Result<Self> {
        if z.grid() != p.grid() {
            return Err(LabError::GridMismatch("z and p live on different grids".into()));
        }
        let grid = z.grid().clone();
        if slope.len() != grid.m() {
            return Err(LabError::GridMismatch(format!(
                "slope has {} entries for m={}",
                slope.len(),
                grid.m()
            )));
        }
        if !t.is_finite() {
            return Err(LabError::NonFinite { what: "time", index: 0 });
        }
        if let Some(index) = slope.iter().position(|s| !s.is_finite()) {
            return Err(LabError::NonFinite { what: "slope", index });
        }
        if let Some(index) = z.first_non_finite() {
            return Err(LabError::NonFinite { what: "z", index });
        }
        if let Some(index) = p.first_non_finite() {
            return Err(LabError::NonFinite { what: "p", index });
        }
        Ok(FieldState {
            grid,
            t,
            z,
            p,
            slope,
        })
    }

    pub fn vacuum(grid: Arc<Grid>) -> Self {
        let m = grid.m();
        FieldState {
            z: ScalarLattice::zeros(grid.clone()),
            p: ScalarLattice::zeros(grid.clone()),
            grid,
            t: 0.0,
            slope: vec![0.0; m],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.grid.m()
    }

    pub fn has_slope(&self) -> bool {
        self.slope.iter().any(|&s| s != 0.0)
    }

    /// Full height `z + slope · x` at a lattice point.
    pub fn height(&self, flat: usize) -> f64 {
        let mut h = self.z.values()[flat];
        for (axis, &s) in self.slope.iter().enumerate() {
            if s != 0.0 {
                h += s * self.grid.coord(axis, self.grid.axis_index(flat, axis));
            }
        }
        h
    }

    /// Spatial gradient `∂_axis z`, including the background slope.
    pub fn spatial_gradient(&self, axis: usize, order: StencilOrder) -> ScalarLattice {
        let d = deriv1(&self.z, axis, order);
        let s = self.slope[axis];
        if s == 0.0 {
            d
        } else {
            d.map(|v| v + s)
        }
    }

    /// Time-reversed slice `(z, −p)`.
    pub fn time_reversed(&self) -> FieldState {
        FieldState {
            p: self.p.map(|v| -v),
            ..self.clone()
        }
    }
}

/// Pointwise `Γ = 1 − zt² + Σ zx_i²`, accumulated in a fixed order.
#[inline]
pub fn gamma_of(zt: f64, zx: &[f64]) -> f64 {
    let mut g = 1.0 - zt * zt;
    for &d in zx {
        g += d * d;
    }
    g
}

/// Spacetime gradient of the height, plus `Γ` and `√Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub t: f64,
    pub zt: ScalarLattice,
    pub zx: Vec<ScalarLattice>,
    pub gamma: ScalarLattice,
    pub sqrt_gamma: ScalarLattice,
}

impl GradientField {
    /// Assembles a gradient field from its components, enforcing `Γ ≥ gamma_min`.
    pub fn from_parts(t: f64, zt: ScalarLattice, zx: Vec<ScalarLattice>, gamma_min: f64) -> Result<Self> {
        let grid = zt.grid().clone();
        if zx.len() != grid.m() || zx.iter().any(|d| d.grid() != &grid) {
            return Err(LabError::GridMismatch("gradient components disagree".into()));
        }
        for (what, l) in std::iter::once(("zt", &zt)).chain(zx.iter().map(|d| ("zx", d))) {
            if let Some(index) = l.first_non_finite() {
                return Err(LabError::NonFinite { what, index });
            }
        }
        let mut scratch = vec![0.0; zx.len()];
        let gamma_vals: Vec<f64> = (0..grid.len())
            .map(|i| {
                for (s, d) in scratch.iter_mut().zip(&zx) {
                    *s = d.values()[i];
                }
                gamma_of(zt.values()[i], &scratch)
            })
            .collect();
        check_gamma(t, &gamma_vals, gamma_min)?;
        let gamma = ScalarLattice::from_raw(grid.clone(), gamma_vals);
        let sqrt_gamma = gamma.map(f64::sqrt);
        Ok(GradientField {
            t,
            zt,
            zx,
            gamma,
            sqrt_gamma,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.zt.grid()
    }

    pub fn m(&self) -> usize {
        self.zx.len()
    }

    /// Lower-index component `z_α` at a lattice point.
    #[inline]
    pub fn lower(&self, alpha: usize, i: usize) -> f64 {
        if alpha == 0 {
            self.zt.values()[i]
        } else {
            self.zx[alpha - 1].values()[i]
        }
    }

    /// Upper-index component `z^α` at a lattice point.
    #[inline]
    pub fn upper(&self, alpha: usize, i: usize) -> f64 {
        if alpha == 0 {
            self.zt.values()[i]
        } else {
            -self.zx[alpha - 1].values()[i]
        }
    }
}

fn check_gamma(t: f64, gamma: &[f64], gamma_min: f64) -> Result<()> {
    let (index, gmin) = gamma
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| {
            // NaN compares false and is caught below.
            if v < bv || v.is_nan() && !bv.is_nan() {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    if gmin.is_nan() || gmin < gamma_min {
        return Err(LabError::DegenerateEvolution {
            t,
            index,
            gamma: gmin,
            guard: gamma_min,
        });
    }
    Ok(())
}

/// Gradient with the default degeneracy guard.
pub fn gradients(s: &FieldState, order: StencilOrder) -> Result<GradientField> {
    gradients_guarded(s, order, DEFAULT_GAMMA_MIN)
}

pub fn gradients_guarded(s: &FieldState, order: StencilOrder, gamma_min: f64) -> Result<GradientField> {
    let zx = (0..s.m()).map(|axis| s.spatial_gradient(axis, order)).collect();
    GradientField::from_parts(s.t, s.p.clone(), zx, gamma_min)
}

/// `Γ` on the lattice without any guard.
pub fn gamma_field(s: &FieldState, order: StencilOrder) -> ScalarLattice {
    let zx: Vec<ScalarLattice> = (0..s.m()).map(|a| s.spatial_gradient(a, order)).collect();
    let mut scratch = vec![0.0; zx.len()];
    let vals = (0..s.grid().len())
        .map(|i| {
            for (v, d) in scratch.iter_mut().zip(&zx) {
                *v = d.values()[i];
            }
            gamma_of(s.p.values()[i], &scratch)
        })
        .collect();
    ScalarLattice::from_raw(s.grid().clone(), vals)
}

/// Minimum of `Γ` over the lattice (fourth-order gradients). Never fails.
pub fn degeneracy_margin(s: &FieldState) -> f64 {
    gamma_field(s, StencilOrder::Fourth).min()
}

/// Kinds of initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Vacuum,
    Uniform,
    Gaussian,
    Traveling,
    Superposed,
    RandomBandlimited,
}

/// Parameters of the initial slice. Unused fields are ignored by each kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub kind: InitialKind,
    /// Bump height; slope for `uniform`; field scale for `random_bandlimited`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default)]
    pub center: Vec<f64>,
    /// `p` for `uniform`; for `gaussian`, the initial profile translation speed along axis 0.
    #[serde(default)]
    pub velocity: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_width() -> f64 {
    0.5
}

impl InitialSpec {
    pub fn new(kind: InitialKind) -> Self {
        InitialSpec {
            kind,
            amplitude: None,
            width: default_width(),
            center: Vec::new(),
            velocity: 0.0,
            seed: 0,
        }
    }

    pub fn amplitude(mut self, a: f64) -> Self {
        self.amplitude = Some(a);
        self
    }

    pub fn width(mut self, w: f64) -> Self {
        self.width = w;
        self
    }

    pub fn center(mut self, c: Vec<f64>) -> Self {
        self.center = c;
        self
    }

    pub fn velocity(mut self, v: f64) -> Self {
        self.velocity = v;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn amplitude_or_default(&self) -> f64 {
        self.amplitude.unwrap_or(match self.kind {
            InitialKind::Uniform | InitialKind::Vacuum => 0.0,
            InitialKind::RandomBandlimited => 0.5,
            _ => 0.1,
        })
    }

    fn center_or_origin(&self, m: usize) -> Result<Vec<f64>> {
        match self.center.len() {
            0 => Ok(vec![0.0; m]),
            k if k == m => Ok(self.center.clone()),
            k => Err(LabError::Config(format!("center has {k} entries for m={m}"))),
        }
    }
}

/// Periodized gaussian `A·exp(−(x−c)²/w²)` on a line of period `period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianProfile {
    pub amplitude: f64,
    pub width: f64,
    pub center: f64,
    pub period: f64,
}

impl GaussianProfile {
    const IMAGES: i32 = 2;

    fn images(&self, x: f64) -> impl Iterator<Item = f64> + '_ {
        (-Self::IMAGES..=Self::IMAGES).map(move |k| (x - self.center + k as f64 * self.period) / self.width)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.amplitude * self.images(x).map(|s| (-s * s).exp()).sum::<f64>()
    }

    pub fn d1(&self, x: f64) -> f64 {
        let a = self.amplitude / self.width;
        a * self.images(x).map(|s| -2.0 * s * (-s * s).exp()).sum::<f64>()
    }

    pub fn d2(&self, x: f64) -> f64 {
        let a = self.amplitude / (self.width * self.width);
        a * self.images(x).map(|s| (4.0 * s * s - 2.0) * (-s * s).exp()).sum::<f64>()
    }
}

/// Builds the initial slice at `t = 0`.
pub fn make_initial(g: &Arc<Grid>, spec: &InitialSpec) -> Result<FieldState> {
    let m = g.m();
    let amp = spec.amplitude_or_default();
    if !amp.is_finite() || !spec.velocity.is_finite() {
        return Err(LabError::Config("amplitude and velocity must be finite".into()));
    }
    if !(spec.width.is_finite() && spec.width > 0.0) {
        return Err(LabError::Config(format!("width must be positive, got {}", spec.width)));
    }
    let state = match spec.kind {
        InitialKind::Vacuum => FieldState::vacuum(g.clone()),
        InitialKind::Uniform => {
            let mut slope = vec![0.0; m];
            slope[0] = amp;
            FieldState::with_slope(
                0.0,
                ScalarLattice::zeros(g.clone()),
                ScalarLattice::constant(g.clone(), spec.velocity)?,
                slope,
            )?
        }
        InitialKind::Gaussian => {
            let c = spec.center_or_origin(m)?;
            let profiles: Vec<GaussianProfile> = (0..m)
                .map(|axis| GaussianProfile {
                    amplitude: 1.0,
                    width: spec.width,
                    center: c[axis],
                    period: g.length()[axis],
                })
                .collect();
            // Separable: exp(−|x−c|²/w²) = Π_axis exp(−(x_a−c_a)²/w²).
            let z = ScalarLattice::from_fn(g.clone(), |x| {
                amp * profiles.iter().zip(x).map(|(pr, &xa)| pr.value(xa)).product::<f64>()
            })?;
            let v = spec.velocity;
            let p = ScalarLattice::from_fn(g.clone(), |x| {
                let mut dz = amp * profiles[0].d1(x[0]);
                for (pr, &xa) in profiles.iter().zip(x).skip(1) {
                    dz *= pr.value(xa);
                }
                -v * dz
            })?;
            FieldState::new(0.0, z, p)?
        }
        InitialKind::Traveling => {
            require_line(m, "traveling")?;
            let f = GaussianProfile {
                amplitude: amp,
                width: spec.width,
                center: spec.center_or_origin(1)?[0],
                period: g.length()[0],
            };
            let z = ScalarLattice::from_fn(g.clone(), |x| f.value(x[0]))?;
            let p = ScalarLattice::from_fn(g.clone(), |x| -f.d1(x[0]))?;
            FieldState::new(0.0, z, p)?
        }
        InitialKind::Superposed => {
            require_line(m, "superposed")?;
            let c = spec.center_or_origin(1)?[0];
            let l = g.length()[0];
            let right = GaussianProfile {
                amplitude: amp,
                width: spec.width,
                center: c - 0.25 * l,
                period: l,
            };
            let left = GaussianProfile {
                center: c + 0.25 * l,
                ..right
            };
            let z = ScalarLattice::from_fn(g.clone(), |x| right.value(x[0]) + left.value(x[0]))?;
            let p = ScalarLattice::from_fn(g.clone(), |x| -right.d1(x[0]) + left.d1(x[0]))?;
            FieldState::new(0.0, z, p)?
        }
        InitialKind::RandomBandlimited => random_bandlimited(g, amp, spec.seed)?,
    };
    let margin = degeneracy_margin(&state);
    if !(margin > DEFAULT_GAMMA_MIN) {
        let gamma = gamma_field(&state, StencilOrder::Fourth);
        let index = gamma
            .values()
            .iter()
            .position(|&v| !(v > DEFAULT_GAMMA_MIN))
            .unwrap_or(0);
        return Err(LabError::DegenerateEvolution {
            t: 0.0,
            index,
            gamma: margin,
            guard: DEFAULT_GAMMA_MIN,
        });
    }
    Ok(state)
}

fn require_line(m: usize, kind: &str) -> Result<()> {
    if m != 1 {
        return Err(LabError::Config(format!("initial kind '{kind}' requires m=1, got m={m}")));
    }
    Ok(())
}

/// Largest `|p|` allowed in random data; keeps `Γ ≥ 1 − 0.7² = 0.51`.
const RANDOM_P_CAP: f64 = 0.7;

fn random_bandlimited(g: &Arc<Grid>, amplitude: f64, seed: u64) -> Result<FieldState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<Vec<i32>> = match g.m() {
        1 => (1..=6).map(|k| vec![k]).collect(),
        _ => {
            let mut v = Vec::new();
            for k0 in 0..=4 {
                for k1 in -4..=4 {
                    if k0 == 0 && k1 <= 0 {
                        continue;
                    }
                    v.push(vec![k0, k1]);
                }
            }
            v
        }
    };
    let draw = |rng: &mut ChaCha8Rng| -> Vec<(f64, f64)> {
        modes
            .iter()
            .map(|k| {
                let k2: i32 = k.iter().map(|j| j * j).sum();
                let damp = 1.0 / k2 as f64;
                (rng.gen_range(-1.0..1.0) * damp, rng.gen_range(-1.0..1.0) * damp)
            })
            .collect()
    };
    let cz = draw(&mut rng);
    let cp = draw(&mut rng);
    let length = g.length().to_vec();
    let synth = |coef: &[(f64, f64)]| {
        ScalarLattice::from_fn(g.clone(), |x| {
            modes
                .iter()
                .zip(coef)
                .map(|(k, &(a, b))| {
                    let phase: f64 = k
                        .iter()
                        .zip(x)
                        .zip(&length)
                        .map(|((&j, &xa), &l)| 2.0 * PI * j as f64 * xa / l)
                        .sum();
                    a * phase.cos() + b * phase.sin()
                })
                .sum()
        })
    };
    let z = synth(&cz)?;
    let p = synth(&cp)?;
    let zs = amplitude / z.max_abs().max(f64::MIN_POSITIVE);
    let ps = amplitude.abs().min(RANDOM_P_CAP) / p.max_abs().max(f64::MIN_POSITIVE);
    FieldState::new(0.0, z.map(|v| v * zs), p.map(|v| v * ps))
}

//! Well- and ill-prepared initial data and their lifting to the layer.
//!
//! Profiles are finite cosine sums about the domain centre, multiplied by
//! a `cos^p` window supported in a central box. The incompressible
//! velocity is built from a windowed streamfunction, `v0 = grad_perp(w chi)`,
//! so it is solenoidal and compactly supported at once.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acoustic2d::{regularize, AcousticState2D, RegularizationParams};
use crate::compressible3d::FluidState3D;
use crate::domain::{Grid2D, Grid3D, HorizontalBox, ScalarField2D, ScalarField3D, VectorField2D, VectorField3D};
use crate::error::{Error, Result};
use crate::incompressible2d::IncompressibleState2D;
use crate::pressure::PressureLaw;
use crate::spectral::{gradient, perp_gradient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    WellPrepared,
    IllPrepared,
}

/// `amplitude * cos(k . (x - centre) + phase)` with `k` a physical wavenumber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileMode {
    pub k: [f64; 2],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl ProfileMode {
    pub fn new(k: [f64; 2], amplitude: f64, phase: f64) -> Self {
        Self { k, amplitude, phase }
    }
}

fn eval_modes(modes: &[ProfileMode], y: [f64; 2]) -> f64 {
    modes.iter().map(|m| m.amplitude * (m.k[0] * y[0] + m.k[1] * y[1] + m.phase).cos()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataRecipe {
    pub kind: DataKind,
    /// Streamfunction of `v0` before windowing.
    #[serde(default)]
    pub stream: Vec<ProfileMode>,
    #[serde(default)]
    pub s0: Vec<ProfileMode>,
    #[serde(default)]
    pub psi0: Vec<ProfileMode>,
    /// Side of the support box relative to the period.
    #[serde(default = "DataRecipe::default_support_fraction")]
    pub support_fraction: f64,
    /// Exponent `p` of the `cos^p` window; even, at least 2.
    #[serde(default = "DataRecipe::default_window_power")]
    pub window_power: u32,
}

impl DataRecipe {
    fn default_support_fraction() -> f64 {
        0.5
    }

    fn default_window_power() -> u32 {
        4
    }

    pub fn rest() -> Self {
        Self::well_prepared(Vec::new())
    }

    pub fn well_prepared(stream: Vec<ProfileMode>) -> Self {
        Self {
            kind: DataKind::WellPrepared,
            stream,
            s0: Vec::new(),
            psi0: Vec::new(),
            support_fraction: Self::default_support_fraction(),
            window_power: Self::default_window_power(),
        }
    }

    pub fn ill_prepared(stream: Vec<ProfileMode>, s0: Vec<ProfileMode>, psi0: Vec<ProfileMode>) -> Self {
        Self { kind: DataKind::IllPrepared, s0, psi0, ..Self::well_prepared(stream) }
    }

    /// Windowed shear `v0 = (sin(x2 - c), 0)` inside the support box.
    pub fn shear(amplitude: f64, k: f64) -> Self {
        Self::well_prepared(vec![ProfileMode::new([0.0, k], amplitude / k, 0.0)])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.support_fraction > 0.0 && self.support_fraction <= 1.0) {
            return Err(Error::Config(format!("support_fraction must lie in (0, 1], got {}", self.support_fraction)));
        }
        if self.window_power < 2 || self.window_power % 2 != 0 {
            return Err(Error::Config(format!("window_power must be even and >= 2, got {}", self.window_power)));
        }
        let finite = |m: &ProfileMode| m.k.iter().chain([&m.amplitude, &m.phase]).all(|v| v.is_finite());
        if !self.stream.iter().chain(&self.s0).chain(&self.psi0).all(finite) {
            return Err(Error::Config("non-finite profile mode".into()));
        }
        if self.kind == DataKind::WellPrepared && self.s0.iter().chain(&self.psi0).any(|m| m.amplitude != 0.0) {
            return Err(Error::Config("well-prepared data must not carry s0 or psi0".into()));
        }
        Ok(())
    }

    pub fn window(&self, length: f64) -> Window {
        Window { centre: 0.5 * length, half_width: 0.5 * self.support_fraction * length, power: self.window_power }
    }

    pub fn support_box(&self, length: f64) -> HorizontalBox {
        HorizontalBox::centered(length, self.support_fraction)
    }

    /// Copy with every amplitude scaled by `1 + noise * u`, `u` uniform in
    /// `[-1, 1]`, drawn from a ChaCha stream seeded by `seed`.
    pub fn perturbed(&self, noise: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = |modes: &[ProfileMode]| -> Vec<ProfileMode> {
            modes
                .iter()
                .map(|m| ProfileMode { amplitude: m.amplitude * (1.0 + noise * rng.gen_range(-1.0..=1.0)), ..*m })
                .collect()
        };
        Self { stream: jitter(&self.stream), s0: jitter(&self.s0), psi0: jitter(&self.psi0), ..self.clone() }
    }
}

/// Tensor product of `cos^p(pi r / (2 h))` for `r < h`, zero beyond.
///
/// `C^{p-1}` at the edge. On a 64-cell period with `h = L/4` spectral
/// derivatives leave tails of about `1e-5` (`p = 4`) or `1e-8` (`p = 8`)
/// outside the box; bump functions of the `exp(-1/t)` type leave `1e-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub centre: f64,
    pub half_width: f64,
    pub power: u32,
}

impl Window {
    fn value_1d(&self, x: f64) -> f64 {
        let t = (x - self.centre).abs() / self.half_width;
        if t >= 1.0 {
            0.0
        } else {
            (0.5 * std::f64::consts::PI * t).cos().powi(self.power as i32)
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.value_1d(x[0]) * self.value_1d(x[1])
    }
}

/// Unregularized horizontal profiles.
#[derive(Debug, Clone)]
pub struct Profiles {
    /// Windowed streamfunction.
    pub chi: ScalarField2D,
    pub v0: VectorField2D,
    pub s0: ScalarField2D,
    pub psi0: ScalarField2D,
}

pub fn profiles_2d(recipe: &DataRecipe, grid: Grid2D) -> Result<Profiles> {
    recipe.validate()?;
    let w = recipe.window(grid.length);
    let c = 0.5 * grid.length;
    let field = |modes: &[ProfileMode]| {
        ScalarField2D::from_fn(grid, |x| {
            let wv = w.value(x);
            if wv == 0.0 {
                0.0
            } else {
                wv * eval_modes(modes, [x[0] - c, x[1] - c])
            }
        })
    };
    let chi = field(&recipe.stream)?;
    let v0 = perp_gradient(&chi);
    Ok(Profiles { chi, v0, s0: field(&recipe.s0)?, psi0: field(&recipe.psi0)? })
}

/// Regularized acoustic data `(s_{0,eta}, Psi_{0,eta})` at time 0.
pub fn initial_acoustic_2d(
    recipe: &DataRecipe,
    grid: Grid2D,
    law: &PressureLaw,
    epsilon: f64,
    eta: f64,
) -> Result<AcousticState2D> {
    let p = profiles_2d(recipe, grid)?;
    let reg = RegularizationParams::new(eta)?;
    // s_{0,eta} = (rho/a^2)[(a^2/rho) s0]_eta reduces to [s0]_eta by linearity
    AcousticState2D::new(&regularize(&p.s0, &reg), &regularize(&p.psi0, &reg), epsilon, law)
}

/// Horizontal density and velocity `(rho_tilde + eps s_{0,eta}, v0 + grad Psi_{0,eta})`.
pub fn initial_fields_2d(
    recipe: &DataRecipe,
    grid: Grid2D,
    law: &PressureLaw,
    epsilon: f64,
    eta: f64,
) -> Result<(ScalarField2D, VectorField2D)> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let p = profiles_2d(recipe, grid)?;
    let reg = RegularizationParams::new(eta)?;
    let s = regularize(&p.s0, &reg);
    let rt = law.rho_tilde();
    let smax = s.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if epsilon * smax >= rt {
        return Err(Error::InvalidState(format!(
            "initial density not positive: eps * max|s0| = {:e} >= rho_tilde = {rt}",
            epsilon * smax
        )));
    }
    let rho = s.map(|v| rt + epsilon * v)?;
    let gp = gradient(&regularize(&p.psi0, &reg));
    let u = VectorField2D::new(
        grid,
        [0, 1].map(|c| p.v0.component(c).iter().zip(gp.component(c)).map(|(a, b)| a + b).collect()),
    )?;
    Ok((rho, u))
}

/// `rho = rho_tilde + eps s_{0,eta}`, `m = rho (v0 + grad Psi_{0,eta}, 0)`,
/// constant in `x3`.
pub fn build_initial_3d(
    recipe: &DataRecipe,
    grid: Grid3D,
    law: &PressureLaw,
    epsilon: f64,
    eta: f64,
) -> Result<FluidState3D> {
    let (rho2, u2) = initial_fields_2d(recipe, grid.horizontal(), law, epsilon, eta)?;
    let rho = ScalarField3D::lift(&rho2, grid)?;
    let m = |c: usize| -> Result<Vec<f64>> {
        let mc = ScalarField2D::new(
            grid.horizontal(),
            rho2.values().iter().zip(u2.component(c)).map(|(r, u)| r * u).collect(),
        )?;
        Ok(ScalarField3D::lift(&mc, grid)?.into_values())
    };
    let mom = VectorField3D::new(grid, [m(0)?, m(1)?, vec![0.0; grid.cell_count()]])?;
    FluidState3D::new(rho, mom, 0.0)
}

/// Initial state of the limit system: `v0 = P[u0]`, i.e. the windowed
/// solenoidal part only.
pub fn limit_initial_2d(recipe: &DataRecipe, grid: Grid2D) -> Result<IncompressibleState2D> {
    let p = profiles_2d(recipe, grid)?;
    IncompressibleState2D::from_velocity(&p.v0, 0.0)
}

/// `(1/delta) int mean_members [1/2 rho |m/rho - u0|^2 + eps^-2 H(rho, rho0)]`
/// against the unperturbed recipe data.
pub fn convergence_hypothesis_value(
    members: &[FluidState3D],
    recipe: &DataRecipe,
    law: &PressureLaw,
    epsilon: f64,
    delta: f64,
    eta: f64,
) -> Result<f64> {
    let first = members.first().ok_or(Error::InvalidArgument("empty ensemble".into()))?;
    let grid = *first.grid();
    let (rho0, u0) = initial_fields_2d(recipe, grid.horizontal(), law, epsilon, eta)?;
    let nz = grid.nz;
    let inv_eps2 = 1.0 / (epsilon * epsilon);
    let mut total = 0.0;
    for s in members {
        if *s.grid() != grid {
            return Err(Error::GridMismatch("ensemble members on different grids".into()));
        }
        let m = s.mom.components();
        let mut sum = 0.0;
        for (n, &r) in s.rho.values().iter().enumerate() {
            if !(r > 0.0) {
                return Err(Error::InvalidState(format!("non-positive density at cell {n}")));
            }
            let col = n / nz;
            let du = [m[0][n] / r - u0.component(0)[col], m[1][n] / r - u0.component(1)[col], m[2][n] / r];
            sum += 0.5 * r * (du[0] * du[0] + du[1] * du[1] + du[2] * du[2])
                + inv_eps2 * law.helmholtz(r, rho0.values()[col]);
        }
        total += sum;
    }
    Ok(total / members.len() as f64 * grid.cell_volume() / delta)
}

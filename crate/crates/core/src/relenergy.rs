//! Relative energy of a (possibly ensemble) compressible state with respect
//! to a smooth reference `(r, U)`, the remainder terms of the relative
//! energy inequality, and the uniform-bound diagnostics.
//!
//! ```text
//! E(rho, m | r, U) = (1/delta) int < 1/2 rho |m/rho - U|^2 + eps^-2 H(rho, r) >
//! ```
//!
//! `<.>` is the ensemble mean over members with uniform weights.

use serde::Serialize;

use crate::acoustic2d::AcousticState2D;
use crate::compressible3d::FluidState3D;
use crate::domain::{
    lp_norm, Grid2D, Grid3D, HorizontalBox, ScalarField2D, ScalarField3D, SnapshotSeries, VectorField3D,
};
use crate::error::{Error, Result};
use crate::incompressible2d::{velocity_time_derivative, IncompressibleState2D};
use crate::pressure::{CutoffPsi, PressureLaw};
use crate::spectral::{SpectralField2D, Wavenumbers};

const TIME_TOL: f64 = 1e-12;

/// Empirical surrogate of the Young measure: members sharing grid and time.
#[derive(Debug, Clone)]
pub struct EnsembleMeasure {
    members: Vec<FluidState3D>,
}

impl EnsembleMeasure {
    pub fn new(members: Vec<FluidState3D>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
        for m in &members[1..] {
            if m.grid() != first.grid() {
                return Err(Error::GridMismatch("ensemble members on different grids".into()));
            }
            if (m.time - first.time).abs() > TIME_TOL * first.time.abs().max(1.0) {
                return Err(Error::MisalignedTimes(format!("member at t = {} vs t = {}", m.time, first.time)));
            }
        }
        Ok(Self { members })
    }

    pub fn single(state: FluidState3D) -> Self {
        Self { members: vec![state] }
    }

    pub fn members(&self) -> &[FluidState3D] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn grid(&self) -> &Grid3D {
        self.members[0].grid()
    }

    pub fn time(&self) -> f64 {
        self.members[0].time
    }
}

/// Anything that can be read as a list of equally weighted members.
pub trait Members {
    fn members(&self) -> &[FluidState3D];
}

impl Members for FluidState3D {
    fn members(&self) -> &[FluidState3D] {
        std::slice::from_ref(self)
    }
}

impl Members for EnsembleMeasure {
    fn members(&self) -> &[FluidState3D] {
        &self.members
    }
}

/// Horizontal derivatives of the reference, stored per column.
#[derive(Debug, Clone, PartialEq)]
struct ReferenceDerivatives {
    dt_u: [Vec<f64>; 2],
    /// `grad_u[i][j] = d_j U_i`
    grad_u: [[Vec<f64>; 2]; 2],
    dt_r: Vec<f64>,
    grad_r: [Vec<f64>; 2],
}

impl ReferenceDerivatives {
    fn zeros(n: usize) -> Self {
        let z = || vec![0.0; n];
        Self { dt_u: [z(), z()], grad_u: [[z(), z()], [z(), z()]], dt_r: z(), grad_r: [z(), z()] }
    }
}

/// Smooth reference `(r, U)`, constant in `x3`, with `U3 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePair {
    pub r: ScalarField3D,
    pub u: VectorField3D,
    pub time: f64,
    derivs: Option<ReferenceDerivatives>,
}

impl ReferencePair {
    /// Reference without time/space derivatives; enough for the energy,
    /// not for the remainder.
    pub fn new(r: ScalarField3D, u: VectorField3D, time: f64) -> Result<Self> {
        if r.grid() != u.grid() {
            return Err(Error::GridMismatch("reference density and velocity grids differ".into()));
        }
        if let Some(n) = r.values().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidState(format!("reference density not positive at cell {n}")));
        }
        if u.component(2).iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidArgument("reference velocity must have zero vertical component".into()));
        }
        Ok(Self { r, u, time, derivs: None })
    }

    /// `(rho_tilde, 0)`.
    pub fn rest(grid: Grid3D, law: &PressureLaw, time: f64) -> Self {
        Self {
            r: ScalarField3D::constant(grid, law.rho_tilde()),
            u: VectorField3D::zeros(grid),
            time,
            derivs: Some(ReferenceDerivatives::zeros(grid.column_count())),
        }
    }

    /// `r = rho_tilde + eps s`, `U = (v + grad_h Psi, 0)`. Without an
    /// acoustic state this is the plain `(rho_tilde, V)` reference.
    pub fn from_limit(
        euler: &IncompressibleState2D,
        acoustic: Option<&AcousticState2D>,
        law: &PressureLaw,
        grid: Grid3D,
    ) -> Result<Self> {
        let g2 = grid.horizontal();
        if *euler.grid() != g2 {
            return Err(Error::GridMismatch("limit state grid differs from the horizontal grid".into()));
        }
        let wn = Wavenumbers::new(&g2);
        let v = euler.velocity();
        let dv = velocity_time_derivative(euler);
        let grad = |vals: &[f64]| -> [Vec<f64>; 2] {
            let f = SpectralField2D::from_physical(&ScalarField2D::new(g2, vals.to_vec()).expect("finite"));
            let [a, b] = f.gradient(&wn);
            [a.to_physical().into_values(), b.to_physical().into_values()]
        };
        let mut u = [v.component(0).to_vec(), v.component(1).to_vec()];
        let mut d = ReferenceDerivatives::zeros(g2.cell_count());
        d.dt_u = [dv.component(0).to_vec(), dv.component(1).to_vec()];
        d.grad_u = [grad(v.component(0)), grad(v.component(1))];
        let mut r = vec![law.rho_tilde(); g2.cell_count()];
        if let Some(ac) = acoustic {
            if *ac.grid() != g2 {
                return Err(Error::GridMismatch("acoustic state grid differs from the horizontal grid".into()));
            }
            if (ac.time - euler.time).abs() > TIME_TOL * euler.time.abs().max(1.0) {
                return Err(Error::MisalignedTimes(format!(
                    "acoustic t = {} vs incompressible t = {}",
                    ac.time, euler.time
                )));
            }
            let eps = ac.epsilon();
            let gp = ac.grad_psi();
            let dgp = ac.dt_grad_psi();
            let [h11, h12, h22] = ac.hessian_psi();
            let (h11, h12, h22) = (h11.values(), h12.values(), h22.values());
            let gs = ac.grad_s();
            let dts = ac.dt_s();
            for (n, s) in ac.s().values().iter().enumerate() {
                r[n] += eps * s;
                u[0][n] += gp.component(0)[n];
                u[1][n] += gp.component(1)[n];
                d.dt_u[0][n] += dgp.component(0)[n];
                d.dt_u[1][n] += dgp.component(1)[n];
                d.grad_u[0][0][n] += h11[n];
                d.grad_u[0][1][n] += h12[n];
                d.grad_u[1][0][n] += h12[n];
                d.grad_u[1][1][n] += h22[n];
                d.dt_r[n] = eps * dts.values()[n];
                d.grad_r[0][n] = eps * gs.component(0)[n];
                d.grad_r[1][n] = eps * gs.component(1)[n];
            }
        }
        let lift = |vals: Vec<f64>| ScalarField3D::lift(&ScalarField2D::new(g2, vals)?, grid);
        let r = lift(r)?;
        let [u0, u1] = u;
        let u =
            VectorField3D::new(grid, [lift(u0)?.into_values(), lift(u1)?.into_values(), vec![0.0; grid.cell_count()]])?;
        let mut pair = Self::new(r, u, euler.time)?;
        pair.derivs = Some(d);
        Ok(pair)
    }

    pub fn grid(&self) -> &Grid3D {
        self.r.grid()
    }

    pub fn has_derivatives(&self) -> bool {
        self.derivs.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeEnergyReport {
    pub value: f64,
    pub kinetic_part: f64,
    pub pressure_part: f64,
    pub ess_pressure: f64,
    pub res_pressure: f64,
    /// Filled in by the caller from the run's energy deficit.
    pub dissipation_defect: f64,
    pub time: f64,
}

impl RelativeEnergyReport {
    pub fn with_dissipation(mut self, d: f64) -> Self {
        self.dissipation_defect = d;
        self
    }
}

fn check_scales(grid: &Grid3D, epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0) || (delta - grid.delta).abs() > 1e-12 * delta {
        return Err(Error::InvalidArgument(format!(
            "delta = {delta} does not match the layer thickness {} of the grid",
            grid.delta
        )));
    }
    Ok(())
}

fn column_mask(grid: &Grid3D, restrict_to: Option<&HorizontalBox>) -> Vec<bool> {
    let g2 = grid.horizontal();
    let mut mask = vec![true; g2.cell_count()];
    if let Some(b) = restrict_to {
        for j in 0..g2.ny {
            for i in 0..g2.nx {
                mask[g2.index(i, j)] = b.contains(g2.center(i, j));
            }
        }
    }
    mask
}

/// Cell-sum relative energy, ensemble-averaged, optionally restricted to
/// the columns whose centres lie in a horizontal box.
pub fn relative_energy<S: Members + ?Sized>(
    state: &S,
    reference: &ReferencePair,
    law: &PressureLaw,
    epsilon: f64,
    delta: f64,
    restrict_to: Option<&HorizontalBox>,
) -> Result<RelativeEnergyReport> {
    let members = state.members();
    let grid = *reference.grid();
    check_scales(&grid, epsilon, delta)?;
    let mask = column_mask(&grid, restrict_to);
    let psi = CutoffPsi::new(law.rho_tilde());
    let inv_eps2 = 1.0 / (epsilon * epsilon);
    let (r, u) = (reference.r.values(), reference.u.components());
    let (mut kin, mut ess, mut res) = (0.0, 0.0, 0.0);
    for s in members {
        if *s.grid() != grid {
            return Err(Error::GridMismatch("state and reference grids differ".into()));
        }
        let m = s.mom.components();
        for (n, &rho) in s.rho.values().iter().enumerate() {
            if !mask[n / grid.nz] {
                continue;
            }
            if !(rho > 0.0) {
                return Err(Error::InvalidState(format!("non-positive density {rho} at cell {n}")));
            }
            let du = [m[0][n] / rho - u[0][n], m[1][n] / rho - u[1][n], m[2][n] / rho - u[2][n]];
            kin += 0.5 * rho * (du[0] * du[0] + du[1] * du[1] + du[2] * du[2]);
            let h = inv_eps2 * law.helmholtz(rho, r[n]);
            let hr = h - psi.value(rho) * h;
            ess += h - hr;
            res += hr;
        }
    }
    let w = grid.cell_volume() / (delta * members.len() as f64);
    let (kinetic_part, ess_pressure, res_pressure) = (kin * w, ess * w, res * w);
    let pressure_part = ess_pressure + res_pressure;
    Ok(RelativeEnergyReport {
        value: kinetic_part + pressure_part,
        kinetic_part,
        pressure_part,
        ess_pressure,
        res_pressure,
        dissipation_defect: 0.0,
        time: members[0].time,
    })
}

/// `(1/delta) R1` and `(1/delta) R2` sampled at the snapshot times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemainderSeries {
    pub times: Vec<f64>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
}

impl RemainderSeries {
    /// Trapezoidal `int_0^{t_n} (R1 + R2)` at every sample.
    pub fn cumulative_integral(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.times.len()];
        for n in 1..self.times.len() {
            let f0 = self.r1[n - 1] + self.r2[n - 1];
            let f1 = self.r1[n] + self.r2[n];
            acc[n] = acc[n - 1] + 0.5 * (self.times[n] - self.times[n - 1]) * (f0 + f1);
        }
        acc
    }
}

/// Remainder of the relative energy inequality at one time:
///
/// ```text
/// R1 = int <(d_t U + (m/rho) . grad U) . (rho U - m)>
/// R2 = eps^-2 int <(r - rho) d_t P'(r) - p(rho) div U - m . grad P'(r)>
/// ```
///
/// The concentration term is zero for finite ensembles.
pub fn remainder_at<S: Members + ?Sized>(
    state: &S,
    reference: &ReferencePair,
    law: &PressureLaw,
    epsilon: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    let members = state.members();
    let grid = *reference.grid();
    check_scales(&grid, epsilon, delta)?;
    let d = reference.derivs.as_ref().ok_or(Error::DerivativeUnavailable(1))?;
    let t = members[0].time;
    if (t - reference.time).abs() > TIME_TOL * t.abs().max(1.0) {
        return Err(Error::MisalignedTimes(format!("state t = {t} vs reference t = {}", reference.time)));
    }
    let nz = grid.nz;
    let ncol = grid.column_count();
    // column-wise d_t P'(r), grad P'(r) and div U
    let mut dtp = vec![0.0; ncol];
    let mut gp = [vec![0.0; ncol], vec![0.0; ncol]];
    let mut div = vec![0.0; ncol];
    for c in 0..ncol {
        let rc = reference.r.values()[c * nz];
        let p2 = law.d2potential(rc);
        dtp[c] = p2 * d.dt_r[c];
        gp[0][c] = p2 * d.grad_r[0][c];
        gp[1][c] = p2 * d.grad_r[1][c];
        div[c] = d.grad_u[0][0][c] + d.grad_u[1][1][c];
    }
    let (r, u) = (reference.r.values(), reference.u.components());
    let (mut r1, mut r2) = (0.0, 0.0);
    for s in members {
        if *s.grid() != grid {
            return Err(Error::GridMismatch("state and reference grids differ".into()));
        }
        let m = s.mom.components();
        for (n, &rho) in s.rho.values().iter().enumerate() {
            if !(rho > 0.0) {
                return Err(Error::InvalidState(format!("non-positive density {rho} at cell {n}")));
            }
            let c = n / nz;
            let vel = [m[0][n] / rho, m[1][n] / rho];
            for i in 0..2 {
                let a = d.dt_u[i][c] + vel[0] * d.grad_u[i][0][c] + vel[1] * d.grad_u[i][1][c];
                r1 += a * (rho * u[i][n] - m[i][n]);
            }
            r2 += (r[n] - rho) * dtp[c] - law.pressure(rho) * div[c] - (m[0][n] * gp[0][c] + m[1][n] * gp[1][c]);
        }
    }
    let w = grid.cell_volume() / (delta * members.len() as f64);
    Ok((r1 * w, r2 * w / (epsilon * epsilon)))
}

/// [`remainder_at`] along a run; reference times must match snapshot times.
pub fn remainder_terms(
    states: &SnapshotSeries<FluidState3D>,
    references: &[ReferencePair],
    law: &PressureLaw,
    epsilon: f64,
    delta: f64,
) -> Result<RemainderSeries> {
    if states.len() != references.len() {
        return Err(Error::MisalignedTimes(format!(
            "{} snapshots vs {} reference samples",
            states.len(),
            references.len()
        )));
    }
    let mut out = RemainderSeries { times: Vec::new(), r1: Vec::new(), r2: Vec::new() };
    for ((t, s), reference) in states.iter().zip(references) {
        let (a, b) = remainder_at(s, reference, law, epsilon, delta)?;
        out.times.push(t);
        out.r1.push(a);
        out.r2.push(b);
    }
    Ok(out)
}

/// Discrete counterparts of the uniform bounds, all vertically averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// `(1/delta) int <1/2 |m|^2/rho + eps^-2 H(rho, rho_tilde)>`
    pub energy: f64,
    /// `|| <[m]_ess>^bar ||_2 + || <[m]_res>^bar ||_{2 gamma/(gamma+1)}`
    pub mbar_norm: f64,
    /// `|| <[(rho - rho_tilde)/eps]_ess>^bar ||_2`
    pub rho_ess_norm: f64,
    /// `eps^{-2/gamma} || <[rho]_res>^bar ||_gamma`
    pub rho_res_norm: f64,
    /// The field behind `rho_res_norm`, per column.
    pub rho_res: ScalarField2D,
}

pub fn uniform_bound_report<S: Members + ?Sized>(
    state: &S,
    law: &PressureLaw,
    epsilon: f64,
    delta: f64,
    psi: &CutoffPsi,
) -> Result<BoundReport> {
    let members = state.members();
    let grid = *members[0].grid();
    check_scales(&grid, epsilon, delta)?;
    let g2: Grid2D = grid.horizontal();
    let (nz, ncol) = (grid.nz, grid.column_count());
    let rt = law.rho_tilde();
    let gamma = law.gamma();
    let mut energy = 0.0;
    let mut m_ess = [vec![0.0; ncol], vec![0.0; ncol], vec![0.0; ncol]];
    let mut m_res = m_ess.clone();
    let mut rho_ess = vec![0.0; ncol];
    let mut rho_res = vec![0.0; ncol];
    let inv_eps2 = 1.0 / (epsilon * epsilon);
    for s in members {
        if *s.grid() != grid {
            return Err(Error::GridMismatch("ensemble members on different grids".into()));
        }
        let m = s.mom.components();
        for (n, &rho) in s.rho.values().iter().enumerate() {
            if !(rho > 0.0) {
                return Err(Error::InvalidState(format!("non-positive density {rho} at cell {n}")));
            }
            let c = n / nz;
            let w = psi.value(rho);
            let m2 = m[0][n] * m[0][n] + m[1][n] * m[1][n] + m[2][n] * m[2][n];
            energy += 0.5 * m2 / rho + inv_eps2 * law.helmholtz(rho, rt);
            for k in 0..3 {
                m_ess[k][c] += w * m[k][n];
                m_res[k][c] += (1.0 - w) * m[k][n];
            }
            rho_ess[c] += w * (rho - rt) / epsilon;
            rho_res[c] += (1.0 - w) * rho;
        }
    }
    let avg = 1.0 / (nz * members.len()) as f64;
    let scale_res = epsilon.powf(-2.0 / gamma) * avg;
    let mag = |f: &[Vec<f64>; 3], c: usize| (f[0][c].powi(2) + f[1][c].powi(2) + f[2][c].powi(2)).sqrt() * avg;
    let area = g2.cell_area();
    let mbar_norm = lp_norm((0..ncol).map(|c| mag(&m_ess, c)), area, 2.0)
        + lp_norm((0..ncol).map(|c| mag(&m_res, c)), area, 2.0 * gamma / (gamma + 1.0));
    let rho_ess_norm = lp_norm(rho_ess.iter().map(|v| v * avg), area, 2.0);
    let rho_res: Vec<f64> = rho_res.iter().map(|v| v * scale_res).collect();
    let rho_res_norm = lp_norm(rho_res.iter().copied(), area, gamma);
    Ok(BoundReport {
        energy: energy * grid.cell_volume() / (delta * members.len() as f64),
        mbar_norm,
        rho_ess_norm,
        rho_res_norm,
        rho_res: ScalarField2D::new(g2, rho_res)?,
    })
}

/// Cell-wise ensemble mean of an observable `G(rho, m)`; `None` marks a
/// state where `G` is undefined.
pub fn ensemble_observable(
    measure: &EnsembleMeasure,
    g: impl Fn(f64, [f64; 3]) -> Option<f64>,
) -> Result<ScalarField3D> {
    let grid = *measure.grid();
    let mut acc = vec![0.0; grid.cell_count()];
    for s in measure.members() {
        let m = s.mom.components();
        for (n, &rho) in s.rho.values().iter().enumerate() {
            let mv = [m[0][n], m[1][n], m[2][n]];
            acc[n] += g(rho, mv)
                .ok_or_else(|| Error::UndefinedObservable(format!("at cell {n} with rho = {rho}, m = {mv:?}")))?;
        }
    }
    let inv = 1.0 / measure.len() as f64;
    ScalarField3D::new(grid, acc.into_iter().map(|v| v * inv).collect())
}

/// `|m|^2 / rho` with the vacuum convention: infinite (undefined) for
/// `rho = 0, m != 0`, zero for `rho = 0, m = 0`.
pub fn kinetic_density(rho: f64, m: [f64; 3]) -> Option<f64> {
    let m2 = m[0] * m[0] + m[1] * m[1] + m[2] * m[2];
    if rho > 0.0 {
        Some(m2 / rho)
    } else if m2 == 0.0 && rho == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

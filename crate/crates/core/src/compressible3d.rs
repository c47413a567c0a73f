//! Finite-volume solver for the scaled barotropic Euler system on a thin
//! periodic layer.
//!
//! ```text
//! d_t rho + div m = 0
//! d_t m + div(m (x) m / rho) + grad p(rho) / eps^2 = 0
//! ```
//!
//! First-order Rusanov fluxes with SSP-RK2 in time. Horizontal directions
//! are periodic; `x3 = 0` and `x3 = delta` are impermeable slip walls
//! realised by mirror ghost cells.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{Grid3D, OnGrid, ScalarField3D, SnapshotSeries, VectorField3D};
use crate::error::{Error, Result};
use crate::pressure::PressureLaw;

/// Densities at or below this abort the run.
pub const VACUUM_THRESHOLD: f64 = 1e-10;

pub const SCHEME_VERSION: &str = "rusanov-ssprk2/1";

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState3D {
    pub rho: ScalarField3D,
    pub mom: VectorField3D,
    pub time: f64,
}

impl FluidState3D {
    pub fn new(rho: ScalarField3D, mom: VectorField3D, time: f64) -> Result<Self> {
        if rho.grid() != mom.grid() {
            return Err(Error::GridMismatch("density and momentum grids differ".into()));
        }
        if let Some((cell, &r)) = rho.values().iter().enumerate().find(|(_, &r)| r <= VACUUM_THRESHOLD) {
            return Err(Error::InvalidState(format!("non-positive density {r:e} at cell {cell}")));
        }
        Ok(Self { rho, mom, time })
    }

    /// Uniform state `(rho, rho * u)`.
    pub fn uniform(grid: Grid3D, rho: f64, velocity: [f64; 3]) -> Result<Self> {
        let n = grid.cell_count();
        let mom = VectorField3D::new(grid, velocity.map(|u| vec![rho * u; n]))?;
        Self::new(ScalarField3D::constant(grid, rho), mom, 0.0)
    }

    pub fn grid(&self) -> &Grid3D {
        self.rho.grid()
    }

    pub fn cell(&self, n: usize) -> CellState {
        let m = self.mom.components();
        CellState { rho: self.rho.values()[n], mom: [m[0][n], m[1][n], m[2][n]] }
    }

    pub fn mass(&self) -> f64 {
        self.rho.integral()
    }

    pub fn momentum(&self) -> [f64; 3] {
        [self.mom.integral(0), self.mom.integral(1), self.mom.integral(2)]
    }

    /// `sum (|m|^2 / (2 rho) + H(rho, rho_tilde) / eps^2) * cell volume`.
    pub fn energy(&self, law: &PressureLaw, epsilon: f64) -> f64 {
        let rt = law.rho_tilde();
        let inv_eps2 = 1.0 / (epsilon * epsilon);
        let m = self.mom.components();
        let sum: f64 = self
            .rho
            .values()
            .iter()
            .enumerate()
            .map(|(n, &r)| {
                let m2 = m[0][n] * m[0][n] + m[1][n] * m[1][n] + m[2][n] * m[2][n];
                0.5 * m2 / r + law.helmholtz(r, rt) * inv_eps2
            })
            .sum();
        sum * self.grid().cell_volume()
    }

    fn to_arrays(&self) -> [Vec<f64>; 4] {
        let m = self.mom.components();
        [self.rho.values().to_vec(), m[0].clone(), m[1].clone(), m[2].clone()]
    }

    fn from_arrays(grid: Grid3D, u: [Vec<f64>; 4], time: f64) -> Result<Self> {
        let [r, a, b, c] = u;
        Ok(Self { rho: ScalarField3D::new(grid, r)?, mom: VectorField3D::new(grid, [a, b, c])?, time })
    }
}

impl OnGrid for FluidState3D {
    type Grid = Grid3D;
    fn grid_key(&self) -> Grid3D {
        *self.grid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState {
    pub rho: f64,
    pub mom: [f64; 3],
}

impl CellState {
    pub fn new(rho: f64, mom: [f64; 3]) -> Self {
        Self { rho, mom }
    }

    pub fn velocity(&self) -> [f64; 3] {
        self.mom.map(|m| m / self.rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X1,
    X2,
    X3,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
            Axis::X3 => 2,
        }
    }
}

/// Interface flux family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxKind {
    /// Local Lax-Friedrichs with the full acoustic speed on every component.
    #[default]
    Rusanov,
    /// Rusanov dissipation on density; the velocity-jump part of the
    /// momentum dissipation is scaled by the face-normal Mach number
    /// `min(1, max|u.n| / c)`. Reduces to [`FluxKind::Rusanov`] once the
    /// normal flow is sonic. Still dissipates the discrete energy: the
    /// jump terms contribute `lambda (dP' d(rho) / eps^2 + z rho_bar |du|^2)`.
    LowMachRusanov,
}

#[derive(Debug, Clone)]
pub struct SolverParams {
    pub epsilon: f64,
    pub cfl: f64,
    pub law: PressureLaw,
    pub end_time: f64,
    pub snapshot_interval: f64,
    pub flux: FluxKind,
    /// Abort with [`Error::WallBudgetExceeded`] after this many seconds.
    pub wall_budget_seconds: Option<f64>,
}

impl SolverParams {
    pub fn new(epsilon: f64, cfl: f64, law: PressureLaw, end_time: f64, snapshot_interval: f64) -> Result<Self> {
        let p =
            Self { epsilon, cfl, law, end_time, snapshot_interval, flux: FluxKind::Rusanov, wall_budget_seconds: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_flux(mut self, flux: FluxKind) -> Self {
        self.flux = flux;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::InvalidArgument(format!("CFL violation: cfl must lie in (0, 1), got {}", self.cfl)));
        }
        if !(self.end_time >= 0.0 && self.end_time.is_finite()) {
            return Err(Error::InvalidArgument(format!("end time must be nonnegative, got {}", self.end_time)));
        }
        if !(self.snapshot_interval > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "snapshot interval must be positive, got {}",
                self.snapshot_interval
            )));
        }
        Ok(())
    }
}

/// Per-cell quantities reused by every face touching the cell.
#[derive(Clone, Copy)]
struct Prim {
    rho: f64,
    mom: [f64; 3],
    vel: [f64; 3],
    /// `p(rho) / eps^2`
    p: f64,
    /// `sqrt(p'(rho)) / eps`
    c: f64,
}

impl Prim {
    #[inline]
    fn new(s: CellState, law: &PressureLaw, inv_eps: f64) -> Self {
        let vel = s.velocity();
        let dp = law.dpressure(s.rho);
        Self {
            rho: s.rho,
            mom: s.mom,
            vel,
            p: law.pressure(s.rho) * inv_eps * inv_eps,
            c: dp.max(0.0).sqrt() * inv_eps,
        }
    }

    #[inline]
    fn mirrored(&self, axis: usize) -> Self {
        let mut m = *self;
        m.mom[axis] = -m.mom[axis];
        m.vel[axis] = -m.vel[axis];
        m
    }

    #[inline]
    fn physical_flux(&self, axis: usize) -> [f64; 4] {
        let un = self.vel[axis];
        let mut f = [self.mom[axis], self.mom[0] * un, self.mom[1] * un, self.mom[2] * un];
        f[1 + axis] += self.p;
        f
    }
}

#[inline]
fn flux_from_prims(l: &Prim, r: &Prim, axis: usize, kind: FluxKind) -> [f64; 4] {
    let fl = l.physical_flux(axis);
    let fr = r.physical_flux(axis);
    let lam = (l.vel[axis].abs() + l.c).max(r.vel[axis].abs() + r.c);
    let mut f = [0.0; 4];
    f[0] = 0.5 * (fl[0] + fr[0]) - 0.5 * lam * (r.rho - l.rho);
    match kind {
        FluxKind::Rusanov => {
            for c in 0..3 {
                f[1 + c] = 0.5 * (fl[1 + c] + fr[1 + c]) - 0.5 * lam * (r.mom[c] - l.mom[c]);
            }
        }
        FluxKind::LowMachRusanov => {
            // split d(rho u) = u_bar d(rho) + rho_bar d(u) exactly and damp only
            // the second part by the face-normal Mach number
            let cmin = l.c.min(r.c);
            let un = l.vel[axis].abs().max(r.vel[axis].abs());
            let z = if cmin > 0.0 { (un / cmin).min(1.0) } else { 1.0 };
            let drho = r.rho - l.rho;
            let rho_bar = 0.5 * (l.rho + r.rho);
            for c in 0..3 {
                let u_bar = 0.5 * (l.vel[c] + r.vel[c]);
                let dm = u_bar * drho + z * rho_bar * (r.vel[c] - l.vel[c]);
                f[1 + c] = 0.5 * (fl[1 + c] + fr[1 + c]) - 0.5 * lam * dm;
            }
        }
    }
    f
}

fn check_positive(s: &CellState) -> Result<()> {
    if s.rho > 0.0 && s.rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidState(format!("non-positive density {} in flux evaluation", s.rho)))
    }
}

/// Rusanov flux `(F(L) + F(R))/2 - lambda (U_R - U_L)/2` with
/// `lambda = max(|u.n| + sqrt(p'(rho))/eps)` over both states.
/// Returns `(mass, momentum_1, momentum_2, momentum_3)`.
pub fn numerical_flux(
    left: CellState,
    right: CellState,
    normal: Axis,
    law: &PressureLaw,
    epsilon: f64,
) -> Result<[f64; 4]> {
    numerical_flux_with(left, right, normal, law, epsilon, FluxKind::Rusanov)
}

pub fn numerical_flux_with(
    left: CellState,
    right: CellState,
    normal: Axis,
    law: &PressureLaw,
    epsilon: f64,
    kind: FluxKind,
) -> Result<[f64; 4]> {
    check_positive(&left)?;
    check_positive(&right)?;
    let inv_eps = 1.0 / epsilon;
    let (l, r) = (Prim::new(left, law, inv_eps), Prim::new(right, law, inv_eps));
    Ok(flux_from_prims(&l, &r, normal.index(), kind))
}

/// `cfl * min over cells and axes of spacing / (|u_axis| + sqrt(p'(rho))/eps)`.
pub fn stable_dt(state: &FluidState3D, params: &SolverParams) -> Result<f64> {
    let g = state.grid();
    let h = [g.dx(), g.dy(), g.dz()];
    if h.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidGrid("zero spacing".into()));
    }
    let inv_eps = 1.0 / params.epsilon;
    let mut dt = f64::INFINITY;
    for n in 0..g.cell_count() {
        let s = state.cell(n);
        let c = params.law.dpressure(s.rho).max(0.0).sqrt() * inv_eps;
        let u = s.velocity();
        for a in 0..3 {
            let speed = u[a].abs() + c;
            if speed > 0.0 {
                dt = dt.min(h[a] / speed);
            }
        }
    }
    if !dt.is_finite() {
        return Err(Error::InvalidState("no finite signal speed".into()));
    }
    Ok(params.cfl * dt)
}

/// Semi-discrete right-hand side `-div F` for conserved arrays.
fn residual(u: &[Vec<f64>; 4], grid: &Grid3D, params: &SolverParams, time: f64) -> Result<[Vec<f64>; 4]> {
    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    let n = grid.cell_count();
    let inv_eps = 1.0 / params.epsilon;
    let mut prims = Vec::with_capacity(n);
    for c in 0..n {
        let s = CellState { rho: u[0][c], mom: [u[1][c], u[2][c], u[3][c]] };
        if !(s.rho > VACUUM_THRESHOLD) || !s.rho.is_finite() {
            return Err(Error::PositivityLoss { cell: c, rho: s.rho, time });
        }
        prims.push(Prim::new(s, &params.law, inv_eps));
    }
    let kind = params.flux;

    // fx[c] is the flux through the x1-face on the high side of cell c
    let mut fx = vec![[0.0; 4]; n];
    let mut fy = vec![[0.0; 4]; n];
    for i in 0..nx {
        let ip = (i + 1) % nx;
        for j in 0..ny {
            let jp = (j + 1) % ny;
            for k in 0..nz {
                let c = grid.index(i, j, k);
                fx[c] = flux_from_prims(&prims[c], &prims[grid.index(ip, j, k)], 0, kind);
                fy[c] = flux_from_prims(&prims[c], &prims[grid.index(i, jp, k)], 1, kind);
            }
        }
    }
    // nz + 1 faces per column, walls included
    let mut fz = vec![[0.0; 4]; nx * ny * (nz + 1)];
    for col in 0..nx * ny {
        let base = col * nz;
        let fbase = col * (nz + 1);
        let bottom = prims[base];
        fz[fbase] = flux_from_prims(&bottom.mirrored(2), &bottom, 2, kind);
        for k in 1..nz {
            fz[fbase + k] = flux_from_prims(&prims[base + k - 1], &prims[base + k], 2, kind);
        }
        let top = prims[base + nz - 1];
        fz[fbase + nz] = flux_from_prims(&top, &top.mirrored(2), 2, kind);
    }

    let (idx, idy, idz) = (1.0 / grid.dx(), 1.0 / grid.dy(), 1.0 / grid.dz());
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..nx {
        let im = (i + nx - 1) % nx;
        for j in 0..ny {
            let jm = (j + ny - 1) % ny;
            for k in 0..nz {
                let c = grid.index(i, j, k);
                let cxm = grid.index(im, j, k);
                let cym = grid.index(i, jm, k);
                let fb = (i * ny + j) * (nz + 1) + k;
                for q in 0..4 {
                    let dx = (fx[c][q] - fx[cxm][q]) * idx;
                    let dy = (fy[c][q] - fy[cym][q]) * idy;
                    let dz = (fz[fb + 1][q] - fz[fb][q]) * idz;
                    out[q][c] = -((dx + dy) + dz);
                }
            }
        }
    }
    Ok(out)
}

fn check_vacuum(u: &[Vec<f64>; 4], time: f64) -> Result<()> {
    match u[0].iter().enumerate().find(|(_, &r)| !(r > VACUUM_THRESHOLD) || !r.is_finite()) {
        Some((cell, &rho)) => Err(Error::PositivityLoss { cell, rho, time }),
        None => Ok(()),
    }
}

/// One SSP-RK2 (Heun) step.
pub fn step(state: &FluidState3D, params: &SolverParams, dt: f64) -> Result<FluidState3D> {
    params.validate()?;
    let stable = stable_dt(state, params)?;
    if dt > stable * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, stable });
    }
    step_unchecked(state, params, dt)
}

fn step_unchecked(state: &FluidState3D, params: &SolverParams, dt: f64) -> Result<FluidState3D> {
    let grid = *state.grid();
    let u0 = state.to_arrays();
    let l0 = residual(&u0, &grid, params, state.time)?;
    let mut u1 = u0.clone();
    for q in 0..4 {
        for (v, r) in u1[q].iter_mut().zip(&l0[q]) {
            *v += dt * r;
        }
    }
    check_vacuum(&u1, state.time + dt)?;
    let l1 = residual(&u1, &grid, params, state.time + dt)?;
    let mut u2 = u0;
    for q in 0..4 {
        for c in 0..u2[q].len() {
            u2[q][c] = 0.5 * u2[q][c] + 0.5 * (u1[q][c] + dt * l1[q][c]);
        }
    }
    check_vacuum(&u2, state.time + dt)?;
    FluidState3D::from_arrays(grid, u2, state.time + dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservationRecord {
    pub time: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
}

impl ConservationRecord {
    fn of(state: &FluidState3D, params: &SolverParams) -> Self {
        Self {
            time: state.time,
            mass: state.mass(),
            momentum: state.momentum(),
            energy: state.energy(&params.law, params.epsilon),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: SnapshotSeries<FluidState3D>,
    pub log: Vec<ConservationRecord>,
    pub steps: usize,
}

/// Advance to `end_time`, recording snapshots at multiples of the
/// snapshot interval (and at the end time) plus per-step totals.
pub fn run(initial: &FluidState3D, params: &SolverParams) -> Result<RunOutput> {
    params.validate()?;
    let start = Instant::now();
    let mut state = initial.clone();
    let mut series = SnapshotSeries::new();
    let mut log = vec![ConservationRecord::of(&state, params)];
    series.push(state.time, state.clone())?;
    let t0 = initial.time;
    let t_end = t0 + params.end_time;
    let mut next_index = 1usize;
    let mut steps = 0usize;
    while state.time < t_end {
        let next_snap = (t0 + next_index as f64 * params.snapshot_interval).min(t_end);
        let mut dt = stable_dt(&state, params)?;
        let remaining = next_snap - state.time;
        let hits = dt >= remaining;
        if hits {
            dt = remaining;
        }
        let mut new_state = step_unchecked(&state, params, dt)?;
        steps += 1;
        if hits {
            new_state.time = next_snap;
        }
        state = new_state;
        log.push(ConservationRecord::of(&state, params));
        if hits {
            series.push(state.time, state.clone())?;
            next_index += 1;
        }
        if let Some(budget) = params.wall_budget_seconds {
            if start.elapsed().as_secs_f64() > budget {
                return Err(Error::WallBudgetExceeded { budget_seconds: budget, time: state.time });
            }
        }
    }
    Ok(RunOutput { series, log, steps })
}

/// Sampled dissipation defect `D(t) = (E(0) - E(t)) / delta`.
pub fn dissipation_defect(
    series: &SnapshotSeries<FluidState3D>,
    law: &PressureLaw,
    epsilon: f64,
    delta: f64,
) -> Result<Vec<(f64, f64)>> {
    let Some((_, first)) = series.iter().next() else {
        return Err(Error::InsufficientSamples(0));
    };
    let e0 = first.energy(law, epsilon);
    series
        .iter()
        .map(|(t, s)| {
            let d = (e0 - s.energy(law, epsilon)) / delta;
            if d < -1e-12 * e0.abs() / delta {
                Err(Error::InvalidState(format!("energy increased by {:e} at t = {t}", -d * delta)))
            } else {
                Ok((t, d.max(0.0)))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law() -> PressureLaw {
        PressureLaw::power(2.0, 1.0, 1.0).unwrap()
    }

    fn assert_close(a: [f64; 4], b: [f64; 4], tol: f64) {
        for q in 0..4 {
            assert!((a[q] - b[q]).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn consistency_at_rest() {
        let s = CellState::new(1.0, [0.0; 3]);
        let f = numerical_flux(s, s, Axis::X1, &law(), 0.1).unwrap();
        assert_close(f, [0.0, 100.0, 0.0, 0.0], 1e-12);
        let f = numerical_flux(s, s, Axis::X3, &law(), 0.1).unwrap();
        assert_close(f, [0.0, 0.0, 0.0, 100.0], 1e-12);
    }

    #[test]
    fn consistency_with_motion() {
        let rho = 1.3;
        let u = [0.4, -0.2, 0.1];
        let s = CellState::new(rho, u.map(|v| rho * v));
        for (axis, a) in [(Axis::X1, 0), (Axis::X2, 1), (Axis::X3, 2)] {
            let eps = 0.5;
            let p = rho * rho / (eps * eps);
            let mut expected = [rho * u[a], rho * u[0] * u[a], rho * u[1] * u[a], rho * u[2] * u[a]];
            expected[1 + a] += p;
            for kind in [FluxKind::Rusanov, FluxKind::LowMachRusanov] {
                let f = numerical_flux_with(s, s, axis, &law(), eps, kind).unwrap();
                assert_close(f, expected, 1e-14);
            }
        }
    }

    #[test]
    fn rusanov_hand_evaluation() {
        // p = rho^2, eps = 1: lambda = max(sqrt 2, 2) = 2
        let l = CellState::new(1.0, [0.0; 3]);
        let r = CellState::new(2.0, [0.0; 3]);
        let f = numerical_flux(l, r, Axis::X1, &law(), 1.0).unwrap();
        let mass = -0.5 * 2.0 * (2.0 - 1.0);
        let normal = 0.5 * (1.0 + 4.0);
        assert_close(f, [mass, normal, 0.0, 0.0], 1e-14);
    }

    #[test]
    fn low_mach_flux_reduces_to_rusanov_above_unit_mach() {
        let l = CellState::new(1.0, [3.0, 0.5, 0.0]);
        let r = CellState::new(1.2, [2.4, -0.6, 0.3]);
        let a = numerical_flux(l, r, Axis::X1, &law(), 1.0).unwrap();
        let b = numerical_flux_with(l, r, Axis::X1, &law(), 1.0, FluxKind::LowMachRusanov).unwrap();
        assert_close(a, b, 1e-13);
    }

    #[test]
    fn low_mach_flux_leaves_pure_shear_undamped() {
        let l = CellState::new(1.0, [0.0, 1.0, 0.0]);
        let r = CellState::new(1.0, [0.0, -1.0, 0.0]);
        let lm = numerical_flux_with(l, r, Axis::X1, &law(), 0.1, FluxKind::LowMachRusanov).unwrap();
        let central = numerical_flux_with(l, l, Axis::X1, &law(), 0.1, FluxKind::Rusanov).unwrap();
        assert_close(lm, central, 1e-12);
        let rus = numerical_flux(l, r, Axis::X1, &law(), 0.1).unwrap();
        assert!(rus[2] > 1.0);
    }

    #[test]
    fn energy_decreases_for_both_fluxes() {
        use rand::{Rng, SeedableRng};
        let g = Grid3D::new(12, 10, 3, 2.0, 0.3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let rho: Vec<f64> = (0..g.cell_count()).map(|_| 1.0 + 0.05 * rng.gen_range(-1.0..1.0)).collect();
        let rho = ScalarField3D::new(g, rho).unwrap();
        let mut comp = || (0..g.cell_count()).map(|_| 0.3 * rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let mom = VectorField3D::new(g, [comp(), comp(), comp()]).unwrap();
        let s0 = FluidState3D::new(rho, mom, 0.0).unwrap();
        for kind in [FluxKind::Rusanov, FluxKind::LowMachRusanov] {
            let p = SolverParams::new(0.3, 0.3, law(), 1.0, 1.0).unwrap().with_flux(kind);
            let mut s = s0.clone();
            let mut e = s.energy(&law(), 0.3);
            for _ in 0..20 {
                let dt = stable_dt(&s, &p).unwrap();
                s = step(&s, &p, dt).unwrap();
                let e1 = s.energy(&law(), 0.3);
                assert!(e1 <= e, "{kind:?}: {e1} > {e}");
                e = e1;
            }
            assert!((s.mass() - s0.mass()).abs() < 1e-12 * s0.mass());
        }
    }

    #[test]
    fn flux_rejects_vacuum() {
        let l = CellState::new(0.0, [0.0; 3]);
        let r = CellState::new(1.0, [0.0; 3]);
        assert!(matches!(numerical_flux(l, r, Axis::X2, &law(), 1.0), Err(Error::InvalidState(_))));
    }

    #[test]
    fn stable_dt_examples() {
        // p = rho^2 / 2 so that p'(1) = 1
        let half = PressureLaw::power(2.0, 0.5, 1.0).unwrap();
        let g = Grid3D::new(10, 10, 10, 1.0, 1.0).unwrap();
        let rest = FluidState3D::uniform(g, 1.0, [0.0; 3]).unwrap();
        let params = SolverParams::new(0.1, 0.45, half.clone(), 1.0, 1.0).unwrap();
        assert!((stable_dt(&rest, &params).unwrap() - 0.0045).abs() < 1e-15);
        let params2 = SolverParams::new(0.05, 0.45, half.clone(), 1.0, 1.0).unwrap();
        assert!((stable_dt(&rest, &params2).unwrap() - 0.00225).abs() < 1e-15);
        let moving = FluidState3D::uniform(g, 1.0, [1.0, 0.0, 0.0]).unwrap();
        assert!((stable_dt(&moving, &params).unwrap() - 0.45 * 0.1 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn cfl_outside_unit_interval_rejected() {
        assert!(SolverParams::new(0.1, 1.5, law(), 1.0, 0.1).is_err());
        assert!(SolverParams::new(0.1, 0.0, law(), 1.0, 0.1).is_err());
        assert!(SolverParams::new(0.0, 0.5, law(), 1.0, 0.1).is_err());
    }

    #[test]
    fn oversized_step_rejected() {
        let g = Grid3D::new(4, 4, 2, 1.0, 0.5).unwrap();
        let s = FluidState3D::uniform(g, 1.0, [0.0; 3]).unwrap();
        let p = SolverParams::new(0.5, 0.4, law(), 1.0, 1.0).unwrap();
        let dt = stable_dt(&s, &p).unwrap();
        assert!(matches!(step(&s, &p, 2.0 * dt), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn rest_state_is_exact_equilibrium() {
        let g = Grid3D::new(6, 5, 4, 2.0, 0.3).unwrap();
        let s0 = FluidState3D::uniform(g, 1.0, [0.0; 3]).unwrap();
        let p = SolverParams::new(0.2, 0.45, law(), 1.0, 0.25).unwrap();
        let mut s = s0.clone();
        for _ in 0..50 {
            let dt = stable_dt(&s, &p).unwrap();
            s = step(&s, &p, dt).unwrap();
        }
        assert_eq!(s.rho, s0.rho);
        assert_eq!(s.mom, s0.mom);
    }

    #[test]
    fn run_with_zero_end_time_has_one_snapshot() {
        let g = Grid3D::new(4, 4, 2, 1.0, 0.5).unwrap();
        let s = FluidState3D::uniform(g, 1.0, [0.0; 3]).unwrap();
        let p = SolverParams::new(0.5, 0.4, law(), 0.0, 0.1).unwrap();
        let out = run(&s, &p).unwrap();
        assert_eq!(out.series.len(), 1);
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn rest_run_snapshots_identical_and_no_defect() {
        let g = Grid3D::new(4, 4, 2, 1.0, 0.5).unwrap();
        let s = FluidState3D::uniform(g, 1.0, [0.0; 3]).unwrap();
        let p = SolverParams::new(0.5, 0.4, law(), 1.0, 0.25).unwrap();
        let out = run(&s, &p).unwrap();
        assert_eq!(out.series.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        for (_, snap) in out.series.iter() {
            assert_eq!(snap.rho, s.rho);
            assert_eq!(snap.mom, s.mom);
        }
        for (_, d) in dissipation_defect(&out.series, &law(), 0.5, 0.5).unwrap() {
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn wall_budget_is_reported() {
        let g = Grid3D::new(8, 8, 2, 1.0, 0.5).unwrap();
        let s = FluidState3D::uniform(g, 1.0, [0.0; 3]).unwrap();
        let mut p = SolverParams::new(0.01, 0.4, law(), 10.0, 1.0).unwrap();
        p.wall_budget_seconds = Some(0.0);
        assert!(matches!(run(&s, &p), Err(Error::WallBudgetExceeded { .. })));
    }

    #[test]
    fn vacuum_aborts() {
        let g = Grid3D::new(8, 1, 1, 1.0, 1.0).unwrap();
        let rho = ScalarField3D::from_fn(g, |x| if x[0] < 0.5 { 1.0 } else { 1e-3 }).unwrap();
        let s = FluidState3D::new(rho, VectorField3D::zeros(g), 0.0).unwrap();
        let p = SolverParams::new(1.0, 0.9, law(), 1.0, 1.0).unwrap();
        // far beyond the stable step the update overshoots below zero
        let dt = 20.0 * stable_dt(&s, &p).unwrap();
        assert!(matches!(step_unchecked(&s, &p, dt), Err(Error::PositivityLoss { .. })));
    }
}

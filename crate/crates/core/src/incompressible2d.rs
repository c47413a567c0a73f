//! Pseudo-spectral vorticity-streamfunction solver for the periodic 2D
//! incompressible Euler equations, plus the Helmholtz projection.
//!
//! `d_t w + v . grad w = 0`, `lap psi = w`, `v = (-d2 psi, d1 psi)`.

use crate::domain::{Grid2D, ScalarField2D, VectorField2D};
use crate::error::{Error, Result};
use crate::spectral::{to_physical, to_spectrum, Wavenumbers, C64};

/// Largest accepted `dt * max|v| / dx`. Classical RK4 on the dealiased
/// advection spectrum is stable up to roughly 1.3.
pub const EULER_CFL: f64 = 0.8;

/// Under-resolution threshold on the top-band energy fraction.
pub const TOP_BAND_LIMIT: f64 = 1e-3;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct IncompressibleState2D {
    grid: Grid2D,
    omega_hat: Vec<C64>,
    pub time: f64,
}

impl IncompressibleState2D {
    /// Vorticity must have zero mean (to `1e-10` of its max).
    pub fn new(omega: &ScalarField2D, time: f64) -> Result<Self> {
        let g = *omega.grid();
        let mut omega_hat = to_spectrum(omega.values(), &g);
        let n = g.cell_count() as f64;
        let mean = omega_hat[0].re / n;
        let scale = omega.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if mean.abs() > 1e-10 * scale.max(1e-300) && mean.abs() > 1e-14 {
            return Err(Error::InvalidState(format!("vorticity has nonzero mean {mean:e}")));
        }
        omega_hat[0] = C64::default();
        Ok(Self { grid: g, omega_hat, time })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, omega_hat: vec![C64::default(); grid.cell_count()], time: 0.0 }
    }

    /// State whose velocity is the solenoidal part of `u`.
    pub fn from_velocity(u: &VectorField2D, time: f64) -> Result<Self> {
        let g = *u.grid();
        let wn = Wavenumbers::new(&g);
        let a = to_spectrum(u.component(0), &g);
        let b = to_spectrum(u.component(1), &g);
        let mut w = vec![C64::default(); g.cell_count()];
        for i in 0..g.nx {
            for j in 0..g.ny {
                let n = g.index(i, j);
                w[n] = I * wn.dx[i] * b[n] - I * wn.dy[j] * a[n];
            }
        }
        w[0] = C64::default();
        Ok(Self { grid: g, omega_hat: w, time })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn omega(&self) -> ScalarField2D {
        ScalarField2D::new(self.grid, to_physical(&self.omega_hat, &self.grid)).expect("finite")
    }

    pub fn omega_hat(&self) -> &[C64] {
        &self.omega_hat
    }

    pub fn streamfunction(&self) -> ScalarField2D {
        let psi = stream_hat(&self.omega_hat, &Wavenumbers::new(&self.grid));
        ScalarField2D::new(self.grid, to_physical(&psi, &self.grid)).expect("finite")
    }

    pub fn velocity(&self) -> VectorField2D {
        let wn = Wavenumbers::new(&self.grid);
        let [a, b] = velocity_hat(&self.omega_hat, &wn);
        VectorField2D::new(self.grid, [to_physical(&a, &self.grid), to_physical(&b, &self.grid)]).expect("finite")
    }

    /// `1/2 int |v|^2` via Parseval.
    pub fn kinetic_energy(&self) -> f64 {
        let wn = Wavenumbers::new(&self.grid);
        let [a, b] = velocity_hat(&self.omega_hat, &wn);
        0.5 * parseval(&a, &self.grid) + 0.5 * parseval(&b, &self.grid)
    }

    /// `1/2 int w^2`.
    pub fn enstrophy(&self) -> f64 {
        0.5 * parseval(&self.omega_hat, &self.grid)
    }

    /// Fraction of kinetic energy in the top third of the dealiased band.
    pub fn top_band_fraction(&self) -> f64 {
        let wn = Wavenumbers::new(&self.grid);
        let (mut top, mut total) = (0.0, 0.0);
        let (cx, cy) = (self.grid.nx as f64 / 3.0, self.grid.ny as f64 / 3.0);
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                let k2 = wn.k2(i, j);
                if k2 == 0.0 || !wn.dealiased(i, j) {
                    continue;
                }
                let e = self.omega_hat[self.grid.index(i, j)].norm_sqr() / k2;
                total += e;
                let band = (wn.mode_x[i].abs() as f64 / cx).max(wn.mode_y[j].abs() as f64 / cy);
                if band > 2.0 / 3.0 {
                    top += e;
                }
            }
        }
        if total > 0.0 {
            top / total
        } else {
            0.0
        }
    }
}

fn parseval(c: &[C64], g: &Grid2D) -> f64 {
    c.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.cell_area() / g.cell_count() as f64
}

/// Inverts the Laplacian built from the odd-derivative wavenumbers, so that
/// `psi -> curl grad_perp psi -> psi` round-trips exactly at Nyquist modes.
fn stream_hat(w: &[C64], wn: &Wavenumbers) -> Vec<C64> {
    let mut out = vec![C64::default(); w.len()];
    for i in 0..wn.nx {
        for j in 0..wn.ny {
            let k2 = wn.dx[i] * wn.dx[i] + wn.dy[j] * wn.dy[j];
            if k2 > 0.0 {
                out[i * wn.ny + j] = -w[i * wn.ny + j] / k2;
            }
        }
    }
    out
}

fn velocity_hat(w: &[C64], wn: &Wavenumbers) -> [Vec<C64>; 2] {
    let psi = stream_hat(w, wn);
    let mut a = vec![C64::default(); w.len()];
    let mut b = vec![C64::default(); w.len()];
    for i in 0..wn.nx {
        for j in 0..wn.ny {
            let n = i * wn.ny + j;
            a[n] = -I * wn.dy[j] * psi[n];
            b[n] = I * wn.dx[i] * psi[n];
        }
    }
    [a, b]
}

fn grad_hat(f: &[C64], wn: &Wavenumbers) -> [Vec<C64>; 2] {
    let mut a = vec![C64::default(); f.len()];
    let mut b = vec![C64::default(); f.len()];
    for i in 0..wn.nx {
        for j in 0..wn.ny {
            let n = i * wn.ny + j;
            a[n] = I * wn.dx[i] * f[n];
            b[n] = I * wn.dy[j] * f[n];
        }
    }
    [a, b]
}

fn dealias(c: &mut [C64], wn: &Wavenumbers) {
    for i in 0..wn.nx {
        for j in 0..wn.ny {
            if !wn.dealiased(i, j) {
                c[i * wn.ny + j] = C64::default();
            }
        }
    }
}

/// Dealiased spectrum of `v . grad f`.
fn advect_hat(v: &[Vec<f64>; 2], f_hat: &[C64], wn: &Wavenumbers, g: &Grid2D) -> Vec<C64> {
    let [fx, fy] = grad_hat(f_hat, wn);
    let (fx, fy) = (to_physical(&fx, g), to_physical(&fy, g));
    let prod: Vec<f64> = (0..fx.len()).map(|n| v[0][n] * fx[n] + v[1][n] * fy[n]).collect();
    let mut out = to_spectrum(&prod, g);
    dealias(&mut out, wn);
    out
}

fn rhs(w: &[C64], wn: &Wavenumbers, g: &Grid2D) -> Vec<C64> {
    let [a, b] = velocity_hat(w, wn);
    let v = [to_physical(&a, g), to_physical(&b, g)];
    let mut out = advect_hat(&v, w, wn, g);
    for c in out.iter_mut() {
        *c = -*c;
    }
    out[0] = C64::default();
    out
}

fn max_speed(state: &IncompressibleState2D) -> f64 {
    let v = state.velocity();
    (0..v.grid().cell_count()).map(|n| v.component(0)[n].hypot(v.component(1)[n])).fold(0.0, f64::max)
}

/// One classical RK4 step. Errors with [`Error::UnderResolved`] when the
/// top-band energy fraction of the result exceeds [`TOP_BAND_LIMIT`].
pub fn euler_step(state: &IncompressibleState2D, dt: f64) -> Result<IncompressibleState2D> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be nonnegative, got {dt}")));
    }
    let g = state.grid;
    let h = g.dx().min(g.dy());
    let vmax = max_speed(state);
    if dt * vmax > EULER_CFL * h {
        return Err(Error::CflViolation { dt, stable: EULER_CFL * h / vmax });
    }
    let wn = Wavenumbers::new(&g);
    let w0 = &state.omega_hat;
    let axpy = |base: &[C64], k: &[C64], s: f64| -> Vec<C64> { base.iter().zip(k).map(|(b, k)| b + k * s).collect() };
    let k1 = rhs(w0, &wn, &g);
    let k2 = rhs(&axpy(w0, &k1, 0.5 * dt), &wn, &g);
    let k3 = rhs(&axpy(w0, &k2, 0.5 * dt), &wn, &g);
    let k4 = rhs(&axpy(w0, &k3, dt), &wn, &g);
    let w: Vec<C64> = (0..w0.len()).map(|n| w0[n] + (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]) * (dt / 6.0)).collect();
    let next = IncompressibleState2D { grid: g, omega_hat: w, time: state.time + dt };
    let fraction = next.top_band_fraction();
    if fraction > TOP_BAND_LIMIT {
        return Err(Error::UnderResolved { fraction });
    }
    Ok(next)
}

/// Advance to `t_end` with steps no larger than `max_dt`, landing exactly.
pub fn advance_to(state: &IncompressibleState2D, t_end: f64, max_dt: f64) -> Result<IncompressibleState2D> {
    let span = t_end - state.time;
    if span < 0.0 {
        return Err(Error::InvalidArgument(format!("cannot advance backwards to {t_end}")));
    }
    if span == 0.0 {
        return Ok(state.clone());
    }
    let steps = (span / max_dt).ceil().max(1.0) as usize;
    let dt = span / steps as f64;
    let mut s = state.clone();
    for _ in 0..steps {
        s = euler_step(&s, dt)?;
    }
    s.time = t_end;
    Ok(s)
}

/// Spectral `(v . grad) v`, dealiased, as Fourier coefficients.
fn convective_hat(state: &IncompressibleState2D, wn: &Wavenumbers) -> [Vec<C64>; 2] {
    let g = state.grid;
    let [a, b] = velocity_hat(&state.omega_hat, wn);
    let v = [to_physical(&a, &g), to_physical(&b, &g)];
    [advect_hat(&v, &a, wn, &g), advect_hat(&v, &b, wn, &g)]
}

fn pressure_hat(conv: &[Vec<C64>; 2], wn: &Wavenumbers) -> Vec<C64> {
    let mut p = vec![C64::default(); conv[0].len()];
    for i in 0..wn.nx {
        for j in 0..wn.ny {
            let k2 = wn.k2(i, j);
            let n = i * wn.ny + j;
            if k2 > 0.0 {
                p[n] = I * (wn.dx[i] * conv[0][n] + wn.dy[j] * conv[1][n]) / k2;
            }
        }
    }
    p
}

/// Mean-zero `Pi` solving `lap Pi = -div((v . grad) v)`.
pub fn recover_pressure(state: &IncompressibleState2D) -> ScalarField2D {
    let wn = Wavenumbers::new(&state.grid);
    let p = pressure_hat(&convective_hat(state, &wn), &wn);
    ScalarField2D::new(state.grid, to_physical(&p, &state.grid)).expect("finite")
}

/// `d_t v = -(v . grad) v - grad Pi`.
pub fn velocity_time_derivative(state: &IncompressibleState2D) -> VectorField2D {
    let g = state.grid;
    let wn = Wavenumbers::new(&g);
    let conv = convective_hat(state, &wn);
    let p = pressure_hat(&conv, &wn);
    let [px, py] = grad_hat(&p, &wn);
    let a: Vec<C64> = (0..p.len()).map(|n| -(conv[0][n] + px[n])).collect();
    let b: Vec<C64> = (0..p.len()).map(|n| -(conv[1][n] + py[n])).collect();
    VectorField2D::new(g, [to_physical(&a, &g), to_physical(&b, &g)]).expect("finite")
}

/// Divergence-free part: `u_hat - k (k . u_hat) / |k|^2` for `k != 0`.
pub fn helmholtz_project(u: &VectorField2D) -> VectorField2D {
    let g = *u.grid();
    let wn = Wavenumbers::new(&g);
    let mut a = to_spectrum(u.component(0), &g);
    let mut b = to_spectrum(u.component(1), &g);
    for i in 0..g.nx {
        for j in 0..g.ny {
            let (kx, ky) = (wn.dx[i], wn.dy[j]);
            let k2 = kx * kx + ky * ky;
            if k2 > 0.0 {
                let n = g.index(i, j);
                let dot = (a[n] * kx + b[n] * ky) / k2;
                a[n] -= dot * kx;
                b[n] -= dot * ky;
            }
        }
    }
    VectorField2D::new(g, [to_physical(&a, &g), to_physical(&b, &g)]).expect("finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DiscreteNorm;
    use crate::spectral::divergence;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid2D {
        Grid2D::new(n, n, 2.0 * PI).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn taylor_green(g: Grid2D) -> IncompressibleState2D {
        // psi = cos x1 cos x2 gives w = -2 psi
        let w = ScalarField2D::from_fn(g, |x| -2.0 * x[0].cos() * x[1].cos()).unwrap();
        IncompressibleState2D::new(&w, 0.0).unwrap()
    }

    #[test]
    fn projection_examples() {
        let g = grid(32);
        let grad = VectorField2D::from_fn(g, |x| [x[0].cos(), 0.0]).unwrap();
        let p = helmholtz_project(&grad);
        assert!(p.discrete_norm(f64::INFINITY, 0).unwrap() < 1e-13);
        let shear = VectorField2D::from_fn(g, |x| [x[1].sin(), 0.0]).unwrap();
        let p = helmholtz_project(&shear);
        assert!(max_diff(p.component(0), shear.component(0)) < 1e-13);
        assert!(max_diff(p.component(1), shear.component(1)) < 1e-13);
        let mixed = VectorField2D::from_fn(g, |x| [x[0].cos() + x[1].sin(), 0.0]).unwrap();
        let p = helmholtz_project(&mixed);
        assert!(max_diff(p.component(0), shear.component(0)) < 1e-13);
        assert!(max_diff(p.component(1), shear.component(1)) < 1e-13);
    }

    #[test]
    fn projection_idempotent_orthogonal_solenoidal() {
        let g = grid(32);
        let u = VectorField2D::from_fn(g, |x| {
            [(2.0 * x[0]).sin() * x[1].cos() + 0.3 * (x[0] + 3.0 * x[1]).cos(), x[0].cos() * (5.0 * x[1]).sin()]
        })
        .unwrap();
        let p = helmholtz_project(&u);
        let pp = helmholtz_project(&p);
        assert!(pp.sub(&p).unwrap().discrete_norm(2.0, 0).unwrap() <= 1e-13);
        assert!(p.dot(&u.sub(&p).unwrap()).unwrap().abs() <= 1e-12);
        assert!(divergence(&p).discrete_norm(f64::INFINITY, 0).unwrap() <= 1e-12);
    }

    #[test]
    fn zero_vorticity_stays_zero() {
        let s = IncompressibleState2D::zeros(grid(16));
        let t = euler_step(&s, 0.1).unwrap();
        assert!(t.omega().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn velocity_of_taylor_green() {
        let g = grid(32);
        let v = taylor_green(g).velocity();
        let exact = VectorField2D::from_fn(g, |x| [x[0].cos() * x[1].sin(), -x[0].sin() * x[1].cos()]).unwrap();
        assert!(max_diff(v.component(0), exact.component(0)) < 1e-13);
        assert!(max_diff(v.component(1), exact.component(1)) < 1e-13);
        assert!(divergence(&v).discrete_norm(f64::INFINITY, 0).unwrap() < 1e-12);
    }

    #[test]
    fn eigenfunction_is_steady() {
        let g = grid(32);
        let s0 = taylor_green(g);
        let mut s = s0.clone();
        for _ in 0..1000 {
            s = euler_step(&s, 1e-2).unwrap();
        }
        let w0 = s0.omega();
        let d = s.omega().values().iter().zip(w0.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let n = w0.values().iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(d / n < 1e-8, "{}", d / n);
    }

    #[test]
    fn shear_is_steady() {
        let g = grid(32);
        let w = ScalarField2D::from_fn(g, |x| x[1].sin()).unwrap();
        let s0 = IncompressibleState2D::new(&w, 0.0).unwrap();
        let mut s = s0.clone();
        for _ in 0..200 {
            s = euler_step(&s, 1e-2).unwrap();
        }
        assert!(max_diff(s.omega().values(), w.values()) < 1e-10);
    }

    #[test]
    fn taylor_green_pressure() {
        // substituting v into the momentum equation gives Pi = -(cos 2x1 + cos 2x2) / 4
        let g = grid(32);
        let p = recover_pressure(&taylor_green(g));
        let exact = ScalarField2D::from_fn(g, |x| -0.25 * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos())).unwrap();
        assert!(max_diff(p.values(), exact.values()) < 1e-10);
        // steady: d_t v vanishes
        let dv = velocity_time_derivative(&taylor_green(g));
        assert!(dv.discrete_norm(f64::INFINITY, 0).unwrap() < 1e-12);
    }

    #[test]
    fn shear_and_rest_have_zero_pressure() {
        let g = grid(16);
        assert!(recover_pressure(&IncompressibleState2D::zeros(g)).values().iter().all(|&v| v == 0.0));
        let w = ScalarField2D::from_fn(g, |x| (2.0 * x[1]).cos()).unwrap();
        let p = recover_pressure(&IncompressibleState2D::new(&w, 0.0).unwrap());
        assert!(p.values().iter().all(|v| v.abs() < 1e-14));
    }

    fn generic_state(g: Grid2D) -> IncompressibleState2D {
        let w = ScalarField2D::from_fn(g, |x| {
            (x[0] + 0.3).sin() * (2.0 * x[1]).cos() + 0.5 * (2.0 * x[0] - x[1]).cos() + 0.2 * (3.0 * x[1]).sin()
        })
        .unwrap();
        IncompressibleState2D::new(&w, 0.0).unwrap()
    }

    #[test]
    fn energy_and_enstrophy_conserved() {
        let g = grid(128);
        let s0 = generic_state(g);
        let (e0, z0) = (s0.kinetic_energy(), s0.enstrophy());
        let s = advance_to(&s0, 1.0, 1e-2).unwrap();
        assert!(((s.kinetic_energy() - e0) / e0).abs() < 1e-6);
        assert!(((s.enstrophy() - z0) / z0).abs() < 1e-6);
        assert!(s.omega().values().iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn momentum_residual_is_second_order_in_dt() {
        // centred difference of snapshots against the analytic d_t v
        let g = grid(32);
        let s0 = advance_to(&generic_state(g), 0.2, 1e-3).unwrap();
        let residual = |h: f64| {
            let plus = advance_to(&s0, s0.time + h, h / 4.0).unwrap().velocity();
            // time reversal: v(-h) = -v'(h) where v' starts from -v(0)
            let flip = |s: &IncompressibleState2D| IncompressibleState2D {
                grid: g,
                omega_hat: s.omega_hat.iter().map(|c| -c).collect(),
                time: 0.0,
            };
            let minus = flip(&advance_to(&flip(&s0), h, h / 4.0).unwrap()).velocity();
            let fd = VectorField2D::new(
                g,
                [0, 1].map(|c| {
                    plus.component(c).iter().zip(minus.component(c)).map(|(p, m)| (p - m) / (2.0 * h)).collect()
                }),
            )
            .unwrap();
            fd.sub(&velocity_time_derivative(&s0)).unwrap().discrete_norm(2.0, 0).unwrap()
        };
        let (r1, r2) = (residual(0.02), residual(0.01));
        let rate = (r1 / r2).log2();
        assert!(rate > 1.8 && rate < 2.2, "rate {rate} ({r1:e}, {r2:e})");
    }

    #[test]
    fn cfl_guard() {
        let s = generic_state(grid(32));
        assert!(matches!(euler_step(&s, 1.0), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn under_resolution_flagged() {
        let g = grid(32);
        let w = ScalarField2D::from_fn(g, |x| (9.0 * x[0]).cos() + (x[1]).sin()).unwrap();
        let s = IncompressibleState2D::new(&w, 0.0).unwrap();
        assert!(matches!(euler_step(&s, 1e-3), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn nonzero_mean_vorticity_rejected() {
        let w = ScalarField2D::from_fn(grid(8), |_| 1.0).unwrap();
        assert!(IncompressibleState2D::new(&w, 0.0).is_err());
    }
}

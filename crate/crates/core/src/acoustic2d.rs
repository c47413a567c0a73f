//! Exact Fourier propagator for the scaled 2D acoustic system
//!
//! ```text
//! eps d_t s + rho_tilde lap Psi = 0
//! eps d_t grad Psi + (a^2 / rho_tilde) grad s = 0
//! ```
//!
//! together with the spectral regularization `[.]_eta` and time-norm
//! instrumentation of the dispersive decay.

use serde::Serialize;

use crate::domain::{lp_norm, time_norm_of_samples, DiscreteNorm, Grid2D, ScalarField2D, VectorField2D};
use crate::error::{Error, Result};
use crate::pressure::PressureLaw;
use crate::spectral::{to_physical, to_spectrum, SpectralField2D, Wavenumbers, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticState2D {
    grid: Grid2D,
    s_hat: Vec<C64>,
    psi_hat: Vec<C64>,
    pub time: f64,
    epsilon: f64,
    rho_tilde: f64,
    a2: f64,
}

impl AcousticState2D {
    pub fn new(s: &ScalarField2D, psi: &ScalarField2D, epsilon: f64, law: &PressureLaw) -> Result<Self> {
        if s.grid() != psi.grid() {
            return Err(Error::GridMismatch("acoustic density and potential grids differ".into()));
        }
        Self::from_spectra(
            *s.grid(),
            to_spectrum(s.values(), s.grid()),
            to_spectrum(psi.values(), psi.grid()),
            epsilon,
            law,
        )
    }

    pub fn from_spectra(
        grid: Grid2D,
        s_hat: Vec<C64>,
        psi_hat: Vec<C64>,
        epsilon: f64,
        law: &PressureLaw,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        if s_hat.len() != grid.cell_count() || psi_hat.len() != grid.cell_count() {
            return Err(Error::InvalidArgument("coefficient count does not match the grid".into()));
        }
        let a2 = law.sound_speed_squared();
        if !(a2 > 0.0) {
            return Err(Error::HypothesisViolated {
                sample: law.rho_tilde(),
                reason: "p'(rho_tilde) must be positive".into(),
            });
        }
        Ok(Self { grid, s_hat, psi_hat, time: 0.0, epsilon, rho_tilde: law.rho_tilde(), a2 })
    }

    pub fn zeros(grid: Grid2D, epsilon: f64, law: &PressureLaw) -> Result<Self> {
        let n = grid.cell_count();
        Self::from_spectra(grid, vec![C64::default(); n], vec![C64::default(); n], epsilon, law)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn s_hat(&self) -> &[C64] {
        &self.s_hat
    }

    pub fn psi_hat(&self) -> &[C64] {
        &self.psi_hat
    }

    pub fn s(&self) -> ScalarField2D {
        ScalarField2D::new(self.grid, to_physical(&self.s_hat, &self.grid)).expect("finite")
    }

    pub fn psi(&self) -> ScalarField2D {
        ScalarField2D::new(self.grid, to_physical(&self.psi_hat, &self.grid)).expect("finite")
    }

    pub fn s_spectral(&self) -> SpectralField2D {
        SpectralField2D::new(self.grid, self.s_hat.clone()).expect("finite")
    }

    pub fn psi_spectral(&self) -> SpectralField2D {
        SpectralField2D::new(self.grid, self.psi_hat.clone()).expect("finite")
    }

    fn map_spectrum(&self, c: &[C64], m: impl Fn(&Wavenumbers, usize, usize) -> C64) -> Vec<f64> {
        let wn = Wavenumbers::new(&self.grid);
        let mut out = c.to_vec();
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                out[self.grid.index(i, j)] *= m(&wn, i, j);
            }
        }
        to_physical(&out, &self.grid)
    }

    pub fn grad_psi(&self) -> VectorField2D {
        let a = self.map_spectrum(&self.psi_hat, |w, i, _| I * w.dx[i]);
        let b = self.map_spectrum(&self.psi_hat, |w, _, j| I * w.dy[j]);
        VectorField2D::new(self.grid, [a, b]).expect("finite")
    }

    pub fn grad_s(&self) -> VectorField2D {
        let a = self.map_spectrum(&self.s_hat, |w, i, _| I * w.dx[i]);
        let b = self.map_spectrum(&self.s_hat, |w, _, j| I * w.dy[j]);
        VectorField2D::new(self.grid, [a, b]).expect("finite")
    }

    pub fn laplacian_psi(&self) -> ScalarField2D {
        let v = self.map_spectrum(&self.psi_hat, |w, i, j| C64::new(-w.k2(i, j), 0.0));
        ScalarField2D::new(self.grid, v).expect("finite")
    }

    /// Second derivatives `d_a d_b Psi` as `[d11, d12, d22]`.
    pub fn hessian_psi(&self) -> [ScalarField2D; 3] {
        let d11 = self.map_spectrum(&self.psi_hat, |w, i, _| C64::new(-w.kx[i] * w.kx[i], 0.0));
        let d12 = self.map_spectrum(&self.psi_hat, |w, i, j| C64::new(-w.dx[i] * w.dy[j], 0.0));
        let d22 = self.map_spectrum(&self.psi_hat, |w, _, j| C64::new(-w.ky[j] * w.ky[j], 0.0));
        [d11, d12, d22].map(|v| ScalarField2D::new(self.grid, v).expect("finite"))
    }

    /// `d_t s = -(rho_tilde / eps) lap Psi`.
    pub fn dt_s(&self) -> ScalarField2D {
        let c = -self.rho_tilde / self.epsilon;
        self.laplacian_psi().map(|v| c * v).expect("finite")
    }

    /// `d_t grad Psi = -(a^2 / (rho_tilde eps)) grad s`.
    pub fn dt_grad_psi(&self) -> VectorField2D {
        let c = -self.a2 / (self.rho_tilde * self.epsilon);
        let [a, b] = self.grad_s().into_components();
        VectorField2D::new(self.grid, [a, b].map(|v| v.into_iter().map(|x| c * x).collect())).expect("finite")
    }

    /// `int 1/2 (a^2 s^2 + rho_tilde^2 |grad Psi|^2)` by Parseval.
    pub fn energy(&self) -> f64 {
        let wn = Wavenumbers::new(&self.grid);
        let mut total = 0.0;
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                let n = self.grid.index(i, j);
                total += self.a2 * self.s_hat[n].norm_sqr()
                    + self.rho_tilde.powi(2) * wn.k2(i, j) * self.psi_hat[n].norm_sqr();
            }
        }
        0.5 * total * self.grid.cell_area() / self.grid.cell_count() as f64
    }

    /// Largest `a |k| / eps` carried by a nonzero mode.
    pub fn max_frequency(&self) -> f64 {
        let wn = Wavenumbers::new(&self.grid);
        let scale = self.s_hat.iter().chain(&self.psi_hat).fold(0.0f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut kmax: f64 = 0.0;
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                let n = self.grid.index(i, j);
                if self.s_hat[n].norm() > 1e-14 * scale || self.psi_hat[n].norm() > 1e-14 * scale {
                    kmax = kmax.max(wn.kabs(i, j));
                }
            }
        }
        self.a2.sqrt() * kmax / self.epsilon
    }

    /// Exact solution after a further time `t` (negative `t` runs backwards).
    ///
    /// Each mode `k != 0` rotates with frequency `a |k| / eps`; the mean of
    /// `s` is constant and the mean of `Psi` is left untouched since only
    /// `grad Psi` enters the system.
    pub fn propagate(&self, t: f64) -> Self {
        let wn = Wavenumbers::new(&self.grid);
        let a = self.a2.sqrt();
        let mut s_hat = self.s_hat.clone();
        let mut psi_hat = self.psi_hat.clone();
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                let k = wn.kabs(i, j);
                if k == 0.0 {
                    continue;
                }
                let n = self.grid.index(i, j);
                let (sn, cs) = (a * k * t / self.epsilon).sin_cos();
                let ratio = self.rho_tilde * k / a;
                let (s0, p0) = (self.s_hat[n], self.psi_hat[n]);
                s_hat[n] = s0 * cs + p0 * (ratio * sn);
                psi_hat[n] = p0 * cs - s0 * (sn / ratio);
            }
        }
        Self { s_hat, psi_hat, time: self.time + t, ..self.clone() }
    }

    pub fn regularized(&self, params: &RegularizationParams) -> Self {
        let wn = Wavenumbers::new(&self.grid);
        let mut out = self.clone();
        truncate(&mut out.s_hat, &wn, params.cutoff_wavenumber());
        truncate(&mut out.psi_hat, &wn, params.cutoff_wavenumber());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularizationParams {
    pub eta: f64,
}

impl RegularizationParams {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
        }
        Ok(Self { eta })
    }

    /// `K(eta) = ceil(1 / eta)`, a physical wavenumber.
    pub fn cutoff_wavenumber(&self) -> f64 {
        (1.0 / self.eta).ceil()
    }
}

fn truncate(c: &mut [C64], wn: &Wavenumbers, cutoff: f64) {
    for i in 0..wn.nx {
        for j in 0..wn.ny {
            if wn.kabs(i, j) > cutoff * (1.0 + 1e-12) {
                c[i * wn.ny + j] = C64::default();
            }
        }
    }
}

/// Sharp spectral truncation to `|k| <= K(eta)`.
pub fn regularize(field: &ScalarField2D, params: &RegularizationParams) -> ScalarField2D {
    let g = field.grid();
    let mut c = to_spectrum(field.values(), g);
    truncate(&mut c, &Wavenumbers::new(g), params.cutoff_wavenumber());
    ScalarField2D::new(*g, to_physical(&c, g)).expect("finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersiveReport {
    /// `||Psi||_{L^q W^{k,p}} + ||s||_{L^q W^{k,p}}`.
    pub value: f64,
    pub psi_norm: f64,
    pub s_norm: f64,
    /// Set when `omega_max * horizon / samples > pi / 4`.
    pub undersampled: bool,
    pub omega_max: f64,
}

/// `true` when `2/q = 1/2 - 1/p` with `p` in `(2, inf)`.
pub fn dispersive_pair_admissible(q: f64, p: f64) -> bool {
    p > 2.0 && p.is_finite() && q > 4.0 && (2.0 / q - (0.5 - 1.0 / p)).abs() < 1e-12
}

/// Time norms over `[0, horizon]` sampled at `samples` equispaced times.
/// Pass `allow_any_pair` to skip the exponent relation check.
pub fn dispersive_norms(
    state0: &AcousticState2D,
    horizon: f64,
    samples: usize,
    q: f64,
    p: f64,
    k: usize,
    allow_any_pair: bool,
) -> Result<DispersiveReport> {
    if samples < 2 {
        return Err(Error::InsufficientSamples(samples));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if !allow_any_pair && !dispersive_pair_admissible(q, p) {
        return Err(Error::InvalidArgument(format!("exponents q = {q}, p = {p} violate 2/q = 1/2 - 1/p")));
    }
    let times: Vec<f64> = (0..samples).map(|i| horizon * i as f64 / (samples - 1) as f64).collect();
    let mut psi_norms = Vec::with_capacity(samples);
    let mut s_norms = Vec::with_capacity(samples);
    for &t in &times {
        let st = state0.propagate(t);
        psi_norms.push(st.psi_spectral().discrete_norm(p, k)?);
        s_norms.push(st.s_spectral().discrete_norm(p, k)?);
    }
    let psi_norm = time_norm_of_samples(&times, &psi_norms, q)?;
    let s_norm = time_norm_of_samples(&times, &s_norms, q)?;
    let omega_max = state0.max_frequency();
    let undersampled = omega_max * horizon / samples as f64 > std::f64::consts::FRAC_PI_4;
    if undersampled {
        log::warn!("dispersive norms under-sampled: omega_max = {omega_max:.3e}, {samples} samples over {horizon}");
    }
    Ok(DispersiveReport { value: psi_norm + s_norm, psi_norm, s_norm, undersampled, omega_max })
}

/// `L^p` norm of a plain sample vector on a 2D grid (cell quadrature).
pub fn field_lp(values: &[f64], grid: &Grid2D, p: f64) -> f64 {
    lp_norm(values.iter().copied(), grid.cell_area(), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit_law() -> PressureLaw {
        // p = rho^2 / 2: rho_tilde = 1, a = 1
        PressureLaw::power(2.0, 0.5, 1.0).unwrap()
    }

    fn grid() -> Grid2D {
        Grid2D::new(32, 32, 2.0 * PI).unwrap()
    }

    fn random_band_limited(seed: u64, g: Grid2D, kmax: i64) -> ScalarField2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(f64, f64, f64, f64)> = (0..12)
            .map(|_| {
                (
                    rng.gen_range(-kmax..=kmax) as f64,
                    rng.gen_range(-kmax..=kmax) as f64,
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect();
        ScalarField2D::from_fn(g, |x| modes.iter().map(|&(a, b, amp, ph)| amp * (a * x[0] + b * x[1] + ph).cos()).sum())
            .unwrap()
    }

    fn random_state(seed: u64) -> AcousticState2D {
        let g = grid();
        AcousticState2D::new(&random_band_limited(seed, g, 6), &random_band_limited(seed + 1, g, 6), 0.3, &unit_law())
            .unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_state_stays_zero() {
        let s = AcousticState2D::zeros(grid(), 0.1, &unit_law()).unwrap().propagate(3.0);
        assert!(s.s().values().iter().all(|&v| v == 0.0));
        assert_eq!(s.energy(), 0.0);
    }

    #[test]
    fn single_mode_hand_solution() {
        let g = grid();
        let s0 = ScalarField2D::from_fn(g, |x| x[0].cos()).unwrap();
        let st = AcousticState2D::new(&s0, &ScalarField2D::zeros(g), 0.5, &unit_law()).unwrap();
        for t in [0.1f64, 0.7, 2.3] {
            let exact = ScalarField2D::from_fn(g, |x| x[0].cos() * (2.0 * t).cos()).unwrap();
            assert!(max_diff(st.propagate(t).s().values(), exact.values()) < 1e-13);
        }
    }

    #[test]
    fn propagated_state_solves_the_system() {
        // d_t s by centred difference against -(rho_tilde/eps) lap Psi
        let st = random_state(3).propagate(0.4);
        let h = 1e-5;
        let fd: Vec<f64> = st
            .propagate(h)
            .s()
            .values()
            .iter()
            .zip(st.propagate(-h).s().values())
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let exact = st.dt_s();
        let scale = exact.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_diff(&fd, exact.values()) < 1e-6 * scale);
        let gp = |s: &AcousticState2D| s.grad_psi();
        let (plus, minus) = (gp(&st.propagate(h)), gp(&st.propagate(-h)));
        let dt = st.dt_grad_psi();
        for c in 0..2 {
            let fd: Vec<f64> =
                plus.component(c).iter().zip(minus.component(c)).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let scale = dt.component(c).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max_diff(&fd, dt.component(c)) < 1e-6 * scale);
        }
    }

    #[test]
    fn energy_conserved_at_late_time() {
        let st = random_state(7);
        let e0 = st.energy();
        assert!(((st.propagate(17.3).energy() - e0) / e0).abs() < 1e-12);
    }

    #[test]
    fn group_property_and_reversal() {
        let st = random_state(11);
        let a = st.propagate(0.3).propagate(1.1);
        let b = st.propagate(1.4);
        assert!(max_diff(a.s().values(), b.s().values()) < 1e-12);
        assert!(max_diff(a.psi().values(), b.psi().values()) < 1e-12);
        let back = b.propagate(-1.4);
        assert!(max_diff(back.s().values(), st.s().values()) < 1e-12);
        assert!(max_diff(back.psi().values(), st.psi().values()) < 1e-12);
    }

    #[test]
    fn sobolev_norms_preserved_shellwise() {
        // exact rotation keeps every |k|-shell's energy, so the W^{m,2}
        // norm of the pair (a s, rho_tilde |k| Psi) is time-independent
        let st = random_state(5);
        let pair_norm = |s: &AcousticState2D, m: i32| {
            let wn = Wavenumbers::new(s.grid());
            let mut total = 0.0;
            for i in 0..32 {
                for j in 0..32 {
                    let n = s.grid().index(i, j);
                    let k2 = wn.k2(i, j);
                    total += (1.0 + k2).powi(m) * (s.s_hat()[n].norm_sqr() + k2 * s.psi_hat()[n].norm_sqr());
                }
            }
            total
        };
        for m in 0..3 {
            let n0 = pair_norm(&st, m);
            for t in [0.5, 1.5, 4.0] {
                assert!((pair_norm(&st.propagate(t), m) - n0).abs() <= 1e-12 * n0);
            }
        }
    }

    #[test]
    fn regularize_examples() {
        let g = grid();
        let p = RegularizationParams::new(0.2).unwrap();
        assert_eq!(p.cutoff_wavenumber(), 5.0);
        let f = ScalarField2D::from_fn(g, |x| x[0].cos() + (10.0 * x[0]).cos()).unwrap();
        let r = regularize(&f, &p);
        let expected = ScalarField2D::from_fn(g, |x| x[0].cos()).unwrap();
        assert!(max_diff(r.values(), expected.values()) < 1e-13);
        let band = random_band_limited(1, g, 3);
        assert!(max_diff(regularize(&band, &p).values(), band.values()) < 1e-13);
        assert!(RegularizationParams::new(0.0).is_err());
    }

    #[test]
    fn regularize_parseval_split() {
        let g = grid();
        let f = random_band_limited(9, g, 14);
        let p = RegularizationParams::new(0.15).unwrap();
        let kept = regularize(&f, &p);
        let dropped =
            ScalarField2D::new(g, f.values().iter().zip(kept.values()).map(|(a, b)| a - b).collect()).unwrap();
        let sq = |h: &ScalarField2D| h.values().iter().map(|v| v * v).sum::<f64>() * g.cell_area();
        let (a, b, c) = (sq(&f), sq(&kept), sq(&dropped));
        assert!((a - b - c).abs() <= 1e-12 * a);
        assert!(b <= a);
    }

    #[test]
    fn regularize_sobolev_bound() {
        let g = grid();
        let f = random_band_limited(13, g, 12);
        let p = RegularizationParams::new(0.25).unwrap();
        let r = SpectralField2D::from_physical(&regularize(&f, &p));
        let l2 = f.discrete_norm(2.0, 0).unwrap();
        let kk = p.cutoff_wavenumber();
        for m in 1..4 {
            // W^{m,2} sums all derivative orders up to m, hence the (m+1) factor
            let bound = ((m + 1) as f64).sqrt() * (1.0 + kk).powi(m as i32) * l2;
            assert!(r.discrete_norm(2.0, m).unwrap() <= bound);
        }
    }

    #[test]
    fn regularize_commutes_with_propagate() {
        let st = random_state(21);
        let p = RegularizationParams::new(0.3).unwrap();
        let a = st.regularized(&p).propagate(0.9);
        let b = st.propagate(0.9).regularized(&p);
        assert!(max_diff(a.s().values(), b.s().values()) < 1e-13);
        assert!(max_diff(a.psi().values(), b.psi().values()) < 1e-13);
    }

    #[test]
    fn dispersive_norm_examples() {
        assert!(dispersive_pair_admissible(8.0, 4.0));
        assert!(!dispersive_pair_admissible(8.0, 3.0));
        let zero = AcousticState2D::zeros(grid(), 0.1, &unit_law()).unwrap();
        assert_eq!(dispersive_norms(&zero, 1.0, 10, 8.0, 4.0, 0, false).unwrap().value, 0.0);
        assert!(dispersive_norms(&zero, 1.0, 10, 8.0, 3.0, 0, false).is_err());
        assert!(dispersive_norms(&zero, 1.0, 1, 8.0, 4.0, 0, false).is_err());

        // single mode, q = inf, p = 2: s and Psi amplitudes trade off, the
        // rotating pair keeps a fixed L^2 norm
        let g = grid();
        let s0 = ScalarField2D::from_fn(g, |x| x[0].cos()).unwrap();
        let st = AcousticState2D::new(&s0, &ScalarField2D::zeros(g), 0.5, &unit_law()).unwrap();
        let rep = dispersive_norms(&st, PI / 2.0, 9, f64::INFINITY, 2.0, 0, true).unwrap();
        let amp = (PI * PI * 2.0).sqrt();
        assert!((rep.s_norm - amp).abs() < 1e-12);
        assert!((rep.psi_norm - amp).abs() < 1e-12);
        assert!(!rep.undersampled);
        let rep = dispersive_norms(&st, 100.0, 4, 8.0, 4.0, 0, false).unwrap();
        assert!(rep.undersampled);
    }

    proptest! {
        #[test]
        fn propagate_is_linear(seed in 0u64..1000, t in -3.0..3.0f64, c in -2.0..2.0f64) {
            let a = random_state(seed);
            let b = random_state(seed + 17);
            let sum = AcousticState2D {
                s_hat: a.s_hat.iter().zip(&b.s_hat).map(|(x, y)| x * c + y).collect(),
                psi_hat: a.psi_hat.iter().zip(&b.psi_hat).map(|(x, y)| x * c + y).collect(),
                ..a.clone()
            };
            let lhs = sum.propagate(t).s();
            let (pa, pb) = (a.propagate(t).s(), b.propagate(t).s());
            let rhs: Vec<f64> = pa.values().iter().zip(pb.values()).map(|(x, y)| c * x + y).collect();
            prop_assert!(max_diff(lhs.values(), &rhs) < 1e-12);
        }
    }
}

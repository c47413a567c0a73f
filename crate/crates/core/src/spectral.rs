//! Two-dimensional periodic FFT helpers and spectrally represented fields.
//!
//! Forward transforms are unnormalised; the inverse carries the `1/N`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::domain::{check_exponent, lp_norm, DiscreteNorm, Grid2D, OnGrid, ScalarField2D, VectorField2D};
use crate::error::{Error, Result};

pub type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

pub struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, usize), Rc<Fft2>>> = RefCell::new(HashMap::new());
}

impl Fft2 {
    fn build(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    /// Cached plan for the given sizes (per thread).
    pub fn get(nx: usize, ny: usize) -> Rc<Fft2> {
        PLANS.with(|p| p.borrow_mut().entry((nx, ny)).or_insert_with(|| Rc::new(Self::build(nx, ny))).clone())
    }

    fn transform(&self, data: &mut [C64], along_y: &Arc<dyn Fft<f64>>, along_x: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.nx * self.ny);
        along_y.process(data);
        let mut col = vec![C64::default(); self.nx];
        for j in 0..self.ny {
            for i in 0..self.nx {
                col[i] = data[i * self.ny + j];
            }
            along_x.process(&mut col);
            for i in 0..self.nx {
                data[i * self.ny + j] = col[i];
            }
        }
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, &self.fwd_y, &self.fwd_x);
    }

    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, &self.inv_y, &self.inv_x);
        let s = 1.0 / (self.nx * self.ny) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

fn signed_mode(i: usize, n: usize) -> i64 {
    if 2 * i < n {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Physical wavenumbers of a periodic grid in FFT order.
#[derive(Debug, Clone)]
pub struct Wavenumbers {
    pub nx: usize,
    pub ny: usize,
    /// Integer mode indices in FFT order.
    pub mode_x: Vec<i64>,
    pub mode_y: Vec<i64>,
    /// `2 pi n / L`, used for even operators such as the Laplacian.
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    /// As above with the Nyquist mode zeroed, used for odd derivatives.
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl Wavenumbers {
    pub fn new(grid: &Grid2D) -> Self {
        let base = 2.0 * PI / grid.length;
        let build = |n: usize| {
            let modes: Vec<i64> = (0..n).map(|i| signed_mode(i, n)).collect();
            let k: Vec<f64> = modes.iter().map(|&m| base * m as f64).collect();
            let d: Vec<f64> =
                modes.iter().map(|&m| if n % 2 == 0 && m == -(n as i64) / 2 { 0.0 } else { base * m as f64 }).collect();
            (modes, k, d)
        };
        let (mode_x, kx, dx) = build(grid.nx);
        let (mode_y, ky, dy) = build(grid.ny);
        Self { nx: grid.nx, ny: grid.ny, mode_x, mode_y, kx, ky, dx, dy }
    }

    #[inline]
    pub fn k2(&self, i: usize, j: usize) -> f64 {
        self.kx[i] * self.kx[i] + self.ky[j] * self.ky[j]
    }

    #[inline]
    pub fn kabs(&self, i: usize, j: usize) -> f64 {
        self.k2(i, j).sqrt()
    }

    /// Mask of the 2/3-rule: modes kept by dealiased products.
    #[inline]
    pub fn dealiased(&self, i: usize, j: usize) -> bool {
        3 * self.mode_x[i].unsigned_abs() as usize <= self.nx && 3 * self.mode_y[j].unsigned_abs() as usize <= self.ny
    }
}

pub fn to_spectrum(values: &[f64], grid: &Grid2D) -> Vec<C64> {
    let mut data: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
    Fft2::get(grid.nx, grid.ny).forward(&mut data);
    data
}

pub fn to_physical(coeffs: &[C64], grid: &Grid2D) -> Vec<f64> {
    let mut data = coeffs.to_vec();
    Fft2::get(grid.nx, grid.ny).inverse(&mut data);
    data.into_iter().map(|c| c.re).collect()
}

/// A periodic scalar field stored by its Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField2D {
    grid: Grid2D,
    coeffs: Vec<C64>,
}

impl SpectralField2D {
    pub fn new(grid: Grid2D, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != grid.cell_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                grid.cell_count(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite spectral coefficient".into()));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, coeffs: vec![C64::default(); grid.cell_count()] }
    }

    pub fn from_physical(field: &ScalarField2D) -> Self {
        Self { grid: *field.grid(), coeffs: to_spectrum(field.values(), field.grid()) }
    }

    pub fn to_physical(&self) -> ScalarField2D {
        ScalarField2D::new(self.grid, to_physical(&self.coeffs, &self.grid))
            .expect("inverse transform of finite coefficients is finite")
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    /// Apply a mode-wise multiplier `m(kx, ky)` given as a closure over
    /// `(i, j)` indices into [`Wavenumbers`].
    pub fn multiply(&self, wn: &Wavenumbers, m: impl Fn(&Wavenumbers, usize, usize) -> C64) -> Self {
        let mut out = self.coeffs.clone();
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                out[i * self.grid.ny + j] *= m(wn, i, j);
            }
        }
        Self { grid: self.grid, coeffs: out }
    }

    /// Mixed partial derivative `d1^a d2^b`.
    pub fn derivative(&self, wn: &Wavenumbers, a: usize, b: usize) -> Self {
        if a == 0 && b == 0 {
            return self.clone();
        }
        self.multiply(wn, |w, i, j| {
            let kx = if a % 2 == 1 { w.dx[i] } else { w.kx[i] };
            let ky = if b % 2 == 1 { w.dy[j] } else { w.ky[j] };
            (I * kx).powi(a as i32) * (I * ky).powi(b as i32)
        })
    }

    pub fn gradient(&self, wn: &Wavenumbers) -> [Self; 2] {
        [self.derivative(wn, 1, 0), self.derivative(wn, 0, 1)]
    }

    pub fn laplacian(&self, wn: &Wavenumbers) -> Self {
        self.multiply(wn, |w, i, j| C64::new(-w.k2(i, j), 0.0))
    }

    /// Squared `L^2` norm via Parseval.
    pub fn l2_squared(&self) -> f64 {
        let n = self.grid.cell_count() as f64;
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.cell_area() / n
    }
}

impl OnGrid for SpectralField2D {
    type Grid = Grid2D;
    fn grid_key(&self) -> Grid2D {
        self.grid
    }
}

impl DiscreteNorm for SpectralField2D {
    /// `(sum_{|a| <= k} ||d^a f||_p^p)^(1/p)`, max over `a` for `p = inf`.
    /// Uses Parseval for `p = 2`.
    fn discrete_norm(&self, p: f64, k: usize) -> Result<f64> {
        check_exponent(p)?;
        let wn = Wavenumbers::new(&self.grid);
        if p == 2.0 {
            let n = self.grid.cell_count() as f64;
            let mut total = 0.0;
            for i in 0..self.grid.nx {
                for j in 0..self.grid.ny {
                    let mut weight = 0.0;
                    for order in 0..=k {
                        for a in 0..=order {
                            let b = order - a;
                            let kx = if a % 2 == 1 { wn.dx[i] } else { wn.kx[i] };
                            let ky = if b % 2 == 1 { wn.dy[j] } else { wn.ky[j] };
                            weight += kx.powi(2 * a as i32) * ky.powi(2 * b as i32);
                        }
                    }
                    total += weight * self.coeffs[i * self.grid.ny + j].norm_sqr();
                }
            }
            return Ok((total * self.grid.cell_area() / n).sqrt());
        }
        let area = self.grid.cell_area();
        let mut acc: f64 = 0.0;
        for order in 0..=k {
            for a in 0..=order {
                let d = self.derivative(&wn, a, order - a);
                let vals = to_physical(&d.coeffs, &self.grid);
                let norm = lp_norm(vals.into_iter(), area, p);
                if p.is_infinite() {
                    acc = acc.max(norm);
                } else {
                    acc += norm.powf(p);
                }
            }
        }
        Ok(if p.is_infinite() { acc } else { acc.powf(1.0 / p) })
    }
}

/// Spectral divergence of a periodic 2D vector field.
pub fn divergence(u: &VectorField2D) -> ScalarField2D {
    let g = *u.grid();
    let wn = Wavenumbers::new(&g);
    let a = to_spectrum(u.component(0), &g);
    let b = to_spectrum(u.component(1), &g);
    let mut d = vec![C64::default(); g.cell_count()];
    for i in 0..g.nx {
        for j in 0..g.ny {
            let n = g.index(i, j);
            d[n] = I * wn.dx[i] * a[n] + I * wn.dy[j] * b[n];
        }
    }
    ScalarField2D::new(g, to_physical(&d, &g)).expect("finite")
}

/// Spectral curl `d1 u2 - d2 u1`.
pub fn curl(u: &VectorField2D) -> ScalarField2D {
    let g = *u.grid();
    let wn = Wavenumbers::new(&g);
    let a = to_spectrum(u.component(0), &g);
    let b = to_spectrum(u.component(1), &g);
    let mut d = vec![C64::default(); g.cell_count()];
    for i in 0..g.nx {
        for j in 0..g.ny {
            let n = g.index(i, j);
            d[n] = I * wn.dx[i] * b[n] - I * wn.dy[j] * a[n];
        }
    }
    ScalarField2D::new(g, to_physical(&d, &g)).expect("finite")
}

/// Spectral gradient of a scalar field.
pub fn gradient(f: &ScalarField2D) -> VectorField2D {
    let g = *f.grid();
    let wn = Wavenumbers::new(&g);
    let s = SpectralField2D::from_physical(f);
    let [a, b] = s.gradient(&wn);
    VectorField2D::new(g, [to_physical(&a.coeffs, &g), to_physical(&b.coeffs, &g)]).expect("finite")
}

/// Perpendicular gradient `(-d2 f, d1 f)`.
pub fn perp_gradient(f: &ScalarField2D) -> VectorField2D {
    let g = gradient(f);
    let [a, b] = g.into_components();
    VectorField2D::new(*f.grid(), [b.into_iter().map(|v| -v).collect(), a]).expect("finite")
}

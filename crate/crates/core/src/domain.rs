//! Grids, cell-centred fields, vertical averaging and discrete norms.
//!
//! Horizontal directions are periodic with period `length`; the vertical
//! direction spans `(0, delta)` and is bounded by walls. Storage is
//! row-major with the vertical index fastest: `(i * ny + j) * nz + k`.
//! Two-dimensional fields use `i * ny + j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3D {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub length: f64,
    pub delta: f64,
}

impl Grid3D {
    pub fn new(nx: usize, ny: usize, nz: usize, length: f64, delta: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidGrid(format!("cell counts must be positive, got {nx}x{ny}x{nz}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!("period length must be positive, got {length}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidGrid(format!("layer thickness must be positive, got {delta}")));
        }
        Ok(Self { nx, ny, nz, length, delta })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.length / self.ny as f64
    }

    pub fn dz(&self) -> f64 {
        self.delta / self.nz as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dy() * self.dz()
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn column_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nz + k
    }

    /// Cell-centre coordinates.
    pub fn center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [(i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy(), (k as f64 + 0.5) * self.dz()]
    }

    /// The horizontal trace carrying the same `nx`, `ny` and period.
    pub fn horizontal(&self) -> Grid2D {
        Grid2D { nx: self.nx, ny: self.ny, length: self.length }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, length: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!("cell counts must be positive, got {nx}x{ny}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!("period length must be positive, got {length}")));
        }
        Ok(Self { nx, ny, length })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.length / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy()]
    }

    /// Lift to a layer of thickness `delta` with `nz` vertical cells.
    pub fn extrude(&self, nz: usize, delta: f64) -> Result<Grid3D> {
        Grid3D::new(self.nx, self.ny, nz, self.length, delta)
    }
}

/// Axis-aligned horizontal box used to restrict integrals to a compact set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizontalBox {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl HorizontalBox {
    /// Box of side `fraction * length` centred in the periodic cell.
    pub fn centered(length: f64, fraction: f64) -> Self {
        let c = 0.5 * length;
        let h = 0.5 * fraction * length;
        Self { lower: [c - h, c - h], upper: [c + h, c + h] }
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        (self.lower[0]..=self.upper[0]).contains(&x[0]) && (self.lower[1]..=self.upper[1]).contains(&x[1])
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(idx) => Err(Error::InvalidArgument(format!("{what}: non-finite value at index {idx}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3D {
    grid: Grid3D,
    values: Vec<f64>,
}

impl ScalarField3D {
    pub fn new(grid: Grid3D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::InvalidArgument(format!("expected {} values, got {}", grid.cell_count(), values.len())));
        }
        check_finite(&values, "scalar field")?;
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid3D, value: f64) -> Self {
        Self { grid, values: vec![value; grid.cell_count()] }
    }

    pub fn from_fn(grid: Grid3D, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.cell_count());
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                for k in 0..grid.nz {
                    values.push(f(grid.center(i, j, k)));
                }
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid3D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Integral over the layer (cell-volume weighted sum).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn vertical_average(&self) -> ScalarField2D {
        let g = &self.grid;
        let inv = 1.0 / g.nz as f64;
        let values = self.values.chunks_exact(g.nz).map(|col| col.iter().sum::<f64>() * inv).collect();
        ScalarField2D { grid: g.horizontal(), values }
    }

    /// Constant-in-`x3` extension of a horizontal field.
    pub fn lift(field: &ScalarField2D, grid: Grid3D) -> Result<Self> {
        if field.grid != grid.horizontal() {
            return Err(Error::GridMismatch("lift: horizontal grids differ".into()));
        }
        let values = field.values.iter().flat_map(|&v| std::iter::repeat(v).take(grid.nz)).collect();
        Ok(Self { grid, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField3D {
    grid: Grid3D,
    comps: [Vec<f64>; 3],
}

impl VectorField3D {
    pub fn new(grid: Grid3D, comps: [Vec<f64>; 3]) -> Result<Self> {
        for c in &comps {
            if c.len() != grid.cell_count() {
                return Err(Error::InvalidArgument(format!(
                    "expected {} values per component, got {}",
                    grid.cell_count(),
                    c.len()
                )));
            }
            check_finite(c, "vector field")?;
        }
        Ok(Self { grid, comps })
    }

    pub fn zeros(grid: Grid3D) -> Self {
        let n = grid.cell_count();
        Self { grid, comps: [vec![0.0; n], vec![0.0; n], vec![0.0; n]] }
    }

    pub fn grid(&self) -> &Grid3D {
        &self.grid
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn components(&self) -> &[Vec<f64>; 3] {
        &self.comps
    }

    pub fn into_components(self) -> [Vec<f64>; 3] {
        self.comps
    }

    pub fn integral(&self, c: usize) -> f64 {
        self.comps[c].iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Vertical average of the two horizontal components.
    pub fn vertical_average(&self) -> VectorField2D {
        let avg = |c: &Vec<f64>| ScalarField3D { grid: self.grid, values: c.clone() }.vertical_average().values;
        VectorField2D { grid: self.grid.horizontal(), comps: [avg(&self.comps[0]), avg(&self.comps[1])] }
    }

    pub fn vertical_average_component(&self, c: usize) -> ScalarField2D {
        ScalarField3D { grid: self.grid, values: self.comps[c].clone() }.vertical_average()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::InvalidArgument(format!("expected {} values, got {}", grid.cell_count(), values.len())));
        }
        check_finite(&values, "scalar field")?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.cell_count()] }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.cell_count());
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                values.push(f(grid.center(i, j)));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2D {
    grid: Grid2D,
    comps: [Vec<f64>; 2],
}

impl VectorField2D {
    pub fn new(grid: Grid2D, comps: [Vec<f64>; 2]) -> Result<Self> {
        for c in &comps {
            if c.len() != grid.cell_count() {
                return Err(Error::InvalidArgument(format!(
                    "expected {} values per component, got {}",
                    grid.cell_count(),
                    c.len()
                )));
            }
            check_finite(c, "vector field")?;
        }
        Ok(Self { grid, comps })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        let n = grid.cell_count();
        Self { grid, comps: [vec![0.0; n], vec![0.0; n]] }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        let n = grid.cell_count();
        let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                let v = f(grid.center(i, j));
                a.push(v[0]);
                b.push(v[1]);
            }
        }
        Self::new(grid, [a, b])
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn components(&self) -> &[Vec<f64>; 2] {
        &self.comps
    }

    pub fn into_components(self) -> [Vec<f64>; 2] {
        self.comps
    }

    /// Cell-quadrature `L^2` inner product.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("dot: grids differ".into()));
        }
        let s: f64 = (0..2).map(|c| self.comps[c].iter().zip(&other.comps[c]).map(|(a, b)| a * b).sum::<f64>()).sum();
        Ok(s * self.grid.cell_area())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("sub: grids differ".into()));
        }
        let d = |c: usize| self.comps[c].iter().zip(&other.comps[c]).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid, comps: [d(0), d(1)] })
    }
}

/// Cell-quadrature `W^{k,p}` norms.
///
/// Finite-volume fields only support `k = 0`; spectral fields take
/// derivatives in Fourier space. `p = f64::INFINITY` selects the max norm.
pub trait DiscreteNorm {
    fn discrete_norm(&self, p: f64, k: usize) -> Result<f64>;
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p >= 1.0 && !p.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("exponent must lie in [1, inf], got {p}")))
    }
}

/// `(sum |v|^p * weight)^(1/p)` with the max norm for `p = inf`.
pub(crate) fn lp_norm(values: impl Iterator<Item = f64>, weight: f64, p: f64) -> f64 {
    if p.is_infinite() {
        values.fold(0.0, |m, v| m.max(v.abs()))
    } else if p == 2.0 {
        (values.map(|v| v * v).sum::<f64>() * weight).sqrt()
    } else if p == 1.0 {
        values.map(f64::abs).sum::<f64>() * weight
    } else {
        (values.map(|v| v.abs().powf(p)).sum::<f64>() * weight).powf(1.0 / p)
    }
}

fn fv_only(k: usize) -> Result<()> {
    if k > 0 {
        Err(Error::DerivativeUnavailable(k))
    } else {
        Ok(())
    }
}

impl DiscreteNorm for ScalarField3D {
    fn discrete_norm(&self, p: f64, k: usize) -> Result<f64> {
        check_exponent(p)?;
        fv_only(k)?;
        Ok(lp_norm(self.values.iter().copied(), self.grid.cell_volume(), p))
    }
}

impl DiscreteNorm for VectorField3D {
    fn discrete_norm(&self, p: f64, k: usize) -> Result<f64> {
        check_exponent(p)?;
        fv_only(k)?;
        let mags = (0..self.grid.cell_count())
            .map(|n| (self.comps[0][n].powi(2) + self.comps[1][n].powi(2) + self.comps[2][n].powi(2)).sqrt());
        Ok(lp_norm(mags, self.grid.cell_volume(), p))
    }
}

impl DiscreteNorm for ScalarField2D {
    fn discrete_norm(&self, p: f64, k: usize) -> Result<f64> {
        check_exponent(p)?;
        fv_only(k)?;
        Ok(lp_norm(self.values.iter().copied(), self.grid.cell_area(), p))
    }
}

impl DiscreteNorm for VectorField2D {
    fn discrete_norm(&self, p: f64, k: usize) -> Result<f64> {
        check_exponent(p)?;
        fv_only(k)?;
        let mags = (0..self.grid.cell_count()).map(|n| self.comps[0][n].hypot(self.comps[1][n]));
        Ok(lp_norm(mags, self.grid.cell_area(), p))
    }
}

/// Free-function form of [`DiscreteNorm::discrete_norm`].
pub fn discrete_norm<F: DiscreteNorm + ?Sized>(field: &F, p: f64, k: usize) -> Result<f64> {
    field.discrete_norm(p, k)
}

/// Fields that live on a grid, used to keep a snapshot series homogeneous.
pub trait OnGrid {
    type Grid: PartialEq + Copy + std::fmt::Debug;
    fn grid_key(&self) -> Self::Grid;
}

impl OnGrid for ScalarField3D {
    type Grid = Grid3D;
    fn grid_key(&self) -> Grid3D {
        self.grid
    }
}

impl OnGrid for VectorField3D {
    type Grid = Grid3D;
    fn grid_key(&self) -> Grid3D {
        self.grid
    }
}

impl OnGrid for ScalarField2D {
    type Grid = Grid2D;
    fn grid_key(&self) -> Grid2D {
        self.grid
    }
}

impl OnGrid for VectorField2D {
    type Grid = Grid2D;
    fn grid_key(&self) -> Grid2D {
        self.grid
    }
}

/// Time-ordered samples of fields on a single grid.
#[derive(Debug, Clone)]
pub struct SnapshotSeries<F> {
    times: Vec<f64>,
    fields: Vec<F>,
}

impl<F> Default for SnapshotSeries<F> {
    fn default() -> Self {
        Self { times: Vec::new(), fields: Vec::new() }
    }
}

impl<F: OnGrid> SnapshotSeries<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, field: F) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if time <= last {
                return Err(Error::InvalidArgument(format!(
                    "snapshot times must increase strictly ({time} after {last})"
                )));
            }
            if field.grid_key() != self.fields[0].grid_key() {
                return Err(Error::GridMismatch("snapshot on a different grid".into()));
            }
        }
        self.times.push(time);
        self.fields.push(field);
        Ok(())
    }
}

impl<F> SnapshotSeries<F> {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[F] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &F)> {
        self.times.iter().copied().zip(self.fields.iter())
    }

    pub fn last(&self) -> Option<(f64, &F)> {
        self.times.last().copied().zip(self.fields.last())
    }
}

/// Trapezoidal `L^q` norm in time of the spatial `W^{k,p}` norms.
pub fn time_norm<F: DiscreteNorm>(series: &SnapshotSeries<F>, q: f64, spatial_p: f64, k: usize) -> Result<f64> {
    check_exponent(q)?;
    if series.is_empty() {
        return Err(Error::InsufficientSamples(0));
    }
    let norms = series.fields.iter().map(|f| f.discrete_norm(spatial_p, k)).collect::<Result<Vec<_>>>()?;
    time_norm_of_samples(&series.times, &norms, q)
}

/// [`time_norm`] on precomputed spatial norms.
pub fn time_norm_of_samples(times: &[f64], norms: &[f64], q: f64) -> Result<f64> {
    check_exponent(q)?;
    if norms.is_empty() || times.len() != norms.len() {
        return Err(Error::InsufficientSamples(norms.len()));
    }
    if q.is_infinite() {
        return Ok(norms.iter().fold(0.0, |m: f64, &v| m.max(v)));
    }
    if norms.len() < 2 {
        return Err(Error::InsufficientSamples(norms.len()));
    }
    let integral: f64 =
        times.windows(2).zip(norms.windows(2)).map(|(t, n)| 0.5 * (t[1] - t[0]) * (n[0].powf(q) + n[1].powf(q))).sum();
    Ok(integral.powf(1.0 / q))
}

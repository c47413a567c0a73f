//! Run orchestration: configuration, single `(eps, eta)` runs against the
//! incompressible + acoustic reference, epsilon sweeps with rate fits, the
//! acoustic dispersion bench and the invariant suite behind `validate`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::acoustic2d::{dispersive_norms, AcousticState2D};
use crate::compressible3d::{
    dissipation_defect, run, stable_dt, step, FluidState3D, FluxKind, RunOutput, SolverParams,
};
use crate::domain::{Grid2D, Grid3D, HorizontalBox, ScalarField2D, ScalarField3D, VectorField2D, VectorField3D};
use crate::error::{Error, Result};
use crate::incompressible2d::{advance_to, helmholtz_project};
use crate::initialdata::{build_initial_3d, initial_acoustic_2d, limit_initial_2d, DataRecipe, ProfileMode};
use crate::pressure::{check_hypotheses, CutoffPsi, LawConfig, PressureLaw};
use crate::relenergy::{ensemble_observable, relative_energy, uniform_bound_report, EnsembleMeasure, ReferencePair};
use crate::snapshot;

pub const CSV_HEADER: &str = "epsilon,delta,eta,tau,E_naive_B,E_naive_full,E_corrected,kinetic,pressure_ess,\
pressure_res,dissipation,mbar_norm,rho_ess_norm,rho_res_norm,wall_seconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotOutput {
    None,
    #[default]
    Final,
    All,
}

/// Settings of the dispersive-scaling bench.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub q: f64,
    pub p: f64,
    pub k: usize,
    pub samples: usize,
    pub eta: f64,
    /// Only `s0`, `psi0` and the window are used.
    pub recipe: DataRecipe,
    /// Relative slack of the monotonicity and one-sided checks.
    pub slack: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            q: 8.0,
            p: 4.0,
            k: 0,
            samples: 512,
            eta: 0.5,
            recipe: DataRecipe::ill_prepared(Vec::new(), vec![ProfileMode::new([0.5, 0.0], 1.0, 0.0)], Vec::new()),
            slack: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Period `L` of the horizontal torus.
    pub length: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Strictly decreasing.
    pub epsilon_list: Vec<f64>,
    /// `delta = eps^delta_beta`.
    pub delta_beta: f64,
    pub recipe: DataRecipe,
    pub law: LawConfig,
    pub end_time: f64,
    pub snapshot_interval: f64,
    pub eta_list: Vec<f64>,
    pub cfl: f64,
    pub flux: FluxKind,
    /// Largest RK4 step of the incompressible reference.
    pub euler_max_dt: f64,
    /// Side of the compact box `B` relative to `L`.
    pub box_fraction: f64,
    pub ensemble_size: usize,
    /// Relative amplitude noise of ensemble members.
    pub ensemble_noise: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub snapshots: SnapshotOutput,
    /// Off by default so that `rows.csv` is reproducible byte for byte.
    pub record_wall_time: bool,
    pub wall_budget_seconds: Option<f64>,
    pub threads: Option<usize>,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            length: 8.0 * std::f64::consts::PI,
            nx: 64,
            ny: 64,
            nz: 4,
            epsilon_list: vec![0.25, 0.125, 0.0625],
            delta_beta: 1.0,
            recipe: DataRecipe::shear(1.0, 0.5),
            law: LawConfig::default(),
            end_time: 0.5,
            snapshot_interval: 0.125,
            eta_list: vec![0.5],
            cfl: 0.45,
            flux: FluxKind::LowMachRusanov,
            euler_max_dt: 0.01,
            box_fraction: 0.25,
            ensemble_size: 1,
            ensemble_noise: 1e-2,
            seed: 0,
            output_dir: PathBuf::from("out"),
            snapshots: SnapshotOutput::Final,
            record_wall_time: false,
            wall_budget_seconds: None,
            threads: None,
            bench: BenchConfig::default(),
        }
    }
}

fn hypothesis_samples() -> Vec<f64> {
    (0..=50).map(|i| 10f64.powf(-2.0 + 5.0 * i as f64 / 50.0)).collect()
}

impl RunConfig {
    /// Reads a JSON config (or starts from the defaults) and applies
    /// `key=value` overrides, where `key` is a dotted path and `value` is
    /// JSON (bare words are taken as strings).
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base = match path {
            Some(p) => serde_json::from_slice::<RunConfig>(&fs::read(p)?)?,
            None => RunConfig::default(),
        };
        base.with_overrides(overrides)
    }

    /// Applies `key=value` overrides as in [`RunConfig::load`].
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not of the form key=value")))?;
            set_dotted(&mut value, key.trim(), raw.trim())?;
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn law(&self) -> Result<PressureLaw> {
        PressureLaw::from_config(&self.law)
    }

    pub fn delta(&self, epsilon: f64) -> f64 {
        epsilon.powf(self.delta_beta)
    }

    pub fn grid(&self, epsilon: f64) -> Result<Grid3D> {
        Grid3D::new(self.nx, self.ny, self.nz, self.length, self.delta(epsilon))
    }

    pub fn compact_box(&self) -> HorizontalBox {
        HorizontalBox::centered(self.length, self.box_fraction)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return cfg(format!("CFL violation: cfl = {} outside (0, 1)", self.cfl));
        }
        if self.epsilon_list.is_empty() || self.epsilon_list.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return cfg("epsilon_list must be nonempty and positive".into());
        }
        if self.epsilon_list.windows(2).any(|w| w[1] >= w[0]) {
            return cfg("epsilon_list must be strictly decreasing".into());
        }
        if self.eta_list.is_empty() || self.eta_list.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return cfg("eta_list must be nonempty and positive".into());
        }
        if !(self.delta_beta > 0.0) {
            return cfg(format!("delta_beta must be positive, got {}", self.delta_beta));
        }
        if !(self.end_time > 0.0) || !(self.snapshot_interval > 0.0) {
            return cfg("end_time and snapshot_interval must be positive".into());
        }
        if !(self.euler_max_dt > 0.0) {
            return cfg("euler_max_dt must be positive".into());
        }
        if !(self.box_fraction > 0.0 && self.box_fraction <= 1.0) {
            return cfg(format!("box_fraction must lie in (0, 1], got {}", self.box_fraction));
        }
        if self.ensemble_size == 0 || !(self.ensemble_noise >= 0.0) {
            return cfg("ensemble_size must be at least 1 and ensemble_noise nonnegative".into());
        }
        if self.threads == Some(0) {
            return cfg("threads must be positive".into());
        }
        Grid3D::new(self.nx, self.ny, self.nz, self.length, 1.0)?;
        self.recipe.validate()?;
        self.bench.recipe.validate()?;
        let law = self.law()?;
        check_hypotheses(&law, &hypothesis_samples())?.into_result()?;
        self.check_wrap_around()
    }

    /// `L > 2 a T / eps_min`: acoustic waves leaving the support must not
    /// re-enter it before the horizon.
    pub fn check_wrap_around(&self) -> Result<()> {
        let a = self.law()?.sound_speed();
        let eps_min = self.epsilon_list.iter().copied().fold(f64::INFINITY, f64::min);
        let required = 2.0 * a * self.end_time / eps_min;
        if self.length > required {
            Ok(())
        } else {
            Err(Error::WrapAround { length: self.length, required })
        }
    }
}

fn set_dotted(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for seg in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("unknown configuration key '{key}'")))?;
    }
    *node = parsed;
    Ok(())
}

/// One line of `rows.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub delta: f64,
    pub eta: f64,
    pub tau: f64,
    pub e_naive_b: f64,
    pub e_naive_full: f64,
    pub e_corrected: f64,
    /// Split of `e_naive_full`.
    pub kinetic: f64,
    pub pressure_ess: f64,
    pub pressure_res: f64,
    pub dissipation: f64,
    pub mbar_norm: f64,
    pub rho_ess_norm: f64,
    pub rho_res_norm: f64,
    pub wall_seconds: f64,
}

impl ConvergenceRow {
    fn values(&self) -> [f64; 15] {
        [
            self.epsilon,
            self.delta,
            self.eta,
            self.tau,
            self.e_naive_b,
            self.e_naive_full,
            self.e_corrected,
            self.kinetic,
            self.pressure_ess,
            self.pressure_res,
            self.dissipation,
            self.mbar_norm,
            self.rho_ess_norm,
            self.rho_res_norm,
            self.wall_seconds,
        ]
    }

    /// 17 significant digits, enough to round-trip every `f64`.
    pub fn csv_line(&self) -> String {
        let mut s = String::new();
        for (i, v) in self.values().iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{v:.16e}").expect("write to string");
        }
        s
    }
}

pub fn rows_to_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Per-member solver health, aggregated over the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemberInvariants {
    pub epsilon: f64,
    pub eta: f64,
    pub steps: usize,
    /// `max |M(t) - M(0)| / M(0)`
    pub mass_drift: f64,
    /// `max |P_i(t) - P_i(0)| / M(0)` over the periodic directions.
    pub momentum_drift: f64,
    pub energy_monotone: bool,
    /// Largest spread over `x3` of any conserved variable at the end time.
    pub x3_spread: f64,
}

impl MemberInvariants {
    fn of(epsilon: f64, eta: f64, runs: &[RunOutput]) -> Self {
        let mut inv = Self {
            epsilon,
            eta,
            steps: 0,
            mass_drift: 0.0,
            momentum_drift: 0.0,
            energy_monotone: true,
            x3_spread: 0.0,
        };
        for r in runs {
            inv.steps = inv.steps.max(r.steps);
            let first = r.log[0];
            for w in r.log.windows(2) {
                if w[1].energy > w[0].energy + 1e-12 * first.energy.abs() {
                    inv.energy_monotone = false;
                }
            }
            for rec in &r.log {
                inv.mass_drift = inv.mass_drift.max((rec.mass - first.mass).abs() / first.mass);
                for c in 0..2 {
                    inv.momentum_drift =
                        inv.momentum_drift.max((rec.momentum[c] - first.momentum[c]).abs() / first.mass);
                }
            }
            if let Some((_, s)) = r.series.last() {
                let nz = s.grid().nz;
                let fields = [s.rho.values(), s.mom.component(0), s.mom.component(1), s.mom.component(2)];
                for f in fields {
                    for col in f.chunks(nz) {
                        let (lo, hi) =
                            col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                        inv.x3_spread = inv.x3_spread.max(hi - lo);
                    }
                }
            }
        }
        inv
    }
}

#[derive(Debug, Clone)]
pub struct MemberOutput {
    pub epsilon: f64,
    pub eta: f64,
    pub rows: Vec<ConvergenceRow>,
    pub invariants: MemberInvariants,
}

/// Runs one `(eps, eta)` member; errors are labelled with the pair.
pub fn run_single(config: &RunConfig, epsilon: f64, eta: f64) -> Result<MemberOutput> {
    run_member(config, epsilon, eta, None)
}

fn member_recipes(config: &RunConfig) -> Vec<DataRecipe> {
    if config.ensemble_size == 1 {
        vec![config.recipe.clone()]
    } else {
        (0..config.ensemble_size)
            .map(|k| config.recipe.perturbed(config.ensemble_noise, config.seed.wrapping_add(k as u64)))
            .collect()
    }
}

fn run_member(config: &RunConfig, epsilon: f64, eta: f64, snapshot_dir: Option<&Path>) -> Result<MemberOutput> {
    let label = |source: Error| Error::Member { epsilon, eta, source: Box::new(source) };
    config.validate().map_err(label)?;
    member_inner(config, epsilon, eta, snapshot_dir).map_err(label)
}

fn member_inner(config: &RunConfig, epsilon: f64, eta: f64, snapshot_dir: Option<&Path>) -> Result<MemberOutput> {
    let started = Instant::now();
    let law = config.law()?;
    let delta = config.delta(epsilon);
    let grid = config.grid(epsilon)?;
    let g2 = grid.horizontal();
    let mut params = SolverParams::new(epsilon, config.cfl, law.clone(), config.end_time, config.snapshot_interval)?
        .with_flux(config.flux);
    params.wall_budget_seconds = config.wall_budget_seconds;

    let mut runs = Vec::with_capacity(config.ensemble_size);
    for recipe in member_recipes(config) {
        let s0 = build_initial_3d(&recipe, grid, &law, epsilon, eta)?;
        runs.push(run(&s0, &params)?);
    }
    let defects =
        runs.iter().map(|r| dissipation_defect(&r.series, &law, epsilon, delta)).collect::<Result<Vec<_>>>()?;

    let mut euler = limit_initial_2d(&config.recipe, g2)?;
    let acoustic0 = initial_acoustic_2d(&config.recipe, g2, &law, epsilon, eta)?;
    let bx = config.compact_box();
    let psi = CutoffPsi::new(law.rho_tilde());
    let times = runs[0].series.times().to_vec();
    let nsnap = times.len();
    let mut rows = Vec::with_capacity(nsnap);
    for (n, &tau) in times.iter().enumerate() {
        euler = advance_to(&euler, tau, config.euler_max_dt)?;
        let acoustic = acoustic0.propagate(tau);
        let naive = ReferencePair::from_limit(&euler, None, &law, grid)?;
        let corrected = ReferencePair::from_limit(&euler, Some(&acoustic), &law, grid)?;
        let measure = EnsembleMeasure::new(runs.iter().map(|r| r.series.fields()[n].clone()).collect())?;
        let e_b = relative_energy(&measure, &naive, &law, epsilon, delta, Some(&bx))?;
        let e_full = relative_energy(&measure, &naive, &law, epsilon, delta, None)?;
        let e_corr = relative_energy(&measure, &corrected, &law, epsilon, delta, None)?;
        let bounds = uniform_bound_report(&measure, &law, epsilon, delta, &psi)?;
        let dissipation = defects.iter().map(|d| d[n].1).sum::<f64>() / defects.len() as f64;
        rows.push(ConvergenceRow {
            epsilon,
            delta,
            eta,
            tau,
            e_naive_b: e_b.value,
            e_naive_full: e_full.value,
            e_corrected: e_corr.value,
            kinetic: e_full.kinetic_part,
            pressure_ess: e_full.ess_pressure,
            pressure_res: e_full.res_pressure,
            dissipation,
            mbar_norm: bounds.mbar_norm,
            rho_ess_norm: bounds.rho_ess_norm,
            rho_res_norm: bounds.rho_res_norm,
            wall_seconds: 0.0,
        });
        if let Some(dir) = snapshot_dir {
            let write = match config.snapshots {
                SnapshotOutput::None => false,
                SnapshotOutput::Final => n + 1 == nsnap,
                SnapshotOutput::All => true,
            };
            if write {
                let tag = format!("eps{epsilon:e}_eta{eta:e}_t{n:03}");
                for (k, m) in measure.members().iter().enumerate() {
                    snapshot::write_compressible(&dir.join(format!("{tag}_m{k:02}")), m, &law, epsilon, config.flux)?;
                }
                snapshot::write_incompressible(&dir.join(format!("{tag}_limit")), &euler)?;
            }
        }
    }
    if config.record_wall_time {
        let secs = started.elapsed().as_secs_f64();
        for r in &mut rows {
            r.wall_seconds = secs;
        }
    }
    Ok(MemberOutput { epsilon, eta, rows, invariants: MemberInvariants::of(epsilon, eta, &runs) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    InsufficientPoints,
    ZeroEnergy,
    MissingMembers,
    /// `tau` is not a snapshot time.
    NotSampled,
}

/// Slope of `log2 E` against `log2 eps` at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub metric: String,
    pub eta: f64,
    pub tau: f64,
    /// Per entry of `epsilon_list`; `None` where the member failed.
    pub values: Vec<Option<f64>>,
    /// From the two smallest `eps`.
    pub rate: Option<f64>,
    /// Least squares over all `eps`.
    pub rate_all: Option<f64>,
    pub status: FitStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneCheck {
    pub eta: f64,
    pub tau: f64,
    pub decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberFailure {
    pub epsilon: f64,
    pub eta: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub epsilon_list: Vec<f64>,
    pub eta_list: Vec<f64>,
    pub taus: Vec<f64>,
    pub fits: Vec<RateFit>,
    /// `E_naive_B` along `epsilon_list` at the smallest `eta`.
    pub monotone: Vec<MonotoneCheck>,
    pub members: Vec<MemberInvariants>,
    pub failures: Vec<MemberFailure>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<ConvergenceRow>,
    pub summary: SweepSummary,
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Fits `E ~ eps^rate`; a positive rate means decay as `eps -> 0`.
pub fn fit_rate(epsilons: &[f64], values: &[Option<f64>]) -> (Option<f64>, Option<f64>, FitStatus) {
    if epsilons.len() < 2 {
        return (None, None, FitStatus::InsufficientPoints);
    }
    if values.iter().any(Option::is_none) {
        return (None, None, FitStatus::MissingMembers);
    }
    let v: Vec<f64> = values.iter().map(|v| v.expect("checked")).collect();
    if v.iter().any(|&e| !(e > 0.0)) {
        return (None, None, FitStatus::ZeroEnergy);
    }
    let lx: Vec<f64> = epsilons.iter().map(|e| e.log2()).collect();
    let ly: Vec<f64> = v.iter().map(|e| e.log2()).collect();
    let n = lx.len();
    let two = (ly[n - 1] - ly[n - 2]) / (lx[n - 1] - lx[n - 2]);
    (Some(two), Some(least_squares_slope(&lx, &ly)), FitStatus::Ok)
}

fn summary_taus(config: &RunConfig) -> Vec<f64> {
    [0.25, 0.5, 0.75, 1.0].iter().map(|f| f * config.end_time).collect()
}

fn row_at(rows: &[ConvergenceRow], tau: f64, scale: f64) -> Option<&ConvergenceRow> {
    rows.iter().find(|r| (r.tau - tau).abs() <= 1e-9 * scale)
}

fn summarize(config: &RunConfig, outputs: &[Result<MemberOutput>]) -> SweepSummary {
    let ne = config.eta_list.len();
    let taus = summary_taus(config);
    let mut fits = Vec::new();
    let mut monotone = Vec::new();
    let metrics: [(&str, fn(&ConvergenceRow) -> f64); 3] =
        [("E_naive_B", |r| r.e_naive_b), ("E_naive_full", |r| r.e_naive_full), ("E_corrected", |r| r.e_corrected)];
    for (j, &eta) in config.eta_list.iter().enumerate() {
        for &tau in &taus {
            for (name, get) in metrics {
                let values: Vec<Option<f64>> = (0..config.epsilon_list.len())
                    .map(|i| match &outputs[i * ne + j] {
                        Ok(m) => row_at(&m.rows, tau, config.end_time).map(get),
                        Err(_) => None,
                    })
                    .collect();
                let sampled = outputs.iter().flatten().all(|m| row_at(&m.rows, tau, config.end_time).is_some());
                let (rate, rate_all, status) =
                    if sampled { fit_rate(&config.epsilon_list, &values) } else { (None, None, FitStatus::NotSampled) };
                if j == smallest_eta_index(config) && name == "E_naive_B" {
                    let decreasing = values.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a));
                    monotone.push(MonotoneCheck { eta, tau, decreasing });
                }
                fits.push(RateFit { metric: name.to_string(), eta, tau, values, rate, rate_all, status });
            }
        }
    }
    let mut members = Vec::new();
    let mut failures = Vec::new();
    for (idx, out) in outputs.iter().enumerate() {
        match out {
            Ok(m) => members.push(m.invariants),
            Err(e) => failures.push(MemberFailure {
                epsilon: config.epsilon_list[idx / ne],
                eta: config.eta_list[idx % ne],
                error: e.to_string(),
            }),
        }
    }
    SweepSummary {
        epsilon_list: config.epsilon_list.clone(),
        eta_list: config.eta_list.clone(),
        taus,
        fits,
        monotone,
        members,
        failures,
    }
}

fn smallest_eta_index(config: &RunConfig) -> usize {
    let mut best = 0;
    for (j, &e) in config.eta_list.iter().enumerate() {
        if e < config.eta_list[best] {
            best = j;
        }
    }
    best
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs every `(eps, eta)` member concurrently. Rows are ordered by
/// `(eps index, eta index, tau)`. With `out` set, writes `rows.csv`,
/// `summary.json` and snapshots; completed rows are written even when
/// other members fail.
pub fn sweep(config: &RunConfig, out: Option<&Path>) -> Result<SweepOutcome> {
    config.validate()?;
    let pairs: Vec<(f64, f64)> =
        config.epsilon_list.iter().flat_map(|&e| config.eta_list.iter().map(move |&h| (e, h))).collect();
    let snap_dir = match (out, config.snapshots) {
        (Some(dir), s) if s != SnapshotOutput::None => Some(dir.join("snapshots")),
        _ => None,
    };
    let outputs: Vec<Result<MemberOutput>> = with_threads(config.threads, || {
        pairs.par_iter().map(|&(e, h)| run_member(config, e, h, snap_dir.as_deref())).collect()
    })?;
    let rows: Vec<ConvergenceRow> =
        outputs.iter().filter_map(|o| o.as_ref().ok()).flat_map(|m| m.rows.iter().copied()).collect();
    let summary = summarize(config, &outputs);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("rows.csv"), rows_to_csv(&rows))?;
        fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    }
    Ok(SweepOutcome { rows, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub epsilon: f64,
    pub value: f64,
    pub psi_norm: f64,
    pub s_norm: f64,
    /// `value / (C eps^{1/q})`
    pub normalized: f64,
    pub undersampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub q: f64,
    pub p: f64,
    /// Calibrated at the largest `eps`.
    pub c: f64,
    pub rows: Vec<BenchRow>,
    /// `normalized` nonincreasing along `epsilon_list` up to the slack.
    pub monotone: bool,
    /// `value <= (1 + slack) C eps^{1/q}` everywhere.
    pub one_sided: bool,
}

/// Dispersive time norms of the regularized, mean-free acoustic data over
/// `[0, end_time]` for every `eps` in the list.
pub fn acoustic_bench(config: &RunConfig) -> Result<BenchReport> {
    config.validate()?;
    let b = &config.bench;
    let law = config.law()?;
    let g2 = Grid2D::new(config.nx, config.ny, config.length)?;
    let mut rows = Vec::new();
    for &eps in &config.epsilon_list {
        let st = initial_acoustic_2d(&b.recipe, g2, &law, eps, b.eta)?;
        // a mean in s does not propagate and would mask the decay
        let (mut s_hat, mut psi_hat) = (st.s_hat().to_vec(), st.psi_hat().to_vec());
        s_hat[0] = Default::default();
        psi_hat[0] = Default::default();
        let st = AcousticState2D::from_spectra(g2, s_hat, psi_hat, eps, &law)?;
        let rep = dispersive_norms(&st, config.end_time, b.samples, b.q, b.p, b.k, false)?;
        rows.push(BenchRow {
            epsilon: eps,
            value: rep.value,
            psi_norm: rep.psi_norm,
            s_norm: rep.s_norm,
            normalized: 0.0,
            undersampled: rep.undersampled,
        });
    }
    let c = rows[0].value / rows[0].epsilon.powf(1.0 / b.q);
    for r in &mut rows {
        r.normalized = if c > 0.0 { r.value / (c * r.epsilon.powf(1.0 / b.q)) } else { 0.0 };
    }
    let tol = 1.0 + b.slack;
    let monotone = rows.windows(2).all(|w| w[1].normalized <= tol * w[0].normalized);
    let one_sided = rows.iter().all(|r| r.normalized <= tol);
    Ok(BenchReport { q: b.q, p: b.p, c, rows, monotone, one_sided })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, outcome: Result<(bool, String)>) -> CheckResult {
    match outcome {
        Ok((passed, detail)) => CheckResult { name: name.to_string(), passed, detail },
        Err(e) => CheckResult { name: name.to_string(), passed: false, detail: e.to_string() },
    }
}

/// The invariant suite on small grids (32^2 x 4 for the finite-volume
/// solver, 64^2 for the spectral ones).
pub fn validate(config: &RunConfig) -> ValidationReport {
    let mut checks = vec![check("config", config.validate().map(|_| (true, "ok".to_string())))];
    checks.push(check("hypotheses", check_law(config)));
    checks.extend(check_solver(config));
    checks.push(check("acoustic_energy", check_acoustic_energy(config.seed)));
    checks.push(check("helmholtz_projection", check_projection(config.seed)));
    checks.push(check("convexity", check_convexity(config)));
    checks.push(check("jensen", check_jensen(config.seed)));
    ValidationReport { checks }
}

fn check_law(config: &RunConfig) -> Result<(bool, String)> {
    let rep = check_hypotheses(&config.law()?, &hypothesis_samples())?;
    let detail = match rep.failures.first() {
        Some(f) => format!("{} failures, first at rho = {}: {}", rep.failures.len(), f.sample, f.reason),
        None => format!("sup p/P = {:?}, inf p/rho^gamma = {:?}", rep.sup_p_over_potential, rep.inf_p_over_rho_gamma),
    };
    Ok((rep.passed, detail))
}

fn check_solver(config: &RunConfig) -> Vec<CheckResult> {
    let names = ["mass_conservation", "momentum_conservation", "energy_monotone", "x3_independence"];
    let outcome = (|| -> Result<Vec<(bool, String)>> {
        let law = config.law()?;
        let eps = config.epsilon_list.first().copied().unwrap_or(0.25);
        let grid = Grid3D::new(32, 32, 4, config.length, config.delta(eps))?;
        let eta = config.eta_list.first().copied().unwrap_or(0.5);
        let params = SolverParams::new(eps, config.cfl, law.clone(), config.end_time, config.snapshot_interval)?
            .with_flux(config.flux);
        let mut s = build_initial_3d(&config.recipe, grid, &law, eps, eta)?;
        let (m0, p0, mut e_prev) = (s.mass(), s.momentum(), s.energy(&law, eps));
        let (mut mass, mut mom, mut mono) = (0.0f64, 0.0f64, true);
        for _ in 0..50 {
            s = step(&s, &params, stable_dt(&s, &params)?)?;
            mass = mass.max((s.mass() - m0).abs() / m0);
            let p = s.momentum();
            mom = mom.max((p[0] - p0[0]).abs().max((p[1] - p0[1]).abs()) / m0);
            let e = s.energy(&law, eps);
            mono &= e <= e_prev + 1e-12 * e_prev.abs();
            e_prev = e;
        }
        let nz = grid.nz;
        let spread = [s.rho.values(), s.mom.component(0), s.mom.component(1), s.mom.component(2)]
            .iter()
            .flat_map(|f| f.chunks(nz).map(|c| c.iter().fold(0.0f64, |m, &v| m.max((v - c[0]).abs()))))
            .fold(0.0f64, f64::max);
        Ok(vec![
            (mass <= 1e-13, format!("max relative mass drift {mass:e} over 50 steps")),
            (mom <= 1e-13, format!("max horizontal momentum drift / mass {mom:e}")),
            (mono, "total energy non-increasing per step".to_string()),
            (spread <= 1e-13, format!("max x3 spread {spread:e}")),
        ])
    })();
    match outcome {
        Ok(v) => names.iter().zip(v).map(|(n, r)| check(n, Ok(r))).collect(),
        Err(e) => names.iter().map(|n| check(n, Err(Error::InvalidState(e.to_string())))).collect(),
    }
}

fn random_band_limited(grid: Grid2D, rng: &mut ChaCha8Rng, modes: i32) -> ScalarField2D {
    let terms: Vec<(f64, f64, f64, f64)> = (0..12)
        .map(|_| {
            (
                rng.gen_range(-modes..=modes) as f64,
                rng.gen_range(-modes..=modes) as f64,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let k0 = std::f64::consts::TAU / grid.length;
    ScalarField2D::from_fn(grid, |x| {
        terms.iter().map(|(a, b, amp, ph)| amp * (k0 * (a * x[0] + b * x[1]) + ph).cos()).sum()
    })
    .expect("finite")
}

fn check_acoustic_energy(seed: u64) -> Result<(bool, String)> {
    let grid = Grid2D::new(64, 64, std::f64::consts::TAU)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let law = PressureLaw::power(2.0, 1.0, 1.0)?;
    let s = random_band_limited(grid, &mut rng, 8);
    let psi = random_band_limited(grid, &mut rng, 8);
    let st = AcousticState2D::new(&s, &psi, 0.1, &law)?;
    // cell quadrature of 1/2 (a^2 s^2 + rho_tilde^2 |grad Psi|^2), independent of Parseval
    let a2 = law.sound_speed_squared();
    let energy = |st: &AcousticState2D| -> Result<f64> {
        let g = st.grad_psi();
        let gg = g.dot(&g)?;
        let s = st.s();
        Ok(0.5 * (a2 * s.values().iter().map(|v| v * v).sum::<f64>() * grid.cell_area() + gg))
    };
    let e0 = energy(&st)?;
    let later = st.propagate(17.3);
    let moved = later.s().values().iter().zip(s.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let rel = (energy(&later)? - e0).abs() / e0;
    Ok((
        rel <= 1e-12 && moved > 1e-3,
        format!("relative energy change {rel:e} at t = 17.3, max |s(t) - s0| = {moved:.3e}"),
    ))
}

fn check_projection(seed: u64) -> Result<(bool, String)> {
    let grid = Grid2D::new(64, 64, std::f64::consts::TAU)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let u = VectorField2D::new(
        grid,
        [random_band_limited(grid, &mut rng, 10).into_values(), random_band_limited(grid, &mut rng, 10).into_values()],
    )?;
    let pu = helmholtz_project(&u);
    let ppu = helmholtz_project(&pu);
    let norm2 = u.dot(&u)?;
    let idem = ppu.sub(&pu)?.dot(&ppu.sub(&pu)?)?.sqrt() / norm2.sqrt();
    let orth = pu.dot(&u.sub(&pu)?)?.abs() / norm2;
    Ok((idem <= 1e-12 && orth <= 1e-12, format!("idempotence {idem:e}, orthogonality {orth:e}")))
}

fn check_convexity(config: &RunConfig) -> Result<(bool, String)> {
    let law = config.law()?;
    let rt = law.rho_tilde();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    // H(rho, rt) >= 1/2 min P'' |rho - rt|^2 on [rt/2, 2 rt]
    let min_p2 = (0..=200).map(|i| law.d2potential(rt * (0.5 + 1.5 * i as f64 / 200.0))).fold(f64::INFINITY, f64::min);
    let mut inner_ok = true;
    let mut outer_c = 0.0f64;
    let mut outer_ok = true;
    for n in 0..1000 {
        if n % 2 == 0 {
            let rho = rt * rng.gen_range(0.5..=2.0);
            let d = rho - rt;
            inner_ok &= law.helmholtz(rho, rt) >= 0.5 * min_p2 * d * d * (1.0 - 1e-12);
        } else {
            let rho = if rng.gen_bool(0.5) { rt * rng.gen_range(0.01..0.5) } else { rt * rng.gen_range(2.0..100.0) };
            let h = law.helmholtz(rho, rt);
            let ratio = (1.0 + (rho - rt).abs() + law.potential(rho)) / h;
            outer_ok &= h > 0.0 && ratio.is_finite();
            outer_c = outer_c.max(ratio);
        }
    }
    Ok((inner_ok && outer_ok, format!("inner constant 2/min P'' = {:.6e}, outer constant {outer_c:.6e}", 2.0 / min_p2)))
}

fn check_jensen(seed: u64) -> Result<(bool, String)> {
    let grid = Grid3D::new(3, 3, 2, 1.0, 0.5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let n = grid.cell_count();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let size = rng.gen_range(2..10);
        let mut members = Vec::with_capacity(size);
        for _ in 0..size {
            let rho = ScalarField3D::new(grid, (0..n).map(|_| rng.gen_range(0.1..3.0)).collect())?;
            let mut comp = || (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
            let mom = VectorField3D::new(grid, [comp(), comp(), comp()])?;
            members.push(FluidState3D::new(rho, mom, 0.0)?);
        }
        let e = EnsembleMeasure::new(members)?;
        let abs_m = |_: f64, m: [f64; 3]| Some((m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt());
        let a = ensemble_observable(&e, abs_m)?;
        let b = ensemble_observable(&e, |r, m| abs_m(r, m).map(|v| v * v))?;
        for (x, y) in a.values().iter().zip(b.values()) {
            worst = worst.max(x * x - y);
        }
    }
    Ok((worst <= 1e-12, format!("max <|m|>^2 - <|m|^2> = {worst:e} over 100 ensembles")))
}

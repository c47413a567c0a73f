//! Barotropic pressure laws, the pressure potential and its Bregman
//! distance, and the cutoff that splits states into essential and residual
//! parts.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::ScalarField3D;
use crate::error::{Error, Result};

/// Serializable description of a pressure law `p(rho) = coefficient * rho^gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    #[serde(default = "LawConfig::default_kind")]
    pub kind: String,
    pub gamma: f64,
    pub coefficient: f64,
    pub rho_tilde: f64,
}

impl LawConfig {
    fn default_kind() -> String {
        "power".to_string()
    }
}

impl Default for LawConfig {
    fn default() -> Self {
        Self { kind: Self::default_kind(), gamma: 2.0, coefficient: 1.0, rho_tilde: 1.0 }
    }
}

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

#[derive(Clone)]
enum LawKind {
    Power { gamma: f64, coefficient: f64 },
    General { p: Arc<ScalarFn>, dp: Arc<ScalarFn>, gamma: f64 },
}

#[derive(Clone)]
pub struct PressureLaw {
    kind: LawKind,
    rho_tilde: f64,
}

impl fmt::Debug for PressureLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LawKind::Power { gamma, coefficient } => f
                .debug_struct("PressureLaw::Power")
                .field("gamma", gamma)
                .field("coefficient", coefficient)
                .field("rho_tilde", &self.rho_tilde)
                .finish(),
            LawKind::General { gamma, .. } => f
                .debug_struct("PressureLaw::General")
                .field("gamma", gamma)
                .field("rho_tilde", &self.rho_tilde)
                .finish(),
        }
    }
}

impl PressureLaw {
    /// `p(rho) = coefficient * rho^gamma`. No sign checks here; see
    /// [`check_hypotheses`].
    pub fn power(gamma: f64, coefficient: f64, rho_tilde: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) || !coefficient.is_finite() || coefficient == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "power law needs gamma > 0 and a nonzero coefficient, got gamma = {gamma}, coefficient = {coefficient}"
            )));
        }
        Self::check_reference(rho_tilde)?;
        Ok(Self { kind: LawKind::Power { gamma, coefficient }, rho_tilde })
    }

    /// A law given by closures for `p` and `p'`. `gamma` is the growth
    /// exponent used by the large-density hypothesis check. The potential
    /// is evaluated by adaptive quadrature.
    pub fn general(
        p: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dp: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gamma: f64,
        rho_tilde: f64,
    ) -> Result<Self> {
        Self::check_reference(rho_tilde)?;
        Ok(Self { kind: LawKind::General { p: Arc::new(p), dp: Arc::new(dp), gamma }, rho_tilde })
    }

    pub fn from_config(cfg: &LawConfig) -> Result<Self> {
        match cfg.kind.as_str() {
            "power" => Self::power(cfg.gamma, cfg.coefficient, cfg.rho_tilde),
            other => Err(Error::Config(format!("unknown pressure law kind '{other}'"))),
        }
    }

    /// Config form, if the law is a power law.
    pub fn to_config(&self) -> Option<LawConfig> {
        match self.kind {
            LawKind::Power { gamma, coefficient } => {
                Some(LawConfig { kind: "power".into(), gamma, coefficient, rho_tilde: self.rho_tilde })
            }
            LawKind::General { .. } => None,
        }
    }

    fn check_reference(rho_tilde: f64) -> Result<()> {
        if rho_tilde > 0.0 && rho_tilde.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("reference density must be positive, got {rho_tilde}")))
        }
    }

    pub fn rho_tilde(&self) -> f64 {
        self.rho_tilde
    }

    pub fn gamma(&self) -> f64 {
        match self.kind {
            LawKind::Power { gamma, .. } | LawKind::General { gamma, .. } => gamma,
        }
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        match &self.kind {
            LawKind::Power { gamma, coefficient } => coefficient * rho.powf(*gamma),
            LawKind::General { p, .. } => p(rho),
        }
    }

    pub fn dpressure(&self, rho: f64) -> f64 {
        match &self.kind {
            LawKind::Power { gamma, coefficient } => coefficient * gamma * rho.powf(gamma - 1.0),
            LawKind::General { dp, .. } => dp(rho),
        }
    }

    /// `a^2 = p'(rho_tilde)`.
    pub fn sound_speed_squared(&self) -> f64 {
        self.dpressure(self.rho_tilde)
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed_squared().sqrt()
    }

    /// `P(rho) = rho * int_{rho_tilde}^{rho} p(z) / z^2 dz`.
    pub fn potential(&self, rho: f64) -> f64 {
        let rt = self.rho_tilde;
        match &self.kind {
            LawKind::Power { gamma, coefficient } => {
                if (gamma - 1.0).abs() < 1e-14 {
                    if rho == 0.0 {
                        0.0
                    } else {
                        coefficient * rho * (rho / rt).ln()
                    }
                } else {
                    coefficient * (rho.powf(*gamma) - rho * rt.powf(gamma - 1.0)) / (gamma - 1.0)
                }
            }
            LawKind::General { p, .. } => {
                if rho == 0.0 {
                    -p(0.0)
                } else {
                    rho * integrate(|z| p(z) / (z * z), rt, rho)
                }
            }
        }
    }

    /// `P'(rho)`.
    pub fn dpotential(&self, rho: f64) -> f64 {
        let rt = self.rho_tilde;
        match &self.kind {
            LawKind::Power { gamma, coefficient } => {
                if (gamma - 1.0).abs() < 1e-14 {
                    coefficient * ((rho / rt).ln() + 1.0)
                } else {
                    coefficient * (gamma * rho.powf(gamma - 1.0) - rt.powf(gamma - 1.0)) / (gamma - 1.0)
                }
            }
            LawKind::General { p, .. } => integrate(|z| p(z) / (z * z), rt, rho) + p(rho) / rho,
        }
    }

    /// `P''(rho) = p'(rho) / rho`.
    pub fn d2potential(&self, rho: f64) -> f64 {
        self.dpressure(rho) / rho
    }

    /// Bregman distance `P(rho) - P'(r)(rho - r) - P(r)`.
    pub fn helmholtz(&self, rho: f64, r: f64) -> f64 {
        match &self.kind {
            LawKind::Power { gamma, coefficient } => {
                let g = *gamma;
                if (g - 2.0).abs() < 1e-15 {
                    let d = rho - r;
                    return coefficient * d * d;
                }
                if (g - 1.0).abs() < 1e-14 {
                    if rho == 0.0 {
                        return coefficient * r;
                    }
                    return coefficient * (rho * (rho / r).ln() - (rho - r));
                }
                // r^g * [(1+x)^g - 1 - g x] / (g - 1), x = (rho - r)/r
                let x = (rho - r) / r;
                let bracket = if x.abs() < 1e-3 {
                    let c2 = g * (g - 1.0) / 2.0;
                    let c3 = c2 * (g - 2.0) / 3.0;
                    let c4 = c3 * (g - 3.0) / 4.0;
                    let c5 = c4 * (g - 4.0) / 5.0;
                    x * x * (c2 + x * (c3 + x * (c4 + x * c5)))
                } else if rho == 0.0 {
                    g - 1.0
                } else {
                    (g * x.ln_1p()).exp_m1() - g * x
                };
                coefficient * r.powf(g) * bracket / (g - 1.0)
            }
            LawKind::General { .. } => self.potential(rho) - self.dpotential(r) * (rho - r) - self.potential(r),
        }
    }
}

/// Adaptive Simpson quadrature with absolute tolerance 1e-12.
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(&f, a, fa, b, fb);
    recurse(&f, a, fa, b, fb, whole, m, fm, 1e-12, 48)
}

/// Failure of one pressure-law hypothesis at a sampled density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisFailure {
    pub sample: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub passed: bool,
    pub failures: Vec<HypothesisFailure>,
    /// `sup p/P` over samples at or above the large-density threshold.
    pub sup_p_over_potential: Option<f64>,
    /// `inf p/rho^gamma` over the same samples.
    pub inf_p_over_rho_gamma: Option<f64>,
    pub min_dp: f64,
}

impl HypothesisReport {
    pub fn into_result(self) -> Result<Self> {
        match self.failures.first() {
            Some(f) => Err(Error::HypothesisViolated { sample: f.sample, reason: f.reason.clone() }),
            None => Ok(self),
        }
    }
}

/// Finite-sample surrogate of the pressure hypotheses: `p' > 0` at every
/// sample; `p/P` finite and `p/rho^gamma` bounded away from zero at samples
/// `rho >= 4 rho_tilde`.
pub fn check_hypotheses(law: &PressureLaw, samples: &[f64]) -> Result<HypothesisReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no sample densities".into()));
    }
    if let Some(&bad) = samples.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!("sample densities must be positive, got {bad}")));
    }
    let gamma = law.gamma();
    let large = 4.0 * law.rho_tilde();
    let mut failures = Vec::new();
    let mut sup_ratio: Option<f64> = None;
    let mut inf_growth: Option<f64> = None;
    let mut min_dp = f64::INFINITY;
    for &rho in samples {
        let dp = law.dpressure(rho);
        min_dp = min_dp.min(dp);
        if !(dp > 0.0) {
            failures.push(HypothesisFailure { sample: rho, reason: format!("p'(rho) = {dp} is not positive") });
        }
        if rho >= large {
            let p = law.pressure(rho);
            let pot = law.potential(rho);
            let ratio = p / pot;
            if !(pot > 0.0) || !ratio.is_finite() {
                failures.push(HypothesisFailure { sample: rho, reason: format!("p/P undefined (P = {pot})") });
            } else {
                sup_ratio = Some(sup_ratio.map_or(ratio, |s: f64| s.max(ratio)));
            }
            if !(gamma > 1.0) {
                failures.push(HypothesisFailure {
                    sample: rho,
                    reason: format!("growth exponent gamma = {gamma} must exceed 1"),
                });
            }
            let growth = p / rho.powf(gamma);
            if !(growth > 0.0) {
                failures.push(HypothesisFailure {
                    sample: rho,
                    reason: format!("p/rho^gamma = {growth} is not bounded below by a positive constant"),
                });
            }
            inf_growth = Some(inf_growth.map_or(growth, |s: f64| s.min(growth)));
        }
    }
    Ok(HypothesisReport {
        passed: failures.is_empty(),
        failures,
        sup_p_over_potential: sup_ratio,
        inf_p_over_rho_gamma: inf_growth,
        min_dp,
    })
}

/// Smooth cutoff equal to one on `[rho_tilde/2, 2 rho_tilde]` and vanishing
/// outside `[rho_tilde/4, 4 rho_tilde]`, with quintic smoothstep ramps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPsi {
    pub lower: f64,
    pub upper: f64,
    pub support_lower: f64,
    pub support_upper: f64,
}

fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

impl CutoffPsi {
    pub fn new(rho_tilde: f64) -> Self {
        Self {
            lower: 0.5 * rho_tilde,
            upper: 2.0 * rho_tilde,
            support_lower: 0.25 * rho_tilde,
            support_upper: 4.0 * rho_tilde,
        }
    }

    pub fn value(&self, rho: f64) -> f64 {
        if rho <= self.support_lower || rho >= self.support_upper {
            0.0
        } else if rho < self.lower {
            smoothstep5((rho - self.support_lower) / (self.lower - self.support_lower))
        } else if rho <= self.upper {
            1.0
        } else {
            smoothstep5((self.support_upper - rho) / (self.support_upper - self.upper))
        }
    }
}

/// `[h]_ess = psi(rho) h`, `[h]_res = h - [h]_ess`.
pub fn ess_res_split(
    psi: &CutoffPsi,
    rho: &ScalarField3D,
    payload: &ScalarField3D,
) -> Result<(ScalarField3D, ScalarField3D)> {
    if rho.grid() != payload.grid() {
        return Err(Error::GridMismatch("ess_res_split: density and payload grids differ".into()));
    }
    let (ess, res): (Vec<f64>, Vec<f64>) = rho
        .values()
        .iter()
        .zip(payload.values())
        .map(|(&r, &h)| {
            // both subtractions are exact (Sterbenz), so ess + res == h
            let res = h - psi.value(r) * h;
            (h - res, res)
        })
        .unzip();
    Ok((ScalarField3D::new(*rho.grid(), ess)?, ScalarField3D::new(*rho.grid(), res)?))
}

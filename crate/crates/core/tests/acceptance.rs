//! Acceptance criteria, one line of output per criterion.
//!
//! Runs without the libtest harness so the lines are always printed:
//! `cargo test -p lowmach-core --test acceptance`.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use lowmach_core::acoustic2d::AcousticState2D;
use lowmach_core::compressible3d::{self, FluidState3D, SolverParams};
use lowmach_core::domain::{Grid2D, Grid3D, ScalarField2D, ScalarField3D, VectorField3D};
use lowmach_core::harness::{self, rows_to_csv, FitStatus, RunConfig, SweepOutcome};
use lowmach_core::incompressible2d::{euler_step, IncompressibleState2D};
use lowmach_core::initialdata::{DataRecipe, ProfileMode};
use lowmach_core::pressure::PressureLaw;
use lowmach_core::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn invariant_suite() -> Result<Outcome> {
    let start = Instant::now();
    let rep = harness::validate(&RunConfig::default());
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<_> = rep.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect();
    let detail = if failed.is_empty() {
        format!("{} checks in {secs:.1} s", rep.checks.len())
    } else {
        format!("{secs:.1} s, failed {}", failed.join("; "))
    };
    outcome(failed.is_empty() && secs < 60.0, detail)
}

fn rest_state() -> Result<Outcome> {
    let law = PressureLaw::power(2.0, 1.0, 1.0)?;
    let g = Grid3D::new(12, 10, 3, TAU, 0.5)?;
    let rest = FluidState3D::uniform(g, law.rho_tilde(), [0.0; 3])?;
    let params = SolverParams::new(0.1, 0.45, law, 1.0, 1.0)?;
    let dt = compressible3d::stable_dt(&rest, &params)?;
    let mut s = rest.clone();
    for _ in 0..10_000 {
        s = compressible3d::step(&s, &params, dt)?;
    }
    let rho_drift = s.rho.values().iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    let mom_drift = s.mom.components().iter().flatten().map(|m| m.abs()).fold(0.0, f64::max);
    let bitwise = s.rho == rest.rho && s.mom == rest.mom;
    outcome(
        rho_drift <= 1e-14 && mom_drift <= 1e-14,
        format!("10^4 steps, max |rho - 1| = {rho_drift:e}, max |m| = {mom_drift:e}, bitwise = {bitwise}"),
    )
}

fn steady_eigenfunction() -> Result<Outcome> {
    let g = Grid2D::new(128, 128, TAU)?;
    // psi = cos x1 cos x2 is a Laplacian eigenfunction, so its vorticity is steady
    let w0 = ScalarField2D::from_fn(g, |x| 2.0 * x[0].cos() * x[1].cos())?;
    let mut s = IncompressibleState2D::new(&w0, 0.0)?;
    let norm0 = l2(w0.values());
    let mut worst: f64 = 0.0;
    for n in 1..=10_000 {
        s = euler_step(&s, 1e-3)?;
        if n % 100 == 0 {
            worst = worst.max(l2_diff(s.omega().values(), w0.values()) / norm0);
        }
    }
    outcome(worst < 1e-8, format!("max relative L2 drift {worst:e} over t in [0, 10]"))
}

fn linearization() -> Result<Outcome> {
    let law = PressureLaw::power(2.0, 1.0, 1.0)?;
    let (eps, amp, t) = (1.0, 1e-3, 0.2);
    let g3 = Grid3D::new(256, 1, 1, TAU, 1.0)?;
    let g2 = g3.horizontal();
    let pulse = |x: f64| amp * (-(x - PI).powi(2) / (2.0 * 0.5f64.powi(2))).exp();
    let s0 = ScalarField2D::from_fn(g2, |x| pulse(x[0]))?;
    let exact = AcousticState2D::new(&s0, &ScalarField2D::zeros(g2), eps, &law)?.propagate(t).s();

    let rho = ScalarField3D::from_fn(g3, |x| law.rho_tilde() + eps * pulse(x[0]))?;
    let initial = FluidState3D::new(rho, VectorField3D::zeros(g3), 0.0)?;
    let params = SolverParams::new(eps, 0.45, law.clone(), t, t)?;
    let out = compressible3d::run(&initial, &params)?;
    let (_, fin) = out.series.last().expect("end snapshot");
    let s_num: Vec<f64> = fin.rho.values().iter().map(|r| (r - law.rho_tilde()) / eps).collect();
    let err = l2_diff(&s_num, exact.values()) / l2(exact.values());
    outcome(err < 0.05, format!("relative L2 error {err:.4e} at t = {t}, {} steps", out.steps))
}

fn e_at(out: &SweepOutcome, eps: f64, tau: f64, full: bool) -> Option<f64> {
    out.rows.iter().find(|r| r.epsilon == eps && (r.tau - tau).abs() < 1e-12).map(|r| {
        if full {
            r.e_naive_full
        } else {
            r.e_naive_b
        }
    })
}

fn strictly_decreasing(v: &[Option<f64>]) -> bool {
    v.iter().all(Option::is_some) && v.windows(2).all(|w| w[1] < w[0])
}

fn fmt_values(v: &[Option<f64>]) -> String {
    v.iter().map(|x| x.map_or("-".into(), |x| format!("{x:.4e}"))).collect::<Vec<_>>().join(", ")
}

fn well_prepared(cfg: &RunConfig, out: &SweepOutcome, secs: f64) -> Result<Outcome> {
    let t = cfg.end_time;
    let values: Vec<_> = cfg.epsilon_list.iter().map(|&e| e_at(out, e, t, false)).collect();
    let fit = out
        .summary
        .fits
        .iter()
        .find(|f| f.metric == "E_naive_B" && (f.tau - t).abs() < 1e-12)
        .expect("fit at the end time");
    let rate = fit.rate.filter(|_| fit.status == FitStatus::Ok);
    let passed = out.summary.failures.is_empty()
        && strictly_decreasing(&values)
        && rate.is_some_and(|r| r > 0.5)
        && secs < 1800.0;
    outcome(passed, format!("E_naive_B(T) = [{}], rate {:?}, {secs:.1} s", fmt_values(&values), rate))
}

fn ill_prepared() -> Result<Outcome> {
    let mut cfg = RunConfig::default();
    cfg.recipe = DataRecipe::ill_prepared(Vec::new(), vec![ProfileMode::new([0.5, 0.0], 1.0, 0.0)], Vec::new());
    let out = harness::sweep(&cfg, None)?;
    let late: Vec<_> = cfg.epsilon_list.iter().map(|&e| e_at(&out, e, cfg.end_time, false)).collect();
    let initial: Vec<_> = cfg.epsilon_list.iter().map(|&e| e_at(&out, e, 0.0, true)).collect();
    // equal values up to rounding count as "not decreasing"
    let initial_flat = initial.iter().all(Option::is_some)
        && initial.windows(2).all(|w| w[1].unwrap() >= w[0].unwrap() * (1.0 - 1e-12));
    outcome(
        out.summary.failures.is_empty() && strictly_decreasing(&late) && initial_flat,
        format!("E_naive_B(T) = [{}], E_naive_full(0) = [{}]", fmt_values(&late), fmt_values(&initial)),
    )
}

fn dispersive_scaling() -> Result<Outcome> {
    let cfg = RunConfig::default();
    let rep = harness::acoustic_bench(&cfg)?;
    let norm: Vec<String> = rep.rows.iter().map(|r| format!("{:.4}", r.normalized)).collect();
    outcome(
        rep.monotone && (rep.q, rep.p) == (8.0, 4.0),
        format!("normalized [{}], slack {}", norm.join(", "), cfg.bench.slack),
    )
}

fn determinism(cfg: &RunConfig, first: &SweepOutcome) -> Result<Outcome> {
    let a = tempfile::tempdir()?;
    let b = tempfile::tempdir()?;
    let one = harness::sweep(&RunConfig { threads: Some(1), ..cfg.clone() }, Some(a.path()))?;
    let many = harness::sweep(&RunConfig { threads: Some(4), ..cfg.clone() }, Some(b.path()))?;
    let fa = fs::read(a.path().join("rows.csv"))?;
    let fb = fs::read(b.path().join("rows.csv"))?;
    let same = fa == fb
        && rows_to_csv(&one.rows) == rows_to_csv(&first.rows)
        && rows_to_csv(&many.rows) == rows_to_csv(&first.rows);
    outcome(same, format!("rows.csv {} bytes, threads 1 vs 4 vs default", fa.len()))
}

fn main() -> ExitCode {
    let cfg = RunConfig::default();
    let start = Instant::now();
    let sweep = harness::sweep(&cfg, None);
    let sweep_secs = start.elapsed().as_secs_f64();

    let mut results: Vec<(&str, Result<Outcome>)> = vec![
        ("1 invariant suite", invariant_suite()),
        ("2 rest state", rest_state()),
        ("3 steady 2D Euler", steady_eigenfunction()),
        ("4 acoustic linearization", linearization()),
    ];
    match &sweep {
        Ok(out) => {
            results.push(("5 well-prepared convergence", well_prepared(&cfg, out, sweep_secs)));
            results.push(("6 ill-prepared dispersion", ill_prepared()));
            results.push(("7 dispersive scaling", dispersive_scaling()));
            results.push(("8 determinism", determinism(&cfg, out)));
        }
        Err(e) => {
            let msg = e.to_string();
            results.push(("5 well-prepared convergence", outcome(false, format!("sweep failed: {msg}"))));
            results.push(("6 ill-prepared dispersion", ill_prepared()));
            results.push(("7 dispersive scaling", dispersive_scaling()));
            results.push(("8 determinism", outcome(false, format!("sweep failed: {msg}"))));
        }
    }

    let mut all = true;
    for (name, r) in &results {
        let (passed, detail) = match r {
            Ok(o) => (o.passed, o.detail.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= passed;
        println!("{:<30} {}  {}", name, if passed { "PASS" } else { "FAIL" }, detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

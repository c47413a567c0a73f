use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lowmach_core::harness::{self, rows_to_csv, RunConfig};

#[derive(Parser)]
#[command(name = "lowmach", version, about = "Low-Mach / thin-layer limit experiments for barotropic Euler flows")]
struct Cli {
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the sweep.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override any config key, e.g. `--set recipe.window_power=8`.
    #[arg(long = "set", global = true, value_name = "KEY=JSON")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One (eps, eta) member; defaults to the first entries of the lists.
    Run {
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// All (eps, eta) members, rows.csv and summary.json.
    Sweep,
    /// Dispersive time norms of the acoustic data over epsilon_list.
    AcousticBench,
    /// Invariant suite; exits nonzero on any failure.
    Validate,
    /// Print the effective configuration as JSON.
    Config,
}

fn load(cli: &Cli) -> lowmach_core::Result<RunConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(t) = cli.threads {
        overrides.push(format!("threads={t}"));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("output_dir={}", serde_json::to_string(o)?));
    }
    RunConfig::load(cli.config.as_deref(), &overrides)
}

fn execute(cli: &Cli) -> lowmach_core::Result<ExitCode> {
    let cfg = load(cli)?;
    let out = cfg.output_dir.clone();
    match &cli.command {
        Command::Config => println!("{}", serde_json::to_string_pretty(&cfg)?),
        Command::Run { epsilon, eta } => {
            let eps = epsilon.unwrap_or(cfg.epsilon_list[0]);
            let eta = eta.unwrap_or(cfg.eta_list[0]);
            let cfg = RunConfig { epsilon_list: vec![eps], eta_list: vec![eta], ..cfg };
            let res = harness::sweep(&cfg, Some(&out))?;
            if let Some(f) = res.summary.failures.first() {
                eprintln!("{}", f.error);
                return Ok(ExitCode::from(2));
            }
            print!("{}", rows_to_csv(&res.rows));
        }
        Command::Sweep => {
            let res = harness::sweep(&cfg, Some(&out))?;
            println!("{:>14} {:>8} {:>8} {:>10} {:>10}  status", "metric", "eta", "tau", "rate", "rate_all");
            for f in &res.summary.fits {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |r| format!("{r:.4}"));
                println!(
                    "{:>14} {:>8.4} {:>8.4} {:>10} {:>10}  {:?}",
                    f.metric,
                    f.eta,
                    f.tau,
                    fmt(f.rate),
                    fmt(f.rate_all),
                    f.status
                );
            }
            for m in &res.summary.monotone {
                if !m.decreasing {
                    eprintln!("warning: E_naive_B not decreasing along epsilon_list at tau = {}", m.tau);
                }
            }
            for f in &res.summary.failures {
                eprintln!("member failed: {}", f.error);
            }
            println!("wrote {}", out.join("rows.csv").display());
            if !res.summary.failures.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::AcousticBench => {
            let rep = harness::acoustic_bench(&cfg)?;
            println!("C = {:.6e} (q = {}, p = {})", rep.c, rep.q, rep.p);
            println!("{:>10} {:>14} {:>12}", "epsilon", "value", "normalized");
            for r in &rep.rows {
                println!(
                    "{:>10.5} {:>14.6e} {:>12.5}{}",
                    r.epsilon,
                    r.value,
                    r.normalized,
                    if r.undersampled { "  (undersampled)" } else { "" }
                );
            }
            println!("monotone: {}  one-sided: {}", rep.monotone, rep.one_sided);
            fs::create_dir_all(&out)?;
            fs::write(out.join("acoustic_bench.json"), serde_json::to_vec_pretty(&rep)?)?;
        }
        Command::Validate => {
            let rep = harness::validate(&cfg);
            for c in &rep.checks {
                println!("{:<24} {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
            }
            if !rep.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! Command line front end: one subcommand per experiment.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use liouville::harness::{parse_config, run_experiment, Config};

#[derive(Parser)]
#[command(name = "liouville-lab", version, about = "Liouville Brownian motion experiments on the torus")]
struct Cli {
    #[command(subcommand)]
    experiment: Experiment,
}

#[derive(Args, Clone)]
struct Flags {
    /// Flat key=value config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV and JSON files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Replica count for every experiment, overriding the config.
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Subcommand)]
#[command(rename_all = "kebab-case")]
enum Experiment {
    /// Field covariance against the exact kernel and a Cholesky oracle.
    FieldValidate(Flags),
    /// Total chaos mass and multifractal ball exponents.
    ChaosExponents(Flags),
    /// Time scaling of the clock moments.
    ClockScaling(Flags),
    /// Revuz identity between the clock and the Liouville measure.
    Revuz(Flags),
    /// Resolvent: f = 1, spectral oracle, symmetry and resolvent identity.
    Resolvent(Flags),
    /// Hölder modulus of the resolvent.
    ResolventModulus(Flags),
    /// Heat kernel normalization, Gaussian oracle and symmetry.
    HeatKernel(Flags),
    /// Chapman-Kolmogorov property of the heat kernel.
    Chapman(Flags),
    /// Green function against occupation integrals.
    Green(Flags),
    /// Ergodic time averages.
    Ergodic(Flags),
    /// Dirichlet quotient against the spectral value.
    Dirichlet(Flags),
    /// Degeneracy of the regularized intrinsic metric.
    MetricDegeneracy(Flags),
    /// Every experiment in order.
    All(Flags),
}

impl Experiment {
    fn split(self) -> (&'static str, Flags) {
        match self {
            Experiment::FieldValidate(f) => ("field-validate", f),
            Experiment::ChaosExponents(f) => ("chaos-exponents", f),
            Experiment::ClockScaling(f) => ("clock-scaling", f),
            Experiment::Revuz(f) => ("revuz", f),
            Experiment::Resolvent(f) => ("resolvent", f),
            Experiment::ResolventModulus(f) => ("resolvent-modulus", f),
            Experiment::HeatKernel(f) => ("heat-kernel", f),
            Experiment::Chapman(f) => ("chapman", f),
            Experiment::Green(f) => ("green", f),
            Experiment::Ergodic(f) => ("ergodic", f),
            Experiment::Dirichlet(f) => ("dirichlet", f),
            Experiment::MetricDegeneracy(f) => ("metric-degeneracy", f),
            Experiment::All(f) => ("all", f),
        }
    }
}

fn load(flags: &Flags) -> liouville::Result<Config> {
    let mut cfg = match &flags.config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
        None => Config::default(),
    };
    if let Some(seed) = flags.seed {
        cfg.force("seed", &seed.to_string())?;
    }
    if let Some(workers) = flags.workers {
        cfg.force("workers", &workers.to_string())?;
    }
    if let Some(replicas) = flags.replicas {
        cfg.force("replicas", &replicas.to_string())?;
    }
    if let Some(out) = &flags.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let (name, flags) = Cli::parse().experiment.split();
    let cfg = match load(&flags) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&cfg, name) {
        Ok(reports) => {
            let mut ok = true;
            for r in &reports {
                let verdict = if r.pass() { "PASS" } else { "FAIL" };
                println!("{verdict} {} ({:.1} s)", r.experiment, r.wall_time);
                for c in r.checks.iter().filter(|c| !c.pass) {
                    println!("    failed: {} = {} (needs {} {})", c.name, c.statistic, c.relation, c.limit);
                }
                ok &= r.pass();
            }
            println!("reports written to {}", cfg.out.display());
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

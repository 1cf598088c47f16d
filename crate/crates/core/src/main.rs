//! Command-line driver: verification suites, Weyl-law experiment runs, and
//! flow probes. Exit codes: 0 success, 2 config error, 3 numerical-tolerance
//! failure, 4 internal error.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use toeplitz_weyl::config::RunConfig;
use toeplitz_weyl::error::Error;
use toeplitz_weyl::harness::{cmd_flow_probe, cmd_run_weyl, cmd_verify_algebra, config_hash};
use toeplitz_weyl::report::ArtifactSink;

#[derive(Parser)]
#[command(
    name = "toeplitz-weyl",
    version,
    about = "Toeplitz quantization and pointwise Weyl-law experiments on Kähler models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized symplectic/kernel identity suites.
    VerifyAlgebra(CommonArgs),
    /// Run the quantize -> spectra -> counting pipelines for the configured model.
    RunWeyl(CommonArgs),
    /// Integrate the lifted flow: trajectory export, period detection, holonomy fit.
    FlowProbe(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = automatic).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Input(_) => 2,
        Error::Accuracy(_) | Error::NotSymplectic { .. } | Error::Cutoff(_) => 3,
        _ => 4,
    }
}

fn run(args: &CommonArgs, which: u8) -> Result<(), Error> {
    if args.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    let mut sink = ArtifactSink::new(&args.out)?;
    let hash = config_hash(&cfg);
    match which {
        0 => {
            let report = cmd_verify_algebra(&cfg, &mut sink)?;
            sink.finalize(&hash)?;
            for s in &report.suites {
                println!(
                    "{}: residual {:.3e} (tol {:.1e}) {}",
                    s.name,
                    s.residual,
                    s.tolerance,
                    if s.pass { "ok" } else { "FAIL" }
                );
            }
            if !report.pass {
                return Err(Error::Accuracy(format!(
                    "invariant suite failed: {}",
                    report.failing.unwrap_or_default()
                )));
            }
        }
        1 => {
            let summary = cmd_run_weyl(&cfg, &mut sink)?;
            sink.finalize(&hash)?;
            println!("model: {} (branch {:?})", summary.kind, summary.branch);
            if let Some(orbit) = &summary.orbit {
                println!(
                    "orbit: T = {:.9}, holonomy = {:.9}, class = {:?}",
                    orbit.period, orbit.holonomy_angle, orbit.classification
                );
            }
            if let Some(comb) = &summary.comb {
                println!(
                    "holonomy comb: max relative deviation {:.3e}",
                    comb.max_relative_deviation
                );
            }
            if let Some(tt) = &summary.two_term {
                println!(
                    "two-term ratios: {:?} (gap exponent {:.3})",
                    tt.ratios, tt.gap_fit_exponent
                );
            }
            if let Some(el) = &summary.elliptic {
                println!(
                    "elliptic: exponent {:.4} (expected {:.1}), profile deviation {:.3e}",
                    el.fitted_exponent, el.expected_exponent, el.max_profile_deviation
                );
            }
            if let Some(bg) = &summary.bergman {
                println!(
                    "Bergman corrections: {:?} (spread {:.3e})",
                    bg.correction, bg.correction_spread
                );
            }
        }
        _ => {
            let report = cmd_flow_probe(&cfg, &mut sink)?;
            sink.finalize(&hash)?;
            println!(
                "energy drift {:.3e}, symplectic residual {:.3e}",
                report.energy_drift, report.symplectic_residual
            );
            if let Some(orbit) = &report.orbit {
                println!(
                    "orbit: T = {:.9}, holonomy = {:.9}, class = {:?}",
                    orbit.period, orbit.holonomy_angle, orbit.classification
                );
            } else {
                println!("no periodic return detected");
            }
            if let Some(slope) = report.holonomy_slope {
                println!("holonomy difference slope: {slope:.3}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, which) = match &cli.command {
        Command::VerifyAlgebra(a) => (a, 0u8),
        Command::RunWeyl(a) => (a, 1),
        Command::FlowProbe(a) => (a, 2),
    };
    match run(args, which) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

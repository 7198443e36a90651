use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use relaybf_core::convex::solver_stats;
use relaybf_core::{oracle_suite, run_experiment, verify_suite, write_outputs, CheckReport, ExperimentSpec, PRESETS};

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "relaybf", version, about = "Robust source and relay beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a TOML/JSON experiment spec and write CSV plus meta.json.
    Run {
        /// Preset name or path to a spec file.
        spec: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Overrides the spec's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the spec's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the invariant suites.
    Verify {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Run the grid and brute-force cross-checks.
    Oracle {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// List the built-in presets.
    Presets,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { spec, out, seed, trials, threads } => run(&spec, out, seed, trials, threads),
        Command::Verify { seed } => report(verify_suite(seed)?),
        Command::Oracle { seed } => report(oracle_suite(seed)?),
        Command::Presets => {
            for name in PRESETS {
                println!("{name}");
            }
            Ok(true)
        }
    }
}

fn report(checks: Vec<CheckReport>) -> Result<bool> {
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} passed, {failed} failed", checks.len() - failed);
    Ok(failed == 0)
}

fn run(name: &str, out: PathBuf, seed: Option<u64>, trials: Option<usize>, threads: Option<usize>) -> Result<bool> {
    let mut spec = ExperimentSpec::load(name).with_context(|| format!("loading {name}"))?;
    if let Some(s) = seed {
        spec.base_seed = s;
    }
    if let Some(n) = trials {
        spec.n_trials = n;
    }
    spec.validate()?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("building thread pool")?;
    }
    let start = Instant::now();
    let before = solver_stats();
    let table = run_experiment(&spec)?;
    let used = solver_stats().since(&before);
    let files = write_outputs(&spec, &table, &out)?;

    println!("{:>8} {:>5} {:>10} {:<18} {:>10} {:>7} {:>6} {:>10}", "P_r dB", "rho", "network", "method", "SNR dB", "std", "ok", "rel gap");
    for r in &table.rows {
        let net = r.point.network;
        println!(
            "{:>8.1} {:>5.2} {:>10} {:<18} {:>10.3} {:>7.3} {:>6} {:>10}",
            r.point.relay_power_db,
            r.point.rho,
            format!("{}/{}/{}", net.n_t, net.relay_antennas, net.n_relays),
            r.method.id(),
            r.mean_snr_db,
            r.std_db,
            r.n_ok,
            r.max_rel_gap.map(|g| format!("{g:.2e}")).unwrap_or_else(|| "-".into()),
        );
    }
    let capped: usize = table.rows.iter().map(|r| r.n_capped).sum();
    if capped > 0 {
        println!("{capped} searches stopped at the iteration cap");
    }
    println!(
        "{} trials in {:.1} s; {} conic solves, {} failures, {} rank fallbacks",
        spec.n_trials,
        start.elapsed().as_secs_f64(),
        used.solves,
        used.failures,
        used.fallbacks
    );
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(true)
}

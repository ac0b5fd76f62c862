use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otfs_isac::channel::SystemConfig;
use otfs_isac::coarse::resolution_report;
use otfs_isac::harness::experiments::resolve;
use otfs_isac::harness::report::VERSION;
use otfs_isac::harness::{run_experiment, write_outputs, ExperimentKind, RunOptions, Scenario};
use otfs_isac::Error;
use serde_json::json;

const OUT_DIR_ENV: &str = "OTFS_ISAC_OUT_DIR";

#[derive(Parser)]
#[command(name = "otfs-isac", version = VERSION, about = "MIMO OTFS sensing and communication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a scenario file.
    Simulate(RunArgs),
    /// Write the delay, Doppler and angle bounds over the scenario's SNR sweep.
    Crlb(RunArgs),
    /// Print range and velocity resolution for a grid.
    Resolution(ResolutionArgs),
    /// Parse and validate a scenario file without running it.
    ValidateConfig {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Three targets 2 deg apart: DFT spectrum and SSR solutions.
    Demo(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory. Takes precedence over the environment and the scenario.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args)]
struct ResolutionArgs {
    /// Number of subcarriers.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Number of subsymbols.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Subcarrier spacing in Hz.
    #[arg(long)]
    df: Option<f64>,
    /// Carrier frequency in Hz.
    #[arg(long)]
    fc: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = json!({ "error": "UsageError", "message": e.render().to_string().trim() });
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}

fn error_json(e: &Error) -> serde_json::Value {
    match e {
        Error::ConfigValidation { field, message } => json!({
            "error": e.kind(),
            "field": field,
            "message": message,
        }),
        _ => json!({ "error": e.kind(), "message": e.to_string() }),
    }
}

fn run(command: Command) -> otfs_isac::Result<()> {
    match command {
        Command::Simulate(args) => {
            let path = args
                .scenario
                .as_deref()
                .ok_or_else(|| Error::config("--scenario", "simulate needs a scenario file"))?;
            execute(Scenario::load(path)?, &args)
        }
        Command::Crlb(args) => {
            let mut s = load_or(&args, || Scenario::new("crlb", ExperimentKind::Crlb))?;
            s.experiment = ExperimentKind::Crlb;
            execute(s, &args)
        }
        Command::Demo(args) => execute(load_or(&args, Scenario::demo)?, &args),
        Command::Resolution(args) => resolution(&args),
        Command::ValidateConfig { scenario } => {
            let s = Scenario::load(&scenario)?;
            println!("{}: ok ({}, {} trials)", s.name, s.experiment.name(), s.trials);
            Ok(())
        }
    }
}

fn load_or(args: &RunArgs, default: impl FnOnce() -> Scenario) -> otfs_isac::Result<Scenario> {
    match &args.scenario {
        Some(p) => Scenario::load(p),
        None => Ok(default()),
    }
}

fn output_dir(args: &RunArgs, s: &Scenario) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| s.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&s.name))
}

fn execute(scenario: Scenario, args: &RunArgs) -> otfs_isac::Result<()> {
    let opts = RunOptions {
        seed: args.seed,
        trials: args.trials,
        threads: args.parallel,
    };
    let resolved = resolve(&scenario, &opts);
    let out = run_experiment(&resolved, &opts)?;
    let dir = output_dir(args, &resolved);
    for f in write_outputs(&resolved, &out, &dir)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn resolution(args: &ResolutionArgs) -> otfs_isac::Result<()> {
    let d = SystemConfig::default();
    let cfg = SystemConfig {
        m_delay: args.m.unwrap_or(d.m_delay),
        n_doppler: args.n.unwrap_or(d.n_doppler),
        subcarrier_spacing_hz: args.df.unwrap_or(d.subcarrier_spacing_hz),
        carrier_frequency_hz: args.fc.unwrap_or(d.carrier_frequency_hz),
        ..d
    };
    cfg.validate()?;
    let r = resolution_report(&cfg);
    println!(
        "grid N={} M={}, df={} Hz, fc={} Hz",
        cfg.n_doppler, cfg.m_delay, cfg.subcarrier_spacing_hz, cfg.carrier_frequency_hz
    );
    println!("range resolution     {:.2} m ({:.6} m)", r.range_resolution_m, r.range_resolution_m);
    println!("max range            {:.2} m", r.max_range_m);
    println!(
        "velocity resolution  {:.2} m/s ({:.6} m/s)",
        r.velocity_resolution_mps, r.velocity_resolution_mps
    );
    println!("max velocity         {:.2} m/s", r.max_velocity_mps);
    Ok(())
}

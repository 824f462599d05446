use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use torus_nf::cli::{cmd_lifespan, cmd_normal_form, cmd_scan_mass, cmd_verify_calculus, CliError, RunConfig};

#[derive(Parser)]
#[command(version, about = "Paradifferential normal forms for derivative NLS on tori")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` configuration file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 forces the deterministic path.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Residual suite of the quantization, calculus, flows and homological solvers.
    VerifyCalculus,
    /// Diophantine mass scan and three-wave lower bound.
    ScanMass,
    /// Diag, nf and Birkhoff conjugation ledger.
    NormalForm,
    /// Lifespan study over the configured data sizes and seeds.
    Lifespan,
}

fn load(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::from_text("")?,
    };
    if let Some(s) = args.seed {
        cfg = cfg.with("seed", s)?;
    }
    if let Some(o) = &args.out {
        cfg = cfg.with("output_dir", o.display())?;
    }
    Ok(cfg)
}

fn run(args: &Args) -> Result<i32, CliError> {
    let cfg = load(args)?;
    let (code, json) = match args.command {
        Command::VerifyCalculus => cmd_verify_calculus(&cfg).map(|(c, r)| (c, serde_json::to_string(&r.failed)))?,
        Command::ScanMass => cmd_scan_mass(&cfg).map(|(c, r)| (c, serde_json::to_string(&r.excluded_fraction)))?,
        Command::NormalForm => cmd_normal_form(&cfg).map(|(c, r)| (c, serde_json::to_string(&r.error)))?,
        Command::Lifespan => cmd_lifespan(&cfg).map(|(c, r)| (c, serde_json::to_string(&r.pass)))?,
    };
    println!("{} -> {}", cfg.output_dir.display(), json?);
    Ok(code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(64);
        }
    }
    match run(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(64)
        }
    }
}

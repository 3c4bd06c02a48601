use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lattice_modular::cli::run::{run_tasks, EXIT_SCHEMA};
use lattice_modular::cli::{exit_code_for, parse_config, Format, RunConfig, Task};

#[derive(Parser)]
#[command(name = "modham", version, about = "Modular Hamiltonians of Gaussian lattice states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task listed in the config.
    Run(Common),
    /// Validate a config without computing anything.
    Check(Common),
    /// Run only the entropy scan of the config.
    Scan(Common),
}

#[derive(Args)]
struct Common {
    /// Path to a JSON config, or `-` for stdin.
    config: PathBuf,
    /// Accept unknown keys in the config.
    #[arg(long)]
    lenient: bool,
    /// Clip modes with c - 1/2 below the singular tolerance to this value.
    #[arg(long)]
    clip: Option<f64>,
    /// Override the output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the output formats of tabular results.
    #[arg(long, value_enum)]
    format: Vec<Format>,
}

fn load(c: &Common) -> Result<RunConfig, i32> {
    let mut cfg = parse_config(&c.config, c.lenient).map_err(|e| {
        eprintln!("error: {e}");
        exit_code_for(&e)
    })?;
    if let Some(clip) = c.clip {
        cfg.tolerances.clip = Some(clip);
    }
    if let Some(dir) = &c.output_dir {
        cfg.output.directory = dir.display().to_string();
    }
    if !c.format.is_empty() {
        cfg.output.formats = c.format.clone();
    }
    cfg.validate().map_err(|e| {
        eprintln!("error: {e}");
        exit_code_for(&e)
    })?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_SCHEMA } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (common, tasks) = match &cli.command {
        Command::Run(c) => (c, None),
        Command::Check(c) => (c, Some(vec![])),
        Command::Scan(c) => (c, Some(vec![Task::EntropyScan])),
    };
    let cfg = match load(common) {
        Ok(c) => c,
        Err(code) => return ExitCode::from(code as u8),
    };
    if let Command::Check(_) = cli.command {
        println!("config ok: {} site(s), {} task(s)", cfg.model.n_sites, cfg.tasks.len());
        return ExitCode::SUCCESS;
    }
    if let Command::Scan(_) = cli.command {
        if cfg.scan.is_none() {
            eprintln!("error: config at `scan`: scan subcommand needs a scan section");
            return ExitCode::from(EXIT_SCHEMA as u8);
        }
    }
    let tasks = tasks.unwrap_or_else(|| cfg.tasks.clone());
    let out = run_tasks(&cfg, &tasks);
    for r in out.bundle.residuals.iter().filter(|r| !r.pass) {
        eprintln!("residual {}:{} = {:e} exceeds {:e}", r.task, r.name, r.value.0, r.tolerance.0);
    }
    if let Some(e) = &out.bundle.error {
        eprintln!("error [{}]: {}", e.kind, e.message);
    }
    for f in &out.files {
        println!("{}", f.display());
    }
    ExitCode::from(out.exit_code as u8)
}

mod config;
mod error;
mod export;
mod field;
mod run;
mod sweep;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{ProblemSource, RunConfig};
pub use crate::error::CliError;

#[derive(Parser)]
#[command(name = "gravtop", version, about = "Topology optimization of structures under self-weight")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization.
    Run(RunArgs),
    /// Run every point of a parameter grid and write a summary table.
    Sweep(SweepArgs),
    /// Check a problem definition and run the gradient and property checks on a small mesh.
    Validate(RunArgs),
    /// Convert a saved density field to PNG (2D) or legacy VTK (3D).
    Export(ExportArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run configuration file (TOML).
    config: Option<PathBuf>,
    /// Builtin problem name; replaces the config file's `problem`.
    #[arg(long)]
    problem: Option<String>,
    /// Override a problem field, e.g. `--set nel=[50,25]` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a density field every N iterations.
    #[arg(long, value_name = "N")]
    every: Option<usize>,
    /// Single-threaded assembly and solves.
    #[arg(long)]
    serial: bool,
    /// Drop the minimum-mass constraint.
    #[arg(long)]
    no_g2: bool,
    #[arg(long)]
    kappa: Option<f64>,
    /// Permitted volume fraction.
    #[arg(long)]
    vf: Option<f64>,
    #[arg(long)]
    eta_gamma: Option<f64>,
    #[arg(long)]
    beta_gamma: Option<f64>,
    /// Filter radius in units of the largest element edge.
    #[arg(long)]
    filter_mult: Option<f64>,
    /// Solid threshold for the exported image or volume.
    #[arg(long)]
    threshold: Option<f64>,
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.problem {
            c.problem = Some(ProblemSource::Builtin(p.clone()));
        }
        let shortcuts = [
            ("kappa", self.kappa),
            ("vf_star", self.vf),
            ("eta_gamma", self.eta_gamma),
            ("beta_gamma", self.beta_gamma),
            ("filter_multiplier", self.filter_mult),
        ];
        for (key, v) in shortcuts {
            if let Some(v) = v {
                c.overrides.insert(key.into(), toml::Value::Float(v));
            }
        }
        if self.no_g2 {
            c.overrides.insert("g2_enabled".into(), toml::Value::Boolean(false));
        }
        for s in &self.set {
            c.push_override(s)?;
        }
        if let Some(n) = self.iters {
            c.n_iter = n;
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        if let Some(k) = self.every {
            c.every = k;
        }
        c.serial |= self.serial;
        Ok(c)
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Grid axis `key=v1,v2,...` (repeatable; axes combine as a product).
    #[arg(long = "grid", value_name = "KEY=V1,V2,...", required = true)]
    grid: Vec<String>,
    /// Grid points run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Png,
    Vtk,
}

#[derive(Args)]
struct ExportArgs {
    /// Density field written by `run`.
    field: PathBuf,
    /// Output file; defaults to the field path with the format's extension.
    #[arg(long)]
    out: Option<PathBuf>,
    /// PNG for 2D fields and VTK for 3D fields unless given.
    #[arg(long, value_enum)]
    format: Option<ExportFormat>,
    /// Solid threshold. Binarizes PNG output when given; VTK default 0.90.
    #[arg(long)]
    threshold: Option<f64>,
}

fn configure_threads(serial: bool) {
    if serial {
        // fails only if the pool was already built, which keeps the earlier setting
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
    gravtop_core::fem::set_direct_parallelism(serial);
}

fn export(args: &ExportArgs) -> Result<(), CliError> {
    let field = field::DensityField::read(&args.field)?;
    let format = args.format.unwrap_or(if field.dim == 2 { ExportFormat::Png } else { ExportFormat::Vtk });
    let ext = match format {
        ExportFormat::Png => "png",
        ExportFormat::Vtk => "vtk",
    };
    let out = args.out.clone().unwrap_or_else(|| args.field.with_extension(ext));
    match format {
        ExportFormat::Png => export::write_png(&field, args.threshold, &out)?,
        ExportFormat::Vtk => export::write_vtk(&field, args.threshold.unwrap_or(export::DEFAULT_THRESHOLD), &out)?,
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let config = args.to_config()?;
            configure_threads(config.serial);
            let summary = run::execute(&config, args.threshold, true)?;
            println!("{}", summary.describe());
            Ok(())
        }
        Command::Sweep(args) => {
            let config = args.run.to_config()?;
            configure_threads(config.serial);
            sweep::execute(&config, &args.grid, args.jobs, args.run.threshold)
        }
        Command::Validate(args) => {
            let config = args.to_config()?;
            configure_threads(config.serial);
            validate::execute(&config)
        }
        Command::Export(args) => export(&args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                // --help and --version
                e.exit();
            }
            let err = CliError::Usage(e.to_string().lines().next().unwrap_or("invalid arguments").to_string());
            eprint!("{e}");
            eprintln!("{}", err.machine_line());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

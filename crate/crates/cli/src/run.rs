//! One optimization run and its output files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gravtop_core::field_chain::gray_fraction;
use gravtop_core::IterationRecord;

use crate::config::{ProblemSource, RunConfig};
use crate::export;
use crate::field::DensityField;
use crate::CliError;

pub const HISTORY_HEADER: &str = "iter,f0_Nm,vol_frac,g1,g2,beta,max_change";

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub name: String,
    pub out: PathBuf,
    pub last: IterationRecord,
    pub iterations: usize,
    pub gray_fraction: f64,
    pub seconds: f64,
}

impl RunSummary {
    pub fn describe(&self) -> String {
        let r = &self.last;
        format!(
            "{}: {} iterations in {:.1} s, f0 {:.4e} N m, V_f {:.4}, g1 {:+.2e}, g2 {:+.2e}, gray {:.2}%, output in {}",
            self.name,
            self.iterations,
            self.seconds,
            r.f0,
            r.vol_frac,
            r.g1,
            r.g2,
            100.0 * self.gray_fraction,
            self.out.display()
        )
    }
}

pub fn history_row(r: &IterationRecord) -> String {
    format!("{},{:e},{:e},{:e},{:e},{},{:e}", r.iter, r.f0, r.vol_frac, r.g1, r.g2, r.beta, r.max_change)
}

fn prepare_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let probe = out.join(".write-test");
    File::create(&probe).map_err(|e| CliError::io(out, e))?;
    std::fs::remove_file(&probe).map_err(|e| CliError::io(&probe, e))
}

/// Resolves, runs and writes `history.csv`, `config.toml`, periodic
/// `density_###.field`, `final.field` and `final.png` or `final.vtk`.
pub fn execute(config: &RunConfig, threshold: Option<f64>, verbose: bool) -> Result<RunSummary, CliError> {
    let spec = config.resolve_problem()?;
    let built = spec.build()?;
    let opt_config = config.optimizer_config(built.config.clone())?;
    opt_config.validate()?;
    prepare_out_dir(&config.out)?;

    // fully resolved configuration, reusable as input
    let resolved = RunConfig {
        problem: Some(ProblemSource::Inline(Box::new(spec.clone()))),
        overrides: Default::default(),
        optimizer: toml::Value::try_from(&opt_config).ok().and_then(|v| v.as_table().cloned()).unwrap_or_default(),
        ..config.clone()
    };
    let path = config.out.join("config.toml");
    let text = toml::to_string(&resolved).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;

    let mesh = built.mesh.clone();
    let built = gravtop_core::problems::BuiltProblem { config: opt_config, ..built };
    let mut optimizer = built.into_optimizer(&config.solver)?;
    log::info!(
        "{}: {} elements, {} free DOFs, filter radius {:.4} m, {} iterations",
        spec.name,
        mesh.num_elements(),
        optimizer.fe().layout().num_free(),
        optimizer.filter().radius(),
        config.n_iter
    );

    let history_path = config.out.join("history.csv");
    let mut history = BufWriter::new(File::create(&history_path).map_err(|e| CliError::io(&history_path, e))?);
    writeln!(history, "{HISTORY_HEADER}").map_err(|e| CliError::io(&history_path, e))?;
    let mut io_error: Option<CliError> = None;
    let start = Instant::now();
    let every = config.every;
    let out = config.out.clone();
    let outcome = optimizer.run_with(|r, chain| {
        if io_error.is_some() {
            return;
        }
        if let Err(e) = writeln!(history, "{}", history_row(r)).and_then(|_| history.flush()) {
            io_error = Some(CliError::io(&history_path, e));
        }
        if every > 0 && r.iter % every == 0 {
            let path = out.join(format!("density_{:03}.field", r.iter));
            if let Err(e) = DensityField::from_mesh(&mesh, r.iter, &chain.x_bar).write(&path) {
                io_error = Some(e);
            }
        }
        if verbose && (r.iter == 1 || r.iter % 10 == 0) {
            log::info!(
                "it {:4}  f0 {:.4e}  V_f {:.4}  g1 {:+.2e}  g2 {:+.2e}  beta {}  change {:.3e}",
                r.iter,
                r.f0,
                r.vol_frac,
                r.g1,
                r.g2,
                r.beta,
                r.max_change
            );
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let last = *outcome.history.last().expect("at least one iteration");
    let final_field = DensityField::from_mesh(&mesh, last.iter, &outcome.chain.x_bar);
    final_field.write(&config.out.join("final.field"))?;
    export::write_default(&final_field, threshold, &config.out.join("final"))?;
    Ok(RunSummary {
        name: spec.name,
        out: config.out.clone(),
        last,
        iterations: outcome.history.len(),
        gray_fraction: gray_fraction(&outcome.chain.x_bar),
        seconds: start.elapsed().as_secs_f64(),
    })
}

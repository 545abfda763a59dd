//! Parameter grids over independent runs.

use std::fmt::Write as _;

use rayon::prelude::*;
use toml::Value;

use crate::config::{parse_literal, RunConfig};
use crate::run::{self, RunSummary};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<Value>,
}

pub fn parse_axis(s: &str) -> Result<GridAxis, CliError> {
    let (key, list) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("expected key=v1,v2,... got '{s}'")))?;
    let values: Vec<Value> = list.split(',').map(str::trim).filter(|v| !v.is_empty()).map(parse_literal).collect();
    if values.is_empty() {
        return Err(CliError::Usage(format!("grid axis '{key}' has no values")));
    }
    Ok(GridAxis { key: key.trim().to_string(), values })
}

/// Cartesian product, last axis fastest.
pub fn points(axes: &[GridAxis]) -> Vec<Vec<(String, Value)>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    out
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// `summary.csv` in the output directory plus one subdirectory per point.
pub fn execute(base: &RunConfig, grid: &[String], jobs: usize, threshold: Option<f64>) -> Result<(), CliError> {
    let axes = grid.iter().map(|g| parse_axis(g)).collect::<Result<Vec<_>, _>>()?;
    let points = points(&axes);
    let configs = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut c = base.clone();
            for (k, v) in p {
                c.overrides.insert(k.clone(), v.clone());
            }
            c.out = base.out.join(format!("point_{i:03}"));
            // catch bad keys before any run starts
            c.resolve_problem().map(|_| c)
        })
        .collect::<Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(&base.out).map_err(|e| CliError::io(&base.out, e))?;

    let run_one = |c: &RunConfig| -> Result<RunSummary, CliError> {
        let r = run::execute(c, threshold, false);
        match &r {
            Ok(s) => log::info!("{}", s.describe()),
            Err(e) => log::error!("{}: {e}", c.out.display()),
        }
        r
    };
    let results: Vec<Result<RunSummary, CliError>> = if jobs <= 1 {
        configs.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {jobs} jobs: {e}")))?;
        pool.install(|| configs.par_iter().map(run_one).collect())
    };

    let mut table = String::from("point");
    for a in &axes {
        write!(table, ",{}", a.key).unwrap();
    }
    table.push_str(",f0_Nm,vol_frac,g1,g2,gray_fraction,iterations,status\n");
    let mut failures = 0;
    for (i, (p, r)) in points.iter().zip(&results).enumerate() {
        write!(table, "{i}").unwrap();
        for (_, v) in p {
            write!(table, ",{}", cell(v)).unwrap();
        }
        match r {
            Ok(s) => writeln!(
                table,
                ",{:e},{:e},{:e},{:e},{:e},{},ok",
                s.last.f0, s.last.vol_frac, s.last.g1, s.last.g2, s.gray_fraction, s.iterations
            )
            .unwrap(),
            Err(e) => {
                failures += 1;
                writeln!(table, ",,,,,,,{}", e.kind()).unwrap();
            }
        }
    }
    let path = base.out.join("summary.csv");
    std::fs::write(&path, &table).map_err(|e| CliError::io(&path, e))?;
    print!("{table}");
    if failures > 0 {
        return Err(CliError::Check(format!("{failures} of {} grid points failed", points.len())));
    }
    Ok(())
}

//! Run configuration files and `key=value` overrides.

use std::path::{Path, PathBuf};

use gravtop_core::fem::SolverSettings;
use gravtop_core::ProblemSpec;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

/// Builtin name or a complete inline problem table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Builtin(String),
    Inline(Box<ProblemSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<ProblemSource>,
    /// Dotted `ProblemSpec` keys, applied after the problem is resolved.
    pub overrides: Table,
    pub n_iter: usize,
    pub out: PathBuf,
    /// Write a density field every this many iterations; 0 writes only the final one.
    pub every: usize,
    pub serial: bool,
    pub solver: SolverSettings,
    /// Merged over the optimizer settings derived from the problem
    /// (`objective_scale`, `change_tolerance`, `continuation`, `mma.*`).
    pub optimizer: Table,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: None,
            overrides: Table::new(),
            n_iter: 250,
            out: PathBuf::from("out"),
            every: 0,
            serial: false,
            solver: SolverSettings::default(),
            optimizer: Table::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Problem with every override applied.
    pub fn resolve_problem(&self) -> Result<ProblemSpec, CliError> {
        let spec = match &self.problem {
            None => return Err(CliError::Usage("no problem given (use --problem or a config file)".into())),
            Some(ProblemSource::Builtin(name)) => ProblemSpec::builtin(name)?,
            Some(ProblemSource::Inline(spec)) => (**spec).clone(),
        };
        let mut doc = Value::try_from(&spec).map_err(|e| CliError::Config(e.to_string()))?;
        for (key, value) in flatten(&self.overrides) {
            set_path(&mut doc, &key, value)?;
        }
        doc.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("invalid override: {e}")))
    }

    /// Optimizer settings for `spec`, with the `[optimizer]` table merged in.
    pub fn optimizer_config(
        &self,
        base: gravtop_core::OptimizerConfig,
    ) -> Result<gravtop_core::OptimizerConfig, CliError> {
        let mut doc = Value::try_from(&base).map_err(|e| CliError::Config(e.to_string()))?;
        for (key, value) in flatten(&self.optimizer) {
            if key == "change_tolerance" {
                doc.as_table_mut().expect("struct serializes to a table").insert(key, value);
            } else {
                set_path(&mut doc, &key, value)?;
            }
        }
        let mut config: gravtop_core::OptimizerConfig =
            doc.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("invalid optimizer setting: {e}")))?;
        config.n_iter = self.n_iter;
        Ok(config)
    }

    /// Adds `key=value`; the value is read as a TOML literal, falling back to a bare string.
    pub fn push_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got '{assignment}'")))?;
        self.overrides.insert(key.trim().to_string(), parse_literal(raw.trim()));
        Ok(())
    }
}

pub fn parse_literal(raw: &str) -> Value {
    match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Nested tables become dotted keys; arrays and scalars are leaves.
fn flatten(table: &Table) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    for (k, v) in table {
        match v {
            Value::Table(inner) => {
                for (ik, iv) in flatten(inner) {
                    out.push((format!("{k}.{ik}"), iv));
                }
            }
            _ => out.push((k.clone(), v.clone())),
        }
    }
    out
}

/// Replaces an existing leaf. Numeric segments index arrays.
fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let unknown = || CliError::Config(format!("unknown key '{key}'"));
    let mut node = doc;
    for part in key.split('.') {
        node = match node {
            Value::Table(t) => t.get_mut(part).ok_or_else(unknown)?,
            Value::Array(a) => {
                let i: usize = part.parse().map_err(|_| unknown())?;
                a.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    *node = match (&*node, value) {
        // `vf_star=1` should mean 1.0
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    };
    Ok(())
}

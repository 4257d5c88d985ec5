//! Run configuration: a TOML file whose keys mirror `TrainConfig`, then
//! `--set key.path=value` overrides, then the dedicated flags.

use std::fs;
use std::path::Path;

use cizsl_core::training::TrainConfig;
use serde::Deserialize;
use toml::{Table, Value};

use crate::error::{CliError, Result};

/// Parse `value` as a TOML literal, falling back to a bare string so
/// `--set policy=all` works without quotes.
fn parse_literal(value: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()))
}

/// Apply one `key.path=value` assignment to `table`.
pub fn apply_assignment(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::usage(format!(
            "override key {key:?} is malformed"
        )));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::usage(format!("override key {key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), parse_literal(value.trim()));
    Ok(())
}

/// Every key of `given` must exist in `known`; descends only where both
/// sides are tables.
fn check_known(given: &Table, known: &Table, prefix: &str) -> Result<()> {
    for (k, v) in given {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match known.get(k) {
            None => return Err(CliError::usage(format!("unknown config key {path:?}"))),
            Some(Value::Table(kt)) => {
                if let Value::Table(gt) = v {
                    check_known(gt, kt, &path)?;
                }
            }
            Some(_) => {}
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub set: Vec<String>,
    pub lambda: Option<f64>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Merge the file (if any) with the overrides. Dimensions are not fitted
/// to a dataset here.
pub fn load_config(file: Option<&Path>, ov: &Overrides) -> Result<TrainConfig> {
    let mut table = match file {
        Some(p) => read_table(p)?,
        None => Table::new(),
    };
    for a in &ov.set {
        apply_assignment(&mut table, a)?;
    }
    let known = Table::try_from(TrainConfig::default()).expect("default config serializes");
    check_known(&table, &known, "")?;
    let mut cfg = TrainConfig::deserialize(Value::Table(table))
        .map_err(|e| CliError::usage(format!("config: {e}")))?;
    if let Some(l) = ov.lambda {
        cfg.loss.lambda_creativity = l;
    }
    if let Some(n) = ov.steps {
        cfg.n_steps = n;
    }
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    // The snapshot is TOML, whose integers are signed.
    if i64::try_from(cfg.seed).is_err() {
        return Err(CliError::usage(format!(
            "seed {} exceeds {}",
            cfg.seed,
            i64::MAX
        )));
    }
    Ok(cfg)
}

pub fn to_toml(cfg: &TrainConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}

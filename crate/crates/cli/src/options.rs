use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Flags every run-producing subcommand accepts.
#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    /// Output directory (default: runs/<command>-seed<seed>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing run directory.
    #[arg(long)]
    pub force: bool,
    /// JSON file with option values; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Check results against the reference invariants; exit 2 on violation.
    #[arg(long)]
    pub assert_paper: bool,
}

impl RunFlags {
    pub fn out_dir(&self, command: &str, seed: u64) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("runs/{command}-seed{seed}")))
    }
}

/// Overlays the non-null fields of `flags` on the contents of `file`.
pub fn layered<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Path>) -> CliResult<T> {
    let Some(path) = file else {
        return Ok(serde_json::from_value(serde_json::to_value(flags)?)?);
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).with_path(path))?;
    let mut base: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let serde_json::Value::Object(over) = serde_json::to_value(flags)? else {
        unreachable!("option structs serialize to objects");
    };
    let Some(obj) = base.as_object_mut() else {
        return Err(CliError::usage(format!("{}: expected a JSON object", path.display())));
    };
    for (k, v) in over {
        if !v.is_null() {
            obj.insert(k, v);
        }
    }
    serde_json::from_value(base).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn parse_split(split: Option<&[f64]>) -> CliResult<[f64; 3]> {
    match split {
        None => Ok([0.7, 0.1, 0.2]),
        Some([a, b, c]) => Ok([*a, *b, *c]),
        Some(other) => Err(CliError::usage(format!(
            "--split needs three ratios, got {}",
            other.len()
        ))),
    }
}

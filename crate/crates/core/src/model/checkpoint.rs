use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{UCastConfig, UCastModel};
use crate::numeric::{Matrix, ParamSet};
use crate::training::Forecaster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: UCastConfig,
    pub seed: u64,
    pub params: Vec<ParamEntry>,
}

const MANIFEST: &str = "manifest.json";

/// Writes one CSV per parameter block plus `manifest.json`.
pub fn save_checkpoint(model: &UCastModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (_, name, value) in model.params().iter() {
        let file = format!("{}.csv", name.replace('.', "_"));
        value.write_csv(dir.join(&file), None)?;
        entries.push(ParamEntry {
            name: name.to_string(),
            rows: value.rows(),
            cols: value.cols(),
            file,
        });
    }
    let manifest = CheckpointManifest {
        config: model.config().clone(),
        seed: model.config().seed,
        params: entries,
    };
    let path = dir.join(MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<UCastModel> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    let mut values = ParamSet::new();
    for entry in &manifest.params {
        let m = Matrix::read_csv(dir.join(&entry.file))?;
        if m.shape() != (entry.rows, entry.cols) {
            return Err(Error::shape(
                "checkpoint",
                format!(
                    "{} is {:?}, manifest says ({}, {})",
                    entry.name,
                    m.shape(),
                    entry.rows,
                    entry.cols
                ),
            ));
        }
        values.add(entry.name.clone(), m);
    }
    UCastModel::from_parts(manifest.config, &values)
}

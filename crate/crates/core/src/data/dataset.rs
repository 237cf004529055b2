use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    /// Channel-major values, `C x N`.
    pub values: Matrix,
    pub channel_names: Vec<String>,
    pub timestamps: Option<Vec<String>>,
    pub frequency: Option<String>,
    pub source: Option<PathBuf>,
}

impl TimeSeriesDataset {
    pub fn new(values: Matrix) -> Self {
        let names = (0..values.rows()).map(|i| format!("ch{i}")).collect();
        Self {
            values,
            channel_names: names,
            timestamps: None,
            frequency: None,
            source: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.values.rows()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.cols() == 0
    }

    /// Columns `start..end` as a new dataset sharing the metadata.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::Data(format!(
                "time slice {start}..{end} outside series of length {}",
                self.len()
            )));
        }
        let cols: Vec<usize> = (start..end).collect();
        Ok(Self {
            values: self.values.select_cols(&cols)?,
            channel_names: self.channel_names.clone(),
            timestamps: self.timestamps.as_ref().map(|t| t[start..end].to_vec()),
            frequency: self.frequency.clone(),
            source: self.source.clone(),
        })
    }

    pub fn manifest(&self, name: &str, prediction_length: Option<usize>) -> DatasetManifest {
        DatasetManifest {
            name: name.to_string(),
            channels: self.channels(),
            length: self.len(),
            frequency: self.frequency.clone(),
            prediction_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub channels: usize,
    pub length: usize,
    pub frequency: Option<String>,
    pub prediction_length: Option<usize>,
}

impl DatasetManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

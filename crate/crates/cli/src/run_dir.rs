use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, EXIT_CANT_CREATE};

const CONFIG: &str = "config.json";

/// Output directory of one run. Holds the resolved configuration, the seed
/// and a content hash of every input next to the artifacts.
pub struct RunDir {
    path: PathBuf,
    inputs: Vec<(String, String)>,
}

impl RunDir {
    /// Creates `path`, refusing to touch an existing non-empty directory
    /// unless `force` is set. With `force`, only directories that look like
    /// earlier runs are cleared.
    pub fn create(path: &Path, force: bool) -> CliResult<Self> {
        if path.exists() {
            let non_empty = fs::read_dir(path)?.next().is_some();
            if non_empty && !force {
                return Err(CliError::new(
                    EXIT_CANT_CREATE,
                    format!("{} already exists; pass --force to overwrite", path.display()),
                ));
            }
            if non_empty {
                if !path.join(CONFIG).exists() {
                    return Err(CliError::new(
                        EXIT_CANT_CREATE,
                        format!("{} is not a run directory; refusing to clear it", path.display()),
                    ));
                }
                fs::remove_dir_all(path)?;
            }
        }
        fs::create_dir_all(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            inputs: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Records an input for the content hash.
    pub fn add_input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.push((name.to_string(), blob_hash(bytes)));
    }

    pub fn add_input_file(&mut self, path: &Path) -> CliResult<()> {
        let bytes = fs::read(path).map_err(|e| CliError::from(e).with_path(path))?;
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.add_input(&name, &bytes);
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> CliResult<()> {
        fs::write(self.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    /// Writes `config.json`, `seed` and `inputs.json`. The configuration
    /// itself counts as an input.
    pub fn finish_setup<T: Serialize>(&mut self, config: &T, seed: u64) -> CliResult<()> {
        let text = serde_json::to_string_pretty(config)? + "\n";
        self.add_input(CONFIG, text.as_bytes());
        fs::write(self.join(CONFIG), &text)?;
        fs::write(self.join("seed"), format!("{seed}\n"))?;
        let mut total = Sha256::new();
        for (name, hash) in &self.inputs {
            total.update(format!("{hash}  {name}\n"));
        }
        let inputs: Vec<_> = self
            .inputs
            .iter()
            .map(|(name, hash)| serde_json::json!({ "name": name, "blob": hash }))
            .collect();
        self.write_json(
            "inputs.json",
            &serde_json::json!({ "hash": hex(&total.finalize()), "inputs": inputs }),
        )
    }
}

/// Hash of `blob <len>\0<bytes>`, the object-store convention of git.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()));
    h.update(bytes);
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl CliError {
    pub fn with_path(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("r");
        let mut rd = RunDir::create(&run, false).unwrap();
        rd.finish_setup(&serde_json::json!({"a": 1}), 3).unwrap();
        assert_eq!(RunDir::create(&run, false).err().unwrap().code, EXIT_CANT_CREATE);
        RunDir::create(&run, true).unwrap();
        fs::write(dir.path().join("other.txt"), "x").unwrap();
        assert_eq!(RunDir::create(dir.path(), true).err().unwrap().code, EXIT_CANT_CREATE);
    }

    #[test]
    fn blob_hash_is_stable() {
        assert_eq!(blob_hash(b"abc"), blob_hash(b"abc"));
        assert_ne!(blob_hash(b"abc"), blob_hash(b"abd"));
    }
}

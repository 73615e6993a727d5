use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use siqrb_core::io::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Record of one invocation. Outputs are listed relative to the output
/// directory; the wall time lives here and never inside a data file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub arguments: Vec<String>,
    pub parameters: RunConfig,
    /// The resolved configuration in `key = value` form; feeding it back with
    /// `--config` and the same arguments reproduces every output.
    pub resolved_config: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub tool_version: String,
    pub wall_time_seconds: f64,
}

/// Writes artifacts under one directory and remembers their digests.
pub struct Artifacts {
    root: PathBuf,
    outputs: Vec<FileDigest>,
}

impl Artifacts {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(FileDigest {
            path: relative.to_string(),
            sha256: digest(bytes),
        });
        Ok(path)
    }

    pub fn into_outputs(mut self) -> Vec<FileDigest> {
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        self.outputs
    }
}

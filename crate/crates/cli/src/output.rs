//! Staged output: every file of a command is written to a temporary sibling
//! first and renamed into place only after all of them were written.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Debug, Default)]
pub struct StagedOutputs {
    files: Vec<(PathBuf, String)>,
}

impl StagedOutputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, contents: String) {
        self.files.push((path.into(), contents));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut temps = Vec::with_capacity(self.files.len());
        for (path, contents) in &self.files {
            let tmp = temp_path(path);
            if let Err(e) = stage(path, &tmp, contents) {
                let _ = fs::remove_file(&tmp);
                cleanup(&temps);
                return Err(e);
            }
            temps.push(tmp);
        }
        for ((path, _), tmp) in self.files.iter().zip(&temps) {
            fs::rename(tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
        }
        Ok(self.files.into_iter().map(|(p, _)| p).collect())
    }
}

fn stage(path: &Path, tmp: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))?;
    }
    fs::write(tmp, contents).with_context(|| format!("writing {}", tmp.display()))
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

fn cleanup(temps: &[PathBuf]) {
    for t in temps {
        let _ = fs::remove_file(t);
    }
}

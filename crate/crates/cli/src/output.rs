//! Artifact files, written only after every target has been checked.

use std::path::{Path, PathBuf};

use crate::error::CliError;

/// A file produced by a task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub file: &'static str,
    pub contents: String,
}

/// Fails if any of `files` exists in `dir` and `force` is not set.
pub fn ensure_writable(dir: &Path, files: &[&str], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    let existing: Vec<PathBuf> = files.iter().map(|f| dir.join(f)).filter(|p| p.exists()).collect();
    if existing.is_empty() {
        Ok(())
    } else {
        let names: Vec<String> = existing.iter().map(|p| p.display().to_string()).collect();
        Err(CliError::Output(format!("refusing to overwrite {} (use --force)", names.join(", "))))
    }
}

pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
    for a in artifacts {
        let path = dir.join(a.file);
        std::fs::write(&path, &a.contents).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

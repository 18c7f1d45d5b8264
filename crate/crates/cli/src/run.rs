//! Run directories and JSON config plumbing shared by the subcommands.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Resolves `path` against the data root unless it is absolute.
pub fn data_path(root: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        root.join(path)
    }
}

/// Reads a strict JSON config, or the type's defaults when no file is given.
pub fn read_config<T: DeserializeOwned>(path: Option<&Path>, empty: &str) -> Result<T> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
        None => empty.to_string(),
    };
    let what = path.map(|p| p.display().to_string()).unwrap_or_else(|| "defaults".into());
    serde_json::from_str(&text).with_context(|| format!("parsing config {what}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Creates `<out>/<name>`, or `<out>/<command>-<unix seconds>` when no name
/// is given, suffixing `-1`, `-2`, ... if it already exists.
pub fn run_dir(out: &Path, command: &str, name: Option<&str>) -> Result<PathBuf> {
    let stem = match name {
        Some(n) => n.to_string(),
        None => {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            format!("{command}-{secs}")
        }
    };
    let mut dir = out.join(&stem);
    let mut k = 1;
    while dir.exists() {
        dir = out.join(format!("{stem}-{k}"));
        k += 1;
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating run directory {}", dir.display()))?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_hang_off_the_data_root() {
        assert_eq!(data_path(Path::new("/d"), Path::new("x/m.jsonl")), PathBuf::from("/d/x/m.jsonl"));
        assert_eq!(data_path(Path::new("/d"), Path::new("/abs")), PathBuf::from("/abs"));
    }

    #[test]
    fn existing_runs_are_not_overwritten() {
        let tmp = tempfile::tempdir().unwrap();
        let a = run_dir(tmp.path(), "train", Some("r")).unwrap();
        let b = run_dir(tmp.path(), "train", Some("r")).unwrap();
        assert_ne!(a, b);
        assert!(b.ends_with("r-1"));
    }
}

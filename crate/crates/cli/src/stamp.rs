use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gaitclone::config::ExperimentConfig;
use serde::Serialize;

/// Provenance written next to, or inside, every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Stamp {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Stamp {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
        }
    }
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    stamp: &'a Stamp,
    #[serde(flatten)]
    body: &'a T,
}

/// `foo.csv` -> `foo.csv.stamp.toml`
pub fn stamp_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".stamp.toml");
    s.into()
}

pub fn write_sidecar(path: &Path, stamp: &Stamp) -> Result<()> {
    let side = stamp_path(path);
    fs::write(&side, toml::to_string(stamp)?).with_context(|| format!("writing {}", side.display()))
}

/// Writes a TOML file with a `[stamp]` table followed by `body`.
pub fn write_toml<T: Serialize>(path: &Path, stamp: &Stamp, body: &T) -> Result<()> {
    let text = toml::to_string(&Stamped { stamp, body })?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Fails with a message naming the command that produces `path`.
pub fn require(path: &Path, stage: &str) -> Result<()> {
    if !path.exists() {
        anyhow::bail!("missing {}: run `gaitclone {stage}` first", path.display());
    }
    Ok(())
}

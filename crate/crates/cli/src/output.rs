//! Output paths and stamped, atomically written files.

use std::path::{Path, PathBuf};

use sagan_core::io::write_atomic;
use sagan_core::tensor::{write_container, Container};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// The only environment variable the tool reads.
pub const OUT_DIR_ENV: &str = "SAGAN_OUT_DIR";

/// Relative output paths are placed under `$SAGAN_OUT_DIR` when it is set.
pub fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(base) if path.is_relative() && !base.is_empty() => PathBuf::from(base).join(path),
        _ => path.to_path_buf(),
    }
}

/// Digest and seed stamped into every output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stamp {
    pub digest: String,
    pub seed: u64,
}

impl Stamp {
    pub fn comment(&self) -> String {
        format!("# config_digest {}\n# seed {}\n", self.digest, self.seed)
    }

    pub fn container(&self, c: Container) -> Container {
        c.with_meta("config_digest", self.digest.clone())
            .with_meta("seed", self.seed.to_string())
    }
}

pub fn text(path: &Path, stamp: &Stamp, body: &str) -> CliResult<()> {
    Ok(write_atomic(path, format!("{}{body}", stamp.comment()).as_bytes())?)
}

pub fn json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| CliError::Compute(e.to_string()))?;
    Ok(write_atomic(path, (s + "\n").as_bytes())?)
}

pub fn container(path: &Path, stamp: &Stamp, c: Container) -> CliResult<()> {
    Ok(write_container(path, &stamp.container(c))?)
}

//! Output directory handling: the writer lock and provenance headers.

use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use wearec::analysis::metadata_line;
use wearec::config::RunConfig;

use crate::failure::{At, Failure, Stage};

pub const LOCK_NAME: &str = ".wearec.lock";

/// Exclusive claim on an output directory, released on drop.
pub struct OutputDir {
    root: PathBuf,
    lock: PathBuf,
}

impl OutputDir {
    pub fn claim(root: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(root).map_err(|e| Failure::usage(format!("{}: {e}", root.display())))?;
        let lock = root.join(LOCK_NAME);
        let mut file: File = match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(f) => f,
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                return Err(Failure::usage(format!(
                    "{} is locked by another run; remove {} if that run is gone",
                    root.display(),
                    lock.display()
                )))
            }
            Err(e) => return Err(Failure::usage(format!("{}: {e}", lock.display()))),
        };
        let _ = writeln!(file, "{}", std::process::id());
        Ok(OutputDir {
            root: root.to_path_buf(),
            lock,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, Failure> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// Comment block for CSV artifacts: the metadata line, then every config
/// line prefixed with `# `.
pub fn csv_preamble(cfg: &RunConfig, checkpoint: &str) -> String {
    let mut out = metadata_line(&cfg.hash(), checkpoint, cfg.seed);
    for line in cfg.to_text().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Recovers the config echoed by [`csv_preamble`].
#[cfg(test)]
pub fn config_from_preamble(text: &str) -> Result<RunConfig, Failure> {
    let body: String = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .skip(1)
        .map(|l| l.trim_start_matches('#').trim_start().to_string() + "\n")
        .collect();
    RunConfig::parse(&body, "csv preamble").at(Stage::Config)
}

/// Wraps `payload` with the effective config and its hash.
pub fn json_artifact(cfg: &RunConfig, checkpoint: &str, payload: Value) -> String {
    let doc = json!({
        "config_hash": cfg.hash(),
        "checkpoint": checkpoint,
        "seed": cfg.seed,
        "config": cfg.to_text(),
        "result": payload,
    });
    serde_json::to_string_pretty(&doc).expect("json artifact serializes") + "\n"
}

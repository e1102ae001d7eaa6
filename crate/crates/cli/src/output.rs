use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::commands::Failure;

/// Where a command's files go, and the manifest tying them together.
pub struct Output {
    dir: Option<PathBuf>,
    files: Vec<String>,
    started: Instant,
    started_unix: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: Option<String>,
    seeds: &'a [u64],
    out: String,
    artifact_version: &'static str,
    tick_ms: f64,
    files: &'a [String],
    /// Wall-clock metadata; the only nondeterministic content.
    wall_clock: WallClock,
}

#[derive(Serialize)]
struct WallClock {
    started_unix_s: u64,
    elapsed_ms: u128,
}

impl Output {
    pub fn new(dir: Option<&Path>) -> Result<Self, Failure> {
        if let Some(d) = dir {
            fs::create_dir_all(d).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Self {
            dir: dir.map(Path::to_path_buf),
            files: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })
    }

    pub fn enabled(&self) -> bool {
        self.dir.is_some()
    }

    /// Writes `name` under the output directory, if one was given.
    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> Result<(), String>,
    ) -> Result<(), Failure> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let mut buf = Vec::new();
        f(&mut buf).map_err(Failure::Usage)?;
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Failure::Usage(e.to_string()))?;
        }
        fs::write(&path, buf).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        self.write_with(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value).map_err(|e| e.to_string())?;
            buf.push(b'\n');
            Ok(())
        })
    }

    pub fn finish(self, command: &str, config: Option<&Path>, seeds: &[u64], tick_ms: f64) -> Result<(), Failure> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let manifest = Manifest {
            command,
            config: config.map(|p| p.display().to_string()),
            seeds,
            out: dir.display().to_string(),
            artifact_version: env!("CARGO_PKG_VERSION"),
            tick_ms,
            files: &self.files,
            wall_clock: WallClock {
                started_unix_s: self.started_unix,
                elapsed_ms: self.started.elapsed().as_millis(),
            },
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Usage(e.to_string()))?;
        fs::write(dir.join("manifest.json"), text + "\n").map_err(|e| Failure::Usage(e.to_string()))
    }
}

/// Prints a report to stdout.
/// Prints to stdout; a closed pipe is not an error.
pub fn print(value: &Value) {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

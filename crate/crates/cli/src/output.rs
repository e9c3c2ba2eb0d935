//! CSV, JSON and manifest writers.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Round-trip exact, locale independent.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Run directory: the explicit one, or `runs/<unix time>-<seed>`.
pub fn run_directory(explicit: Option<&Path>, seed: u64) -> Result<PathBuf, CliError> {
    let dir = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            PathBuf::from("runs").join(format!("{stamp}-{seed}"))
        }
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir, written: Vec::new() }
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let io = |e: csv::Error| CliError::io(&path, e);
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// Writes the resolved config and the manifest listing every output.
    pub fn finish(mut self, command: &str, cfg: &RunConfig, elapsed: Duration) -> Result<PathBuf, CliError> {
        let snapshot = cfg.snapshot();
        let config_toml = toml::to_string(&snapshot)
            .map_err(|e| CliError::Config(format!("cannot serialize configuration: {e}")))?;
        self.text("config.toml", &config_toml)?;
        let manifest = Manifest {
            command,
            code_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
            master_seed: cfg.ensemble.master_seed,
            wall_clock_seconds: elapsed.as_secs_f64(),
            config: &snapshot,
            config_toml: &config_toml,
            outputs: self.written.iter().map(|p| p.display().to_string()).collect(),
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::io(&path, e))? + "\n";
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    code_version: &'a str,
    master_seed: u64,
    wall_clock_seconds: f64,
    config: &'a crate::config::ConfigKeys,
    config_toml: &'a str,
    outputs: Vec<String>,
}

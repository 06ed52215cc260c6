//! JSON manifest written next to the outputs of every run.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::params::{Mode, ParameterSet, PhysicalConstants};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub command: String,
    pub mode: Mode,
    pub seed: u64,
    pub n_trajectories: usize,
    pub wall_clock_seconds: f64,
    pub constants: PhysicalConstants,
    pub params: ParameterSet,
    /// Parameters in config-file form; parsing this text reproduces `params`.
    pub config: String,
    pub outputs: Vec<OutputEntry>,
    pub notes: Vec<String>,
    /// Command-specific results (e.g. a detected working range).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub results: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, p: &ParameterSet) -> Self {
        RunManifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            mode: p.mode,
            seed: p.rng_seed,
            n_trajectories: p.n_trajectories,
            wall_clock_seconds: 0.0,
            constants: PhysicalConstants::CODATA_2018,
            params: p.clone(),
            config: p.render(),
            outputs: Vec::new(),
            notes: default_notes(p),
            results: serde_json::Value::Null,
        }
    }

    /// Records the files (relative to `dir`) with their sizes.
    pub fn list_outputs(&mut self, dir: &Path, files: &[PathBuf]) -> io::Result<()> {
        for f in files {
            let meta = fs::metadata(dir.join(f))?;
            self.outputs.push(OutputEntry {
                path: f.to_string_lossy().replace('\\', "/"),
                bytes: meta.len(),
            });
        }
        Ok(())
    }

    /// Every listed output exists and is non-empty.
    pub fn verify(&self, dir: &Path) -> Result<(), String> {
        for o in &self.outputs {
            match fs::metadata(dir.join(&o.path)) {
                Ok(m) if m.len() > 0 => {}
                Ok(_) => return Err(format!("{} is empty", o.path)),
                Err(e) => return Err(format!("{}: {e}", o.path)),
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(path, text + "\n")
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(io::Error::other)
    }
}

fn default_notes(p: &ParameterSet) -> Vec<String> {
    let mut notes = Vec::new();
    if p.mode == Mode::ThreeLevel {
        notes.push(format!(
            "gamma3 = {:e} 1/s and omega_q_hat = {:e} 1/s are a modelling choice; only their ratio W_Q = {:e} 1/s is fixed",
            p.gamma3,
            p.omega_q_hat,
            p.omega_q_hat * p.omega_q_hat / p.gamma3
        ));
    }
    notes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::parse_config;

    #[test]
    fn round_trip_and_reparse() {
        let mut p = ParameterSet::defaults(Mode::ThreeLevel);
        p.rng_seed = 42;
        let m = RunManifest::new("run", &p);
        assert_eq!(m.notes.len(), 1);
        let dir = std::env::temp_dir().join(format!("diode-ring-manifest-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("manifest.json");
        m.write(&path).unwrap();
        let back = RunManifest::read(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(parse_config(&back.config).unwrap(), p);
    }

    #[test]
    fn verify_flags_missing_and_empty_outputs() {
        let dir = std::env::temp_dir().join(format!("diode-ring-verify-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("a.csv"), "t\n").unwrap();
        fs::write(dir.join("b.csv"), "").unwrap();
        let mut m = RunManifest::new("run", &ParameterSet::defaults(Mode::Classical));
        m.list_outputs(&dir, &[PathBuf::from("a.csv")]).unwrap();
        assert!(m.verify(&dir).is_ok());
        m.outputs.push(OutputEntry {
            path: "b.csv".into(),
            bytes: 0,
        });
        assert!(m.verify(&dir).is_err());
        m.outputs.pop();
        m.outputs.push(OutputEntry {
            path: "missing.csv".into(),
            bytes: 1,
        });
        assert!(m.verify(&dir).is_err());
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

/// Provenance record written next to the outputs of every command.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    /// Path to content digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub exit_code: i32,
    pub started_at: String,
    pub finished_at: String,
}

fn now() -> String {
    DateTime::<Utc>::from(SystemTime::now()).to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: String::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            exit_code: 0,
            started_at: now(),
            finished_at: String::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        fingerprint_into(&mut self.inputs, path);
    }

    pub fn output(&mut self, path: &Path) {
        fingerprint_into(&mut self.outputs, path);
    }

    pub fn finish(mut self, dir: &Path, exit_code: i32) -> std::io::Result<PathBuf> {
        self.exit_code = exit_code;
        self.finished_at = now();
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("manifest-{}.json", self.command));
        fs::write(&path, serde_json::to_vec_pretty(&self)?)?;
        Ok(path)
    }
}

/// Files are digested directly; directories contribute every file below
/// them, keyed by path.
fn fingerprint_into(map: &mut BTreeMap<String, String>, path: &Path) {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = match fs::read_dir(path) {
            Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
            Err(_) => return,
        };
        entries.sort();
        for e in entries {
            if e.file_name().is_some_and(|n| n.to_string_lossy().starts_with("manifest-")) {
                continue;
            }
            fingerprint_into(map, &e);
        }
    } else if let Ok(bytes) = fs::read(path) {
        map.insert(path.display().to_string(), condalert::digest(&bytes));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_fingerprints_skip_manifests() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "x").unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("sub/b.txt"), "y").unwrap();
        fs::write(dir.path().join("manifest-train.json"), "{}").unwrap();
        let mut m = RunManifest::start("t", None);
        m.output(dir.path());
        assert_eq!(m.outputs.len(), 2);
        assert!(m.outputs.values().all(|d| d.len() == 32));
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{fingerprint_file, sha256_hex, write_atomic};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Record of one command invocation: what went in, what came out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config: Value,
    /// Path to SHA-256 of its content.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
    /// Hash of command, config and input fingerprints.
    pub run_key: String,
    /// Set when an earlier manifest with the same run key was found:
    /// whether every output hash matched it.
    pub reproducible: Option<bool>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Content hash of a file, or of a directory's files (recursively, in name order).
pub fn fingerprint_path(path: &Path) -> io::Result<String> {
    if path.is_file() {
        return fingerprint_file(path);
    }
    let mut lines = String::new();
    let mut stack = vec![path.to_path_buf()];
    let mut files = Vec::new();
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    for f in files {
        let rel = f.strip_prefix(path).unwrap_or(&f);
        lines.push_str(&format!("{}:{}\n", rel.display(), fingerprint_file(&f)?));
    }
    Ok(sha256_hex(lines.as_bytes()))
}

impl RunManifest {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.into(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_at: now(),
            finished_at: String::new(),
            run_key: String::new(),
            reproducible: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> io::Result<()> {
        self.inputs.insert(path.display().to_string(), fingerprint_path(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> io::Result<()> {
        self.outputs.insert(path.display().to_string(), fingerprint_path(path)?);
        Ok(())
    }

    pub fn compute_run_key(&self) -> String {
        let inputs: Vec<String> = self.inputs.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        sha256_hex(format!("{}\n{}\n{}", self.command, self.config, inputs.join("\n")).as_bytes())
    }

    /// Finalises and writes the manifest to `path`, comparing with any
    /// manifest already there.
    pub fn write(mut self, path: &Path) -> io::Result<Self> {
        self.finished_at = now();
        self.run_key = self.compute_run_key();
        self.reproducible = fs::read_to_string(path)
            .ok()
            .and_then(|text| serde_json::from_str::<RunManifest>(&text).ok())
            .filter(|prev| prev.run_key == self.run_key)
            .map(|prev| prev.outputs == self.outputs);
        let mut text = serde_json::to_string_pretty(&serde_json::to_value(&self)?)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        Ok(self)
    }
}

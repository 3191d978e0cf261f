//! Run directories and self-describing artifacts.
//!
//! Every JSON file is an envelope `{command, seed, config, result}` and every
//! CSV starts with one `#` comment line carrying the same envelope minus the
//! result, so each file alone identifies the run that wrote it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const OUTPUT_ENV: &str = "SWAT_LAB_OUTPUT";

pub struct RunDir {
    path: PathBuf,
    command: String,
    seed: u64,
    config: Value,
    /// Content hashes of written files, keyed by file name.
    hashes: BTreeMap<String, String>,
}

/// Output root: explicit setting, then the environment, then `runs/`.
pub fn output_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

impl RunDir {
    /// Creates `<root>/<UTC timestamp>-<command>-<name>`, adding a numeric
    /// suffix if that directory already exists.
    pub fn create(
        root: &Path,
        command: &str,
        name: &str,
        seed: u64,
        config: Value,
    ) -> Result<Self, CliError> {
        let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
        let base = format!("{stamp}-{command}-{}", sanitize(name));
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::io(format!("creating {}: {e}", root.display())))?;
        let mut path = root.join(&base);
        let mut n = 1;
        while path.exists() {
            n += 1;
            path = root.join(format!("{base}-{n}"));
        }
        std::fs::create_dir(&path)
            .map_err(|e| CliError::io(format!("creating {}: {e}", path.display())))?;
        Ok(Self {
            path,
            command: command.to_string(),
            seed,
            config,
            hashes: BTreeMap::new(),
        })
    }

    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }

    fn envelope(&self) -> Value {
        json!({ "command": self.command, "seed": self.seed, "config": self.config })
    }

    /// Writes raw bytes; `hashed` files enter the content hash.
    pub fn write_bytes(
        &mut self,
        name: &str,
        bytes: &[u8],
        hashed: bool,
    ) -> Result<PathBuf, CliError> {
        let p = self.path.join(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&p, bytes)
            .map_err(|e| CliError::io(format!("writing {}: {e}", p.display())))?;
        if hashed {
            self.hashes.insert(name.to_string(), sha256_hex(bytes));
        }
        Ok(p)
    }

    pub fn write_json<T: Serialize>(
        &mut self,
        name: &str,
        result: &T,
    ) -> Result<PathBuf, CliError> {
        let mut doc = self.envelope();
        doc["result"] = serde_json::to_value(result)?;
        let bytes = serde_json::to_vec_pretty(&doc)?;
        self.write_bytes(name, &bytes, true)
    }

    pub fn write_csv(&mut self, name: &str, body: &[u8]) -> Result<PathBuf, CliError> {
        let mut bytes = format!("# {}\n", serde_json::to_string(&self.envelope())?).into_bytes();
        bytes.extend_from_slice(body);
        self.write_bytes(name, &bytes, true)
    }

    /// Replaces the recorded hash of `name`, for files whose bytes contain
    /// run-dependent fields that the content hash should ignore.
    pub fn record_hash(&mut self, name: &str, hash: &str) {
        self.hashes.insert(name.to_string(), hash.to_string());
    }

    /// Writes the human-readable summary and echoes it to stdout.
    pub fn write_summary(&mut self, text: &str) -> Result<(), CliError> {
        let header = format!(
            "# {} ({})\n\nseed: {}\nrun directory: {}\n\n",
            self.command,
            self.config
                .get("name")
                .and_then(Value::as_str)
                .unwrap_or("-"),
            self.seed,
            self.path.display()
        );
        let full = format!("{header}{text}");
        self.write_bytes("summary.md", full.as_bytes(), false)?;
        println!("{full}");
        Ok(())
    }

    /// Hash over the sorted (name, hash) list of every hashed output.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, hash) in &self.hashes {
            h.update(name.as_bytes());
            h.update([0]);
            h.update(hash.as_bytes());
            h.update([b'\n']);
        }
        hex::encode(h.finalize())
    }
}

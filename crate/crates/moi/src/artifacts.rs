//! Run directories: config snapshot first, then artifacts that each carry
//! the config hash, plus an index of file digests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{MoiError, Result};
use crate::formats::write_bytes;

pub const CONFIG_SNAPSHOT: &str = "config.yaml";
pub const INDEX: &str = "artifacts.json";
pub const LOG: &str = "run.log";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| MoiError::Data(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Adds `config_hash` to a JSON object.
pub fn with_hash<T: Serialize>(value: &T, config_hash: &str) -> Result<Value> {
    let mut v = serde_json::to_value(value).map_err(|e| MoiError::Data(e.to_string()))?;
    match &mut v {
        Value::Object(map) => {
            map.insert("config_hash".into(), Value::String(config_hash.into()));
        }
        _ => {
            let mut map = Map::new();
            map.insert("config_hash".into(), Value::String(config_hash.into()));
            map.insert("value".into(), v);
            v = Value::Object(map);
        }
    }
    Ok(v)
}

#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    config_hash: String,
    files: BTreeMap<String, String>,
    log: Vec<String>,
}

impl RunDir {
    /// Creates `root` and writes the config snapshot before anything else.
    pub fn create(root: &Path, config: &Config) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| MoiError::io(root, e))?;
        let mut run = Self { root: root.to_path_buf(), config_hash: config.hash(), files: BTreeMap::new(), log: Vec::new() };
        run.write(CONFIG_SNAPSHOT, config.snapshot().as_bytes())?;
        run.log(format!("config {}", run.config_hash));
        Ok(run)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn log(&mut self, line: impl Into<String>) {
        let line = line.into();
        log::info!("{line}");
        self.log.push(line);
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_bytes(&self.path(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let v = with_hash(value, &self.config_hash)?;
        self.write(name, &json_bytes(&v)?)
    }

    /// Writes the log and the digest index; call last.
    pub fn finish(mut self) -> Result<()> {
        self.log(format!("wrote {} artifacts", self.files.len()));
        let mut text = self.log.join("\n");
        text.push('\n');
        self.write(LOG, text.as_bytes())?;
        #[derive(Serialize)]
        struct Index<'a> {
            config_hash: &'a str,
            files: &'a BTreeMap<String, String>,
        }
        let bytes = json_bytes(&Index { config_hash: &self.config_hash, files: &self.files })?;
        write_bytes(&self.path(INDEX), &bytes)
    }
}

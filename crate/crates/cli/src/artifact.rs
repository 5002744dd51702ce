//! Output directories with provenance.
//!
//! Every CSV artifact starts with a `# config_sha256=<hex> seed=<n>` line and
//! every JSON artifact carries `config_sha256` and `seed` keys, so a file
//! identifies the run that produced it on its own. `manifest.json` lists the
//! SHA-256 of each artifact. Wall-clock times go to `run.meta.json` only;
//! everything else is a function of the configuration and the seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::config::sha256_hex;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const SIDECAR: &str = "run.meta.json";

/// Identity of a run: what produced an artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Stamp {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Stamp {
    pub fn csv_header(&self) -> String {
        format!("# config_sha256={} seed={}\n", self.config_sha256, self.seed)
    }

    /// `body` with the provenance header prepended.
    pub fn csv(&self, body: &str) -> String {
        let mut s = self.csv_header();
        s.push_str(body);
        s
    }

    /// `value` with `config_sha256` and `seed` inserted; non-objects are
    /// wrapped as `{"value": ...}`.
    pub fn json(&self, value: Value) -> Value {
        let mut obj = match value {
            Value::Object(m) => m,
            other => {
                let mut m = serde_json::Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        obj.insert("config_sha256".into(), json!(self.config_sha256));
        obj.insert("seed".into(), json!(self.seed));
        Value::Object(obj)
    }
}

pub fn json_text(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Collects artifacts in one directory and writes the manifest on
/// [`ArtifactDir::finish`].
pub struct ArtifactDir {
    dir: PathBuf,
    stamp: Stamp,
    files: BTreeMap<String, String>,
    started: SystemTime,
}

impl ArtifactDir {
    pub fn create(dir: impl AsRef<Path>, stamp: Stamp) -> Result<Self, CliError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(ArtifactDir {
            dir,
            stamp,
            files: BTreeMap::new(),
            started: SystemTime::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn stamp(&self) -> &Stamp {
        &self.stamp
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let text = self.stamp.csv(body);
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json(&mut self, name: &str, value: Value) -> Result<(), CliError> {
        let text = json_text(&self.stamp.json(value));
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes `manifest.json` and the timestamp sidecar.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let manifest = json!({
            "command": self.stamp.command,
            "config_sha256": self.stamp.config_sha256,
            "seed": self.stamp.seed,
            "files": self.files,
        });
        let text = json_text(&manifest);
        fs::write(self.dir.join(MANIFEST), text)?;
        let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let meta = json!({
            "started_unix": secs(self.started),
            "finished_unix": secs(SystemTime::now()),
            "tool_version": env!("CARGO_PKG_VERSION"),
            "threads": rayon::current_num_threads(),
        });
        fs::write(self.dir.join(SIDECAR), json_text(&meta))?;
        Ok(self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stamp() -> Stamp {
        Stamp {
            command: "test".into(),
            config_sha256: "ab".repeat(32),
            seed: 5,
        }
    }

    #[test]
    fn csv_and_json_carry_provenance() {
        let s = stamp();
        assert!(s.csv("index,rate\n").starts_with("# config_sha256=abab"));
        let v = s.json(json!({"x": 1}));
        assert_eq!(v["seed"], 5);
        assert_eq!(v["x"], 1);
        assert_eq!(s.json(json!([1, 2]))["value"], json!([1, 2]));
    }

    #[test]
    fn manifest_lists_file_hashes() {
        let tmp = tempfile::tempdir().unwrap();
        let mut d = ArtifactDir::create(tmp.path().join("run"), stamp()).unwrap();
        d.write_bytes("a.bin", b"").unwrap();
        let dir = d.finish().unwrap();
        let m: Value = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(
            m["files"]["a.bin"],
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert!(dir.join(SIDECAR).exists());
    }
}

//! Run manifests: every emitted artifact directory carries a record of
//! the command, configuration hash, input hashes, seed, and tool version
//! that produced it.

use std::fs;
use std::path::Path;

use serde_json::json;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub input_hashes: Vec<(String, String)>,
    pub seed: Option<u64>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            config_hash: String::new(),
            input_hashes: vec![],
            seed: None,
        }
    }

    pub fn with_config_text(mut self, text: &str) -> Self {
        self.config_hash = sha256_hex(text.as_bytes());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Write `manifest.json` into the output directory. The timestamp is
    /// the only field expected to differ across reruns of an otherwise
    /// identical invocation.
    pub fn write(&self, out_dir: &Path) -> std::io::Result<()> {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let value = json!({
            "command": self.command,
            "config_hash": self.config_hash,
            "inputs": self.input_hashes.iter().map(|(name, hash)| {
                json!({"name": name, "sha256": hash})
            }).collect::<Vec<_>>(),
            "seed": self.seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "written_at_epoch_seconds": now,
        });
        fs::write(out_dir.join("manifest.json"), format!("{value:#}\n"))
    }
}

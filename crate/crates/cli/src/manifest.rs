use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

/// Inputs and settings of one invocation, embedded in every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub kernel: PathBuf,
    pub report: Option<PathBuf>,
    pub platform: Option<PathBuf>,
    pub point: Option<PathBuf>,
    pub pe_loop: Option<String>,
    pub seed: u64,
    pub budget_secs: f64,
    pub budget_evals: Option<u64>,
    pub jobs: usize,
    pub out_dir: Option<PathBuf>,
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

impl RunManifest {
    pub fn now() -> u128 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis())
    }

    /// Wraps a result document with the manifest.
    pub fn wrap(&self, result: impl Serialize) -> serde_json::Value {
        serde_json::json!({ "manifest": self, "result": result })
    }

    /// The manifest as `#`-prefixed lines for text and CSV outputs.
    pub fn comment_header(&self) -> String {
        let json = serde_json::to_string(self).expect("manifest serializes");
        format!("# {json}\n")
    }

    pub fn out_path(&self, name: &str) -> Option<PathBuf> {
        self.out_dir.as_deref().map(|d: &Path| d.join(name))
    }
}

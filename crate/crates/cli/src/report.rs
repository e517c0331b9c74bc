use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ExitStatus {
    pub code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything a run produced. Keys of `diagnostics` and `tables` are sorted
/// and no wall-clock data is recorded, so equal inputs give equal bytes.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub input: Option<InputDigest>,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub parameters: BTreeMap<String, Value>,
    pub diagnostics: BTreeMap<String, Value>,
    /// Per-point residual rows, when the command has them.
    pub tables: BTreeMap<String, Value>,
    pub exit_status: ExitStatus,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("hypnf", hypnf::VERSION);
        versions.insert("hypnf-cli", env!("CARGO_PKG_VERSION"));
        RunReport {
            command: command.to_string(),
            input: None,
            versions,
            parameters: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            tables: BTreeMap::new(),
            exit_status: ExitStatus { code: 0, error: None },
        }
    }

    pub fn param(&mut self, key: &str, v: impl Serialize) {
        self.parameters.insert(key.to_string(), to_value(v));
    }

    pub fn diag(&mut self, key: &str, v: impl Serialize) {
        self.diagnostics.insert(key.to_string(), to_value(v));
    }

    pub fn table(&mut self, key: &str, v: impl Serialize) {
        self.tables.insert(key.to_string(), to_value(v));
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

// serde_json writes non-finite floats as null
fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or_else(|e| Value::String(format!("unserializable: {e}")))
}

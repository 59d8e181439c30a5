use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use serde::Serialize;

/// Provenance embedded in every artifact: enough to rerun the command.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub arguments: Vec<String>,
    pub config_paths: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// RFC 3339, UTC. Taken from `SOURCE_DATE_EPOCH` when set so that reruns
    /// can be byte-identical.
    pub timestamp: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config_paths: &[&Path], seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            arguments: std::env::args().skip(1).collect(),
            config_paths: config_paths.iter().map(|p| p.to_path_buf()).collect(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(),
            outputs: Vec::new(),
        }
    }
}

fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .map(|secs| SystemTime::UNIX_EPOCH + Duration::from_secs(secs))
        .unwrap_or_else(SystemTime::now);
    humantime::format_rfc3339_seconds(now).to_string()
}

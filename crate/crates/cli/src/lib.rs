//! File-level driver for the transit PSF pipeline: simulate, blind estimate,
//! deconvolve, validate and the long-range sanity check.

pub mod commands;
pub mod config;

use std::fmt;

use serde::Serialize;

pub use commands::{run, Manifest, ManifestPatch};
pub use config::{GeometrySpec, Mode, MuSource, Overrides, PipelineConfig, SigmaSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Failure reported as `{"error": kind, "message": ...}` with a matching exit code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    #[serde(rename = "error")]
    pub kind: String,
    pub message: String,
    #[serde(skip)]
    pub exit_code: i32,
}

impl CliError {
    pub fn config(kind: &str, message: impl Into<String>) -> Self {
        Self { kind: kind.into(), message: message.into(), exit_code: EXIT_CONFIG }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<transit_deconv::Error> for CliError {
    fn from(e: transit_deconv::Error) -> Self {
        let exit_code = if e.is_numerical() { EXIT_NUMERIC } else { EXIT_CONFIG };
        Self { kind: e.kind().into(), message: e.to_string(), exit_code }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config("io_error", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::config("json_error", e.to_string())
    }
}

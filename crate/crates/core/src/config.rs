//! Run configuration shared by the command-line tools.
//!
//! Every field has a default, unknown keys are rejected, and the canonical
//! JSON form of a configuration is hashed so that outputs can be traced back
//! to the exact settings that produced them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::auger::{AugerChainConfig, AugerSignalSpec};
use crate::error::{Error, Result};
use crate::harness::HarnessConfig;
use crate::sem::FitConfig;
use crate::sinusoid::{SignalSpec, SinChainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinusoidRun {
    pub signal: SignalSpec,
    pub chain: SinChainConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugerRun {
    pub signal: AugerSignalSpec,
    pub chain: AugerChainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Boxes `T` (one `(lo, hi)` per coordinate) for expected counts.
    pub intervals: Vec<Vec<(f64, f64)>>,
    pub coord: usize,
    pub bins: usize,
    pub grid_points: usize,
    /// Draws from the fitted model for sinusoid reconstruction.
    pub reconstruction_draws: usize,
    pub include_outliers: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            intervals: Vec::new(),
            coord: 0,
            bins: 100,
            grid_points: 512,
            reconstruction_draws: 1000,
            include_outliers: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sinusoid: SinusoidRun,
    pub auger: AugerRun,
    pub fit: FitConfig,
    pub report: ReportConfig,
    pub montecarlo: HarnessConfig,
}

impl RunConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON config: {e}")))
        } else {
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid TOML config: {e}")))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

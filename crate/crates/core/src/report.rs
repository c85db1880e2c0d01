//! Machine-readable analysis reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::{AffineBoundReport, ConstantBoundReport, NonlinearBoundReport, SemiglobalReport};
use crate::config::AnalysisConfig;
use crate::error::Result;
use crate::lyapunov::{LevelSetReport, QuadraticCertificate};
use crate::search::RestartLog;
use crate::system::{AffineCap, SystemConfig};
use crate::transform::{PolishReport, TransformCandidate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        ToolInfo {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub best_restart: usize,
    pub success: bool,
    pub log: Vec<RestartLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSection {
    pub certificate: QuadraticCertificate,
    pub level: LevelSetReport,
}

/// Which construction produced a reported quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub quantity: String,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub stage: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: ToolInfo,
    pub config: AnalysisConfig,
    pub system: SystemConfig,
    pub transform_source: String,
    pub transform: Option<TransformCandidate>,
    pub polish: Option<PolishReport>,
    pub search: Option<SearchSummary>,
    pub caps: Option<Vec<AffineCap>>,
    pub constant: Option<ConstantBoundReport>,
    pub nonlinear: Option<NonlinearBoundReport>,
    pub affine: Option<AffineBoundReport>,
    pub semiglobal: Option<SemiglobalReport>,
    pub lyapunov: Option<LyapunovSection>,
    /// Componentwise minimum of the original-coordinate boxes above.
    pub combined_box: Option<Vec<f64>>,
    pub claims: Vec<Claim>,
    pub diagnostics: Vec<Diagnostic>,
    pub exit_code: i32,
    /// Wall-clock seconds per stage; omitted unless requested so that
    /// reports of identical runs are byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl ReportDocument {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn claim(&mut self, quantity: &str, method: &str) {
        self.claims.push(Claim {
            quantity: quantity.into(),
            method: method.into(),
        });
    }
}

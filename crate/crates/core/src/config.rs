//! Analysis configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::IterOptions;
use crate::error::{Error, Result};
use crate::linalg::{json, CMat};
use crate::lyapunov::LevelSearchConfig;
use crate::metzler::Tolerances;
use crate::search::SearchConfig;
use crate::system::{SwitchingSystem, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Constant,
    Nonlinear,
    Affine,
    Lyapunov,
    #[default]
    All,
}

impl Pipeline {
    pub fn runs(self, stage: Pipeline) -> bool {
        self == Pipeline::All || self == stage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Path(String),
    Inline(SystemConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VSource {
    /// JSON file holding the matrix, bare or as `{"V": ...}`.
    File(String),
    Inline(serde_json::Value),
    Search(SearchConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstantOptions {
    /// `|V⁻¹x(0)|` bound; zero if absent.
    pub initial_box: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonlinearOptions {
    /// Offset of the strict super-solution iteration; `𝟙` if absent.
    pub alpha: Option<Vec<f64>>,
    /// Direction of the initial-condition margin; `𝟙` if absent.
    pub c: Option<Vec<f64>>,
    pub probes: usize,
}

impl Default for NonlinearOptions {
    fn default() -> Self {
        NonlinearOptions {
            alpha: None,
            c: None,
            probes: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffineOptions {
    /// Iterate the exact bounds from `b̃`.
    pub refine: bool,
    /// Initial-history box for the semi-global bound.
    pub semiglobal_xi: Option<Vec<f64>>,
    /// Caps of expression bounds are validated on `[0, cap_box]ⁿ`.
    pub cap_box: f64,
    pub cap_samples: usize,
}

impl Default for AffineOptions {
    fn default() -> Self {
        AffineOptions {
            refine: true,
            semiglobal_xi: None,
            cap_box: 100.0,
            cap_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovOptions {
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    pub p: Option<serde_json::Value>,
    /// Diagonal `D` for `P = Re{(V⁻¹)* D V⁻¹}` when `P` is absent.
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
    pub level: LevelSearchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub system: SystemSource,
    #[serde(default)]
    pub pipeline: Pipeline,
    pub v_source: VSource,
    /// Nelder–Mead budget for polishing a supplied `V` inside the rounding
    /// box of its printed digits; no polishing if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polish_evals: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub iter: IterOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub constant: ConstantOptions,
    #[serde(default)]
    pub nonlinear: NonlinearOptions,
    #[serde(default)]
    pub affine: AffineOptions,
    #[serde(default)]
    pub lyapunov: LyapunovOptions,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Stream indices for [`crate::sim::derive_seed`]: every random consumer
/// draws from `derive_seed(config.seed, stream)`.
pub const SEED_SEARCH: usize = 0;
pub const SEED_LEVEL: usize = 1;
pub const SEED_CAPS: usize = 2;

impl AnalysisConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: AnalysisConfig = serde_json::from_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Referenced files exist and the chosen pipeline has what it needs.
    pub fn validate(&self) -> Result<()> {
        let files = [
            match &self.system {
                SystemSource::Path(p) => Some(p),
                SystemSource::Inline(_) => None,
            },
            match &self.v_source {
                VSource::File(p) => Some(p),
                _ => None,
            },
        ];
        for f in files.into_iter().flatten() {
            if !self.resolve(f).is_file() {
                return Err(Error::Config(format!("file not found: {f}")));
            }
        }
        if self.pipeline == Pipeline::Lyapunov && self.lyapunov.p.is_none() && self.lyapunov.d.is_none() {
            return Err(Error::Config("the lyapunov pipeline needs P or D".into()));
        }
        Ok(())
    }

    pub fn system_config(&self) -> Result<SystemConfig> {
        match &self.system {
            SystemSource::Inline(c) => Ok(c.clone()),
            SystemSource::Path(p) => {
                let path = self.resolve(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }

    pub fn load_system(&self) -> Result<SwitchingSystem> {
        SwitchingSystem::from_config(&self.system_config()?)
    }

    /// The supplied `V`, or `None` when it is to be searched for.
    pub fn supplied_v(&self) -> Result<Option<CMat>> {
        let value = match &self.v_source {
            VSource::Search(_) => return Ok(None),
            VSource::Inline(v) => v.clone(),
            VSource::File(p) => {
                let path = self.resolve(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text)?
            }
        };
        let value = match value {
            serde_json::Value::Object(mut m) => m
                .remove("V")
                .ok_or_else(|| Error::Config("V file object has no \"V\" key".into()))?,
            other => other,
        };
        Ok(Some(json::cmat_from_value(&value)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: AnalysisConfig = serde_json::from_str(
            r#"{"system": {"n": 1, "modes": [{"A": [[-1]], "H": [[1]], "bound": {"type": "constant", "w": [1]}}]},
                "v_source": {"inline": [[1]]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.pipeline, Pipeline::All);
        assert_eq!(cfg.nonlinear.probes, 8);
        assert!(cfg.affine.refine);
        assert_eq!(cfg.supplied_v().unwrap().unwrap()[(0, 0)].re, 1.0);
        assert_eq!(cfg.load_system().unwrap().n, 1);
    }

    #[test]
    fn missing_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"system": "nope.json", "v_source": {"search": {}}}"#).unwrap();
        assert!(matches!(AnalysisConfig::load(&path), Err(Error::Config(_))));
    }
}

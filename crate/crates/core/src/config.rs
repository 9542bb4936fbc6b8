//! Versioned JSON experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::desk::{GridSpec, InsightConfig, ModelSpec, TrainConfig};
use crate::error::{EobError, Result};
use crate::processes::HybridSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<HybridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub insight: Option<InsightConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            process: None,
            grid: None,
            model: None,
            train: None,
            insight: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| EobError::invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EobError::invalid("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(EobError::invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if let Some(p) = &self.process {
            p.ar.validate()?;
            if let Some(d) = &p.det {
                d.validate()?;
            }
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if let Some(m) = &self.model {
            m.validate()?;
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_and_unknown_fields() {
        let ok = ExperimentConfig::from_json(r#"{"schema_version":1,"grid":{"ssnr_x_values":[32,64],"horizons":[8]}}"#)
            .unwrap();
        assert_eq!(ok.grid.unwrap().ssnr_x_values, vec![32.0, 64.0]);
        assert!(ExperimentConfig::from_json(r#"{"schema_version":2}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1,"extra":0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1,"train":{"lr":-1}}"#).is_err());
        let round = serde_json::to_string(&ExperimentConfig::default()).unwrap();
        assert_eq!(ExperimentConfig::from_json(&round).unwrap(), ExperimentConfig::default());
    }
}

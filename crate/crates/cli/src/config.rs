//! Optional TOML/JSON configuration file; command-line flags take precedence.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hippo::{Criterion, HippoConfig, LambdaAxis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    /// Penalty, per-stage solver blocks and path saturation cap.
    #[serde(flatten)]
    pub hippo: HippoConfig,
    pub grid: GridConfig,
    pub criterion: Option<Criterion>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub ci_level: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub lambda_s: Option<LambdaAxis>,
    pub lambda_t: Option<LambdaAxis>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
            || text.trim_start().starts_with('{');
        let cfg: FileConfig = if is_json {
            serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON config", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("{}: invalid TOML config", path.display()))?
        };
        cfg.hippo.validate().with_context(|| format!("{}: invalid solver settings", path.display()))?;
        if let Some(it) = cfg.iterations {
            if !(1..=2).contains(&it) {
                bail!("{}: iterations must be 1 or 2, got {it}", path.display());
            }
        }
        Ok(cfg)
    }
}

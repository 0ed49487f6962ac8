//! Training configuration files (TOML).
//!
//! Keys mirror [`TrainingConfig`] field names. An optional `preset` key
//! names a bundled configuration that the remaining keys override.
//! Unknown keys are rejected.

use crate::error::{Error, Result};
use crate::pipeline::TrainingConfig;

pub fn parse_config(text: &str) -> Result<TrainingConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Format(e.message().to_string()))?;
    let base = match table.remove("preset") {
        None => TrainingConfig::default(),
        Some(toml::Value::String(name)) => {
            TrainingConfig::named(&name).ok_or_else(|| Error::Format(format!("unknown preset {name:?}")))?
        }
        Some(_) => return Err(Error::Format("preset must be a string".into())),
    };
    let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Format(e.to_string()))?;
    merged.extend(table);
    let cfg: TrainingConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Format(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn config_to_string(cfg: &TrainingConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Format(e.to_string()))
}

//! Versioned JSON experiment configs.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{LabError, LabResult};

pub const CONFIG_VERSION: u64 = 1;

pub trait ExperimentConfig: Serialize + DeserializeOwned + Default + Clone {
    /// Checks ranges and cross-field constraints after parsing.
    fn validate(&self) -> Result<(), String>;
    fn seeds(&self) -> Vec<u64>;
    fn set_seeds(&mut self, seeds: Vec<u64>);
}

/// Parses `{"version": 1, ...}`; missing keys take their defaults, unknown
/// keys are rejected.
pub fn parse<T: ExperimentConfig>(text: &str) -> LabResult<T> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| LabError::Config("config must be a JSON object".into()))?;
    match obj.remove("version") {
        Some(Value::Number(n)) if n.as_u64() == Some(CONFIG_VERSION) => {}
        Some(other) => {
            return Err(LabError::Config(format!(
                "unsupported config version {other}, expected {CONFIG_VERSION}"
            )))
        }
        None => return Err(LabError::Config("missing \"version\" key".into())),
    }
    let cfg: T = serde_json::from_value(value).map_err(|e| LabError::Config(e.to_string()))?;
    cfg.validate().map_err(LabError::Config)?;
    Ok(cfg)
}

/// The config as JSON, version key included.
pub fn to_value<T: ExperimentConfig>(cfg: &T) -> Value {
    let mut value = serde_json::to_value(cfg).expect("configs serialize");
    if let Some(obj) = value.as_object_mut() {
        obj.insert("version".into(), Value::from(CONFIG_VERSION));
    }
    value
}

pub fn to_pretty_json<T: ExperimentConfig>(cfg: &T) -> String {
    serde_json::to_string_pretty(&to_value(cfg)).expect("configs serialize")
}

pub(crate) fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub(crate) fn check_seeds(seeds: &[u64]) -> Result<(), String> {
    check(!seeds.is_empty(), || "seeds must not be empty".into())
}

pub(crate) fn check_positive(name: &str, x: f64) -> Result<(), String> {
    check(x > 0.0 && x.is_finite(), || format!("{name} must be positive, got {x}"))
}

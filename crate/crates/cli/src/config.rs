//! Layered configuration: flags > environment > file > built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use groundkit_core::grpo::TrainConfig;
use groundkit_core::llm::LlmEndpointConfig;
use serde::{Deserialize, Serialize};

pub const ENV_IOU_REFINE: &str = "GROUNDKIT_IOU_REFINE";
pub const ENV_OUT_DIR: &str = "GROUNDKIT_OUT";

#[derive(Debug, thiserror::Error)]
#[error("config error in {layer} layer, key {key:?}: {message}")]
pub struct ConfigError {
    pub layer: &'static str,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(layer: &'static str, key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { layer, key: key.into(), message: message.into() }
    }
}

/// Fully resolved application configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppConfig {
    /// IoU threshold for ground-truth refinement.
    pub iou_refine: f64,
    pub out_dir: PathBuf,
    /// Named endpoint profiles. Credentials live in the environment variable
    /// each profile names, never in the file itself.
    pub endpoints: BTreeMap<String, LlmEndpointConfig>,
    /// Named training presets; `toy` and `paper` are built in.
    pub presets: BTreeMap<String, TrainConfig>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            iou_refine: 0.5,
            out_dir: PathBuf::from("runs"),
            endpoints: BTreeMap::new(),
            presets: BTreeMap::from([
                ("toy".to_string(), TrainConfig::toy()),
                ("paper".to_string(), TrainConfig::paper()),
            ]),
        }
    }
}

/// The subset of keys settable from a file; absent keys fall through to the
/// lower layers.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    iou_refine: Option<f64>,
    out_dir: Option<PathBuf>,
    #[serde(default)]
    endpoints: BTreeMap<String, LlmEndpointConfig>,
    #[serde(default)]
    presets: BTreeMap<String, TrainConfig>,
}

/// Command-line overrides, the highest-precedence layer.
#[derive(Debug, Default, Clone)]
pub struct FlagOverrides {
    pub iou_refine: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

// Configs must never carry credentials; only api_key_env names are allowed.
fn reject_literal_keys(value: &toml::Value, path: &str) -> Result<(), ConfigError> {
    match value {
        toml::Value::Table(table) => {
            for (k, v) in table {
                let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                if k == "api_key" || k == "api_token" || k == "secret_key" {
                    return Err(ConfigError::new(
                        "file",
                        child,
                        "literal API credentials are not allowed in config files; set api_key_env to the name of an environment variable instead",
                    ));
                }
                reject_literal_keys(v, &child)?;
            }
            Ok(())
        }
        toml::Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                reject_literal_keys(v, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn parse_env_f64(env: &impl Fn(&str) -> Option<String>, key: &str) -> Result<Option<f64>, ConfigError> {
    match env(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<f64>()
            .map(Some)
            .map_err(|e| ConfigError::new("env", key, e.to_string())),
    }
}

/// Resolves the configuration from all four layers.
///
/// `env` abstracts environment lookup so tests can inject values without
/// mutating the process environment.
pub fn load_config(
    file: Option<&Path>,
    env: &impl Fn(&str) -> Option<String>,
    flags: &FlagOverrides,
) -> Result<AppConfig, ConfigError> {
    let mut config = AppConfig::default();

    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("file", path.display().to_string(), e.to_string()))?;
        let raw: toml::Value = text
            .parse()
            .map_err(|e: toml::de::Error| {
                ConfigError::new("file", path.display().to_string(), e.to_string())
            })?;
        reject_literal_keys(&raw, "")?;
        let file_config: FileConfig = raw
            .try_into()
            .map_err(|e: toml::de::Error| {
                ConfigError::new("file", path.display().to_string(), e.to_string())
            })?;
        if let Some(v) = file_config.iou_refine {
            config.iou_refine = v;
        }
        if let Some(v) = file_config.out_dir {
            config.out_dir = v;
        }
        config.endpoints.extend(file_config.endpoints);
        config.presets.extend(file_config.presets);
    }

    if let Some(v) = parse_env_f64(env, ENV_IOU_REFINE)? {
        config.iou_refine = v;
    }
    if let Some(v) = env(ENV_OUT_DIR) {
        config.out_dir = PathBuf::from(v);
    }

    if let Some(v) = flags.iou_refine {
        config.iou_refine = v;
    }
    if let Some(v) = &flags.out_dir {
        config.out_dir = v.clone();
    }

    if !(config.iou_refine > 0.0 && config.iou_refine <= 1.0) {
        return Err(ConfigError::new(
            "resolved",
            "iou_refine",
            format!("must be in (0, 1], got {}", config.iou_refine),
        ));
    }
    for (name, ep) in &config.endpoints {
        ep.validate().map_err(|e| {
            ConfigError::new("resolved", format!("endpoints.{name}"), e.to_string())
        })?;
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn defaults_without_any_source() {
        let config = load_config(None, &no_env, &FlagOverrides::default()).unwrap();
        assert_eq!(config.iou_refine, 0.5);
        assert!(config.presets.contains_key("toy"));
        assert!(config.presets.contains_key("paper"));
        assert_eq!(config.presets["paper"].lr_rl, 1e-6);
        assert_eq!(config.presets["paper"].g_rollouts, 8);
        assert_eq!(config.presets["paper"].batch_size, 256);
    }

    #[test]
    fn precedence_file_env_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "iou_refine = 0.3\n").unwrap();

        let from_file = load_config(Some(&path), &no_env, &FlagOverrides::default()).unwrap();
        assert_eq!(from_file.iou_refine, 0.3);

        let env = |key: &str| (key == ENV_IOU_REFINE).then(|| "0.6".to_string());
        let from_env = load_config(Some(&path), &env, &FlagOverrides::default()).unwrap();
        assert_eq!(from_env.iou_refine, 0.6);

        let flags = FlagOverrides { iou_refine: Some(0.9), out_dir: None };
        let from_flag = load_config(Some(&path), &env, &flags).unwrap();
        assert_eq!(from_flag.iou_refine, 0.9);
    }

    #[test]
    fn literal_api_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "[endpoints.main]\nbase_url = \"http://x\"\nmodel_name = \"m\"\napi_key = \"sk-123\"\napi_key_env = \"KEY\"\ntimeout = 30.0\nmax_retries = 1\ntemperature = 0.0\n",
        )
        .unwrap();
        let err = load_config(Some(&path), &no_env, &FlagOverrides::default()).unwrap_err();
        assert_eq!(err.layer, "file");
        assert_eq!(err.key, "endpoints.main.api_key");
        assert!(err.message.contains("api_key_env"));
    }

    #[test]
    fn error_names_key_and_layer() {
        let env = |key: &str| (key == ENV_IOU_REFINE).then(|| "not a number".to_string());
        let err = load_config(None, &env, &FlagOverrides::default()).unwrap_err();
        assert_eq!(err.layer, "env");
        assert_eq!(err.key, ENV_IOU_REFINE);

        let flags = FlagOverrides { iou_refine: Some(1.5), out_dir: None };
        let err = load_config(None, &no_env, &flags).unwrap_err();
        assert_eq!(err.key, "iou_refine");
    }

    #[test]
    fn file_endpoint_profiles_are_loaded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "[endpoints.main]\nbase_url = \"http://localhost:9/v1\"\nmodel_name = \"m\"\napi_key_env = \"MAIN_KEY\"\ntimeout = 30.0\nmax_retries = 2\ntemperature = 0.0\n",
        )
        .unwrap();
        let config = load_config(Some(&path), &no_env, &FlagOverrides::default()).unwrap();
        assert_eq!(config.endpoints["main"].api_key_env, "MAIN_KEY");
    }
}

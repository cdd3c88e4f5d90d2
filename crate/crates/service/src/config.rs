use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::ServiceError;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_HOST: &str = "127.0.0.1";
pub const DEFAULT_DECODER_TIMEOUT_MS: u64 = 10_000;

/// Files backing one served dataset.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub cloud_path: PathBuf,
    pub atlas_path: PathBuf,
    #[serde(default)]
    pub spectrum_path: Option<PathBuf>,
    #[serde(default)]
    pub layout_path: Option<PathBuf>,
    /// Synthesis history is appended here as JSON lines when set.
    #[serde(default)]
    pub history_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Served under `/api`.
    pub default: DatasetConfig,
    /// Served under `/{name}/api`.
    pub datasets: BTreeMap<String, DatasetConfig>,
    pub decoder_url: Option<String>,
    pub decoder_timeout_ms: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    host: Option<String>,
    port: Option<u16>,
    cloud_path: Option<PathBuf>,
    atlas_path: Option<PathBuf>,
    spectrum_path: Option<PathBuf>,
    layout_path: Option<PathBuf>,
    history_path: Option<PathBuf>,
    decoder_url: Option<String>,
    decoder_timeout_ms: Option<u64>,
    #[serde(default)]
    datasets: BTreeMap<String, DatasetConfig>,
}

impl ServiceConfig {
    pub fn new(default: DatasetConfig) -> Self {
        ServiceConfig {
            host: DEFAULT_HOST.to_string(),
            port: DEFAULT_PORT,
            default,
            datasets: BTreeMap::new(),
            decoder_url: None,
            decoder_timeout_ms: DEFAULT_DECODER_TIMEOUT_MS,
        }
    }

    /// Parses TOML. Relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ServiceError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        let missing = |key: &str| ServiceError::Config(format!("missing required key `{key}`"));
        let mut default = DatasetConfig {
            cloud_path: raw.cloud_path.ok_or_else(|| missing("cloud_path"))?,
            atlas_path: raw.atlas_path.ok_or_else(|| missing("atlas_path"))?,
            spectrum_path: raw.spectrum_path,
            layout_path: raw.layout_path,
            history_path: raw.history_path,
        };
        default.rebase(base);
        let mut datasets = raw.datasets;
        for (name, ds) in datasets.iter_mut() {
            if name.is_empty() || name == "api" || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(ServiceError::Config(format!("invalid dataset name `{name}`")));
            }
            ds.rebase(base);
        }
        Ok(ServiceConfig {
            host: raw.host.unwrap_or_else(|| DEFAULT_HOST.to_string()),
            port: raw.port.unwrap_or(DEFAULT_PORT),
            default,
            datasets,
            decoder_url: raw.decoder_url,
            decoder_timeout_ms: raw.decoder_timeout_ms.unwrap_or(DEFAULT_DECODER_TIMEOUT_MS),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

impl DatasetConfig {
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.cloud_path);
        fix(&mut self.atlas_path);
        self.spectrum_path.as_mut().map(fix);
        self.layout_path.as_mut().map(fix);
        self.history_path.as_mut().map(fix);
    }
}

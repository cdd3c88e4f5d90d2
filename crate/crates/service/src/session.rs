use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use latmap_core::atlas::chart_to_ambient;
use latmap_core::io::{load_point_cloud, Format};
use latmap_core::layout::LayoutFile;
use latmap_core::msvd::{parse_spectrum_csv, DimClass};
use latmap_core::{Atlas, ChartCoords, PointCloud};
use serde::{Deserialize, Serialize};

use crate::config::DatasetConfig;
use crate::{ServiceError, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub vector_id: u64,
    pub timestamp_ms: u64,
    pub coords: ChartCoords,
    pub vector: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct SpectrumBody {
    pub schema_version: u32,
    pub cloud_checksum: String,
    pub radii: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub classes: Vec<DimClass>,
    pub optimal_range: Option<[f64; 2]>,
}

/// Everything served for one dataset. Only the history changes after load.
pub struct Session {
    pub cloud: PointCloud,
    pub checksum: String,
    pub atlas: Atlas,
    pub atlas_bytes: Vec<u8>,
    pub layout_bytes: Option<Vec<u8>>,
    pub spectrum_bytes: Option<Vec<u8>>,
    history: Mutex<Vec<HistoryEntry>>,
    history_log: Option<PathBuf>,
}

fn read(path: &Path) -> Result<Vec<u8>, ServiceError> {
    std::fs::read(path).map_err(|e| ServiceError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_err(path: &Path) -> impl FnOnce(latmap_core::Error) -> ServiceError + '_ {
    move |source| ServiceError::Load {
        path: path.to_path_buf(),
        source,
    }
}

impl Session {
    pub fn load(cfg: &DatasetConfig) -> Result<Self, ServiceError> {
        let cloud = load_point_cloud(&cfg.cloud_path, Format::from_path(&cfg.cloud_path)).map_err(load_err(&cfg.cloud_path))?;
        let checksum = cloud.checksum();

        let atlas_bytes = read(&cfg.atlas_path)?;
        let atlas_text = String::from_utf8_lossy(&atlas_bytes);
        let atlas = Atlas::from_json(&atlas_text).map_err(load_err(&cfg.atlas_path))?;
        if atlas.cloud_checksum != checksum {
            return Err(ServiceError::Mismatch(format!(
                "{} was built from a different cloud than {}",
                cfg.atlas_path.display(),
                cfg.cloud_path.display()
            )));
        }

        let layout_bytes = match &cfg.layout_path {
            Some(path) => {
                let bytes = read(path)?;
                let file = LayoutFile::from_json(&String::from_utf8_lossy(&bytes)).map_err(load_err(path))?;
                if file.cloud_checksum != checksum {
                    return Err(ServiceError::Mismatch(format!("{} belongs to a different cloud", path.display())));
                }
                Some(bytes)
            }
            None => match &atlas.layout {
                Some(layout) => Some(
                    LayoutFile::new(checksum.clone(), layout.clone())
                        .to_json()
                        .map_err(load_err(&cfg.atlas_path))?
                        .into_bytes(),
                ),
                None => None,
            },
        };

        let spectrum_bytes = match &cfg.spectrum_path {
            Some(path) => {
                let csv = parse_spectrum_csv(&String::from_utf8_lossy(&read(path)?)).map_err(load_err(path))?;
                if csv.cloud_checksum.as_deref().is_some_and(|c| c != checksum) {
                    return Err(ServiceError::Mismatch(format!("{} belongs to a different cloud", path.display())));
                }
                let body = SpectrumBody {
                    schema_version: SCHEMA_VERSION,
                    cloud_checksum: checksum.clone(),
                    radii: csv.radii,
                    sigma: csv.sigma,
                    classes: csv.classes,
                    optimal_range: csv.optimal_range,
                };
                Some(serde_json::to_vec(&body).expect("spectrum serializes"))
            }
            None => None,
        };

        Ok(Session {
            cloud,
            checksum,
            atlas,
            atlas_bytes,
            layout_bytes,
            spectrum_bytes,
            history: Mutex::new(Vec::new()),
            history_log: cfg.history_path.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.cloud.dim()
    }

    /// Synthesizes and records a vector; the history lock serializes ids.
    pub fn synthesize(&self, coords: ChartCoords) -> Result<HistoryEntry, SynthesisError> {
        let chart = self.atlas.chart(coords.chart_id).ok_or(SynthesisError::UnknownChart(coords.chart_id))?;
        let vector = chart_to_ambient(chart, &coords.coeffs).map_err(|e| SynthesisError::Invalid(e.to_string()))?;
        let mut history = self.history.lock().unwrap();
        let entry = HistoryEntry {
            vector_id: history.len() as u64,
            timestamp_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
            coords,
            vector,
        };
        if let Some(path) = &self.history_log {
            let line = serde_json::to_string(&entry).expect("history entry serializes");
            let appended = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{line}"));
            if let Err(e) = appended {
                log::warn!("cannot append to history log {}: {e}", path.display());
            }
        }
        history.push(entry.clone());
        Ok(entry)
    }

    pub fn history(&self) -> Vec<HistoryEntry> {
        self.history.lock().unwrap().clone()
    }

    pub fn history_vector(&self, id: u64) -> Option<Vec<f64>> {
        self.history.lock().unwrap().get(id as usize).map(|e| e.vector.clone())
    }
}

#[derive(Debug)]
pub enum SynthesisError {
    UnknownChart(usize),
    Invalid(String),
}

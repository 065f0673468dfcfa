//! File formats and the on-disk campaign runner.
//!
//! Tables are comma-separated text whose first line is a `# format_version=…`
//! comment; structured documents are JSON (models, estimates, plants, dataset
//! metadata) or TOML (campaign configs), each carrying a `format_version` field.
//! Floats are written with 17 significant digits so that reads are exact.

mod config;
mod dataset_file;
mod documents;
mod runner;
mod surface;
mod table;

use std::path::Path;

pub use config::{
    load_config, CampaignConfig, InitialSection, PlantSection, RandomPlantSection, SelectionSection, StrategyKind,
};
pub use dataset_file::{
    import_external_datasets, metadata_path, read_dataset, write_dataset, DatasetMetadata, ImportedDataset,
};
pub use documents::{load_estimate, load_model, load_plant, save_estimate, save_model, save_plant};
pub use runner::{run_campaign, write_campaign_record, write_timings, CampaignSummary, RunOverrides};
pub use surface::{export_surface, SurfaceKind};

use crate::error::{Error, Result};

/// Major.minor of every file this crate writes. Loaders accept any minor of the
/// same major.
pub const FORMAT_VERSION: &str = "1.0";
pub const FORMAT_MAJOR: u32 = 1;

pub(crate) fn check_version(path: &Path, found: &str) -> Result<()> {
    let major = found.split('.').next().and_then(|m| m.trim().parse::<u32>().ok());
    if major == Some(FORMAT_MAJOR) {
        Ok(())
    } else {
        Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: found.to_string(),
            supported: FORMAT_MAJOR,
        })
    }
}

/// 17 significant digits, exponent notation, no locale.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

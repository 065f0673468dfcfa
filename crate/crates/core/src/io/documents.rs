//! JSON documents: fitted models, local estimates and synthetic plants.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr_lpv::{GprLpvModel, ModelDocument};
use crate::plant::SyntheticLpvPlant;
use crate::varx::LocalModelEstimate;

use super::{check_version, read_text, write_text, FORMAT_VERSION};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateDocument {
    format_version: String,
    estimate: LocalModelEstimate,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantDocument {
    format_version: String,
    plant: SyntheticLpvPlant,
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads `format_version` before the full parse so that a newer major version
/// is reported as such rather than as a schema mismatch.
fn peek_version(path: &Path, text: &str) -> Result<()> {
    #[derive(Deserialize)]
    struct Peek {
        format_version: Option<String>,
    }
    let peek: Peek = parse_json(path, text)?;
    let found = peek.format_version.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        message: "missing `format_version`".into(),
    })?;
    check_version(path, &found)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("document serializes")
}

pub fn save_model(path: &Path, model: &GprLpvModel) -> Result<()> {
    write_text(path, &to_json(&model.to_document()))
}

pub fn load_model(path: &Path) -> Result<GprLpvModel> {
    let text = read_text(path)?;
    peek_version(path, &text)?;
    let doc: ModelDocument = parse_json(path, &text)?;
    GprLpvModel::from_document(&doc)
}

pub fn save_estimate(path: &Path, estimate: &LocalModelEstimate) -> Result<()> {
    let doc = EstimateDocument {
        format_version: FORMAT_VERSION.to_string(),
        estimate: estimate.clone(),
    };
    write_text(path, &to_json(&doc))
}

pub fn load_estimate(path: &Path) -> Result<LocalModelEstimate> {
    let text = read_text(path)?;
    peek_version(path, &text)?;
    let doc: EstimateDocument = parse_json(path, &text)?;
    doc.estimate.validate()?;
    Ok(doc.estimate)
}

pub fn save_plant(path: &Path, plant: &SyntheticLpvPlant) -> Result<()> {
    let doc = PlantDocument {
        format_version: FORMAT_VERSION.to_string(),
        plant: plant.clone(),
    };
    write_text(path, &to_json(&doc))
}

pub fn load_plant(path: &Path) -> Result<SyntheticLpvPlant> {
    let text = read_text(path)?;
    peek_version(path, &text)?;
    let doc: PlantDocument = parse_json(path, &text)?;
    doc.plant.validate()?;
    Ok(doc.plant)
}

//! Experiment datasets: a `k,x1..xn,u1..um` table plus a `.meta.json` sidecar
//! carrying the operating point.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OperatingPoint;
use crate::varx::{check_persistency_of_excitation, ExcitationCheck, TimeSeriesData};

use super::table::{parse_f64, read_table, write_table};
use super::{check_version, format_f64, read_text, write_text, FORMAT_VERSION};

const KIND: &str = "dataset";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMetadata {
    pub format_version: String,
    pub operating_point: OperatingPoint,
    pub sample_count: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    /// Seed of the simulated experiment, if it was simulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Free-form description of the physical units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

impl DatasetMetadata {
    pub fn for_data(data: &TimeSeriesData, seed: Option<u64>) -> Self {
        DatasetMetadata {
            format_version: FORMAT_VERSION.to_string(),
            operating_point: data.operating_point().clone(),
            sample_count: data.sample_count(),
            state_dim: data.state_dim(),
            input_dim: data.input_dim(),
            seed,
            units: None,
        }
    }
}

/// `runs/exp_003.csv` → `runs/exp_003.meta.json`.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn header(n: usize, m: usize) -> Vec<String> {
    std::iter::once("k".to_string())
        .chain((1..=n).map(|i| format!("x{i}")))
        .chain((1..=m).map(|i| format!("u{i}")))
        .collect()
}

/// Writes the table and its sidecar.
pub fn write_dataset(path: &Path, data: &TimeSeriesData, seed: Option<u64>) -> Result<()> {
    let (n, m) = (data.state_dim(), data.input_dim());
    let rows: Vec<Vec<String>> = (0..data.sample_count())
        .map(|k| {
            std::iter::once(k.to_string())
                .chain(data.states().row(k).iter().map(|v| format_f64(*v)))
                .chain(data.inputs().row(k).iter().map(|v| format_f64(*v)))
                .collect()
        })
        .collect();
    write_table(path, KIND, &header(n, m), &rows)?;
    let meta = DatasetMetadata::for_data(data, seed);
    write_text(
        &metadata_path(path),
        &serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )
}

fn read_metadata(path: &Path) -> Result<DatasetMetadata> {
    let text = read_text(path)?;
    let meta: DatasetMetadata = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    check_version(path, &meta.format_version)?;
    Ok(meta)
}

/// Reads a dataset and its sidecar. `theta` overrides (or stands in for a
/// missing) sidecar operating point.
pub fn read_dataset(path: &Path, theta: Option<&OperatingPoint>) -> Result<(TimeSeriesData, Option<DatasetMetadata>)> {
    let meta_path = metadata_path(path);
    let meta = if meta_path.exists() {
        Some(read_metadata(&meta_path)?)
    } else if theta.is_none() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!(
                "no metadata file {} and no operating point given",
                meta_path.display()
            ),
        });
    } else {
        None
    };

    let table = read_table(path, KIND)?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let n = table.header.iter().filter(|h| h.starts_with('x')).count();
    let m = table.header.iter().filter(|h| h.starts_with('u')).count();
    if let Some(meta) = &meta {
        if (meta.state_dim, meta.input_dim) != (n, m) {
            return Err(parse_err(format!(
                "header has {n} state and {m} input columns but the metadata declares {} and {}",
                meta.state_dim, meta.input_dim
            )));
        }
    }
    let expected_header = header(n, m);
    if table.header != expected_header {
        return Err(parse_err(format!(
            "expected header `{}`, found `{}`",
            expected_header.join(","),
            table.header.join(",")
        )));
    }
    let columns = expected_header.len();

    let t = table.rows.len();
    let mut states = DMatrix::zeros(t, n);
    let mut inputs = DMatrix::zeros(t, m);
    for (k, (line, fields)) in table.rows.iter().enumerate() {
        if fields.len() != columns {
            return Err(parse_err(format!(
                "line {line}: expected {columns} columns, found {}",
                fields.len()
            )));
        }
        if fields[0].trim() != k.to_string() {
            return Err(parse_err(format!("line {line}: expected sample index {k}, found `{}`", fields[0])));
        }
        for j in 0..n {
            states[(k, j)] = parse_f64(path, *line, &expected_header[1 + j], &fields[1 + j])?;
        }
        for j in 0..m {
            inputs[(k, j)] = parse_f64(path, *line, &expected_header[1 + n + j], &fields[1 + n + j])?;
        }
    }
    if let Some(meta) = &meta {
        if meta.sample_count != t {
            return Err(parse_err(format!(
                "metadata declares {} samples, table has {t}",
                meta.sample_count
            )));
        }
    }
    let operating_point = theta
        .cloned()
        .or_else(|| meta.as_ref().map(|m| m.operating_point.clone()))
        .expect("checked above");
    let data = TimeSeriesData::new(states, inputs, operating_point).map_err(|e| match e {
        Error::InvalidArgument(message) | Error::NonFinite(message) => parse_err(message),
        other => other,
    })?;
    Ok((data, meta))
}

#[derive(Clone, Debug)]
pub struct ImportedDataset {
    pub path: PathBuf,
    pub data: TimeSeriesData,
    pub excitation: ExcitationCheck,
}

impl ImportedDataset {
    /// The regressors are too poorly excited for a reliable estimate.
    pub fn excitation_warning(&self) -> bool {
        !self.excitation.ok
    }
}

/// Loads datasets recorded elsewhere, checking each for persistency of
/// excitation. Poorly excited files are logged and flagged, not rejected.
pub fn import_external_datasets(paths: &[PathBuf]) -> Result<Vec<ImportedDataset>> {
    paths
        .iter()
        .map(|path| {
            let (data, _) = read_dataset(path, None)?;
            let excitation = check_persistency_of_excitation(&data);
            if !excitation.ok {
                log::warn!(
                    "{}: inputs are not persistently exciting (smallest normalized singular value {:.3e})",
                    path.display(),
                    excitation.smallest_singular_value
                );
            }
            Ok(ImportedDataset {
                path: path.clone(),
                data,
                excitation,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TimeSeriesData {
        let t = 12;
        let states = DMatrix::from_fn(t, 2, |k, j| ((k * 7 + j * 3) as f64).sin() / 3.0);
        let inputs = DMatrix::from_fn(t, 1, |k, _| ((k * 5) as f64).cos() * 0.1);
        TimeSeriesData::new(states, inputs, OperatingPoint::new(vec![0.25, 0.5])).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let data = sample();
        write_dataset(&path, &data, Some(9)).unwrap();
        let (back, meta) = read_dataset(&path, None).unwrap();
        assert_eq!(back, data);
        assert_eq!(meta.unwrap().seed, Some(9));
    }

    #[test]
    fn wrong_column_count_names_expected_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &sample(), None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let cut = lines[4].rfind(',').unwrap();
        lines[4].truncate(cut);
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = read_dataset(&path, None).unwrap_err().to_string();
        assert!(err.contains("line 5") && err.contains("expected 4 columns"), "{err}");
    }

    #[test]
    fn bad_number_and_missing_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &sample(), None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen("\n3,", "\n3,abc", 1);
        std::fs::write(&path, text).unwrap();
        let err = read_dataset(&path, None).unwrap_err().to_string();
        assert!(err.contains("x1") && err.contains("abc"), "{err}");

        std::fs::remove_file(metadata_path(&path)).unwrap();
        assert!(matches!(read_dataset(&path, None), Err(Error::Parse { .. })));
    }

    #[test]
    fn newer_major_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &sample(), None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen("format_version=1.0", "format_version=2.0", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(read_dataset(&path, None), Err(Error::UnsupportedVersion { .. })));
    }

    #[test]
    fn import_flags_poor_excitation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.csv");
        let t = 20;
        let data = TimeSeriesData::new(
            DMatrix::from_fn(t, 1, |k, _| (k as f64).sin()),
            DMatrix::zeros(t, 1),
            OperatingPoint::new(vec![0.0]),
        )
        .unwrap();
        write_dataset(&path, &data, None).unwrap();
        let imported = import_external_datasets(&[path]).unwrap();
        assert!(imported[0].excitation_warning());
    }
}

//! TOML campaign configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::{SelectionConfig, SelectionStrategy};
use crate::error::{Error, Result};
use crate::geometry::{OperatingBox, OperatingPoint};
use crate::gpr_lpv::HyperConfig;
use crate::plant::{ExcitationConfig, NoiseKind, RandomPlantConfig};

use super::check_version;

const DEFAULT_VOLUME_RESOLUTION: usize = 50;
const DEFAULT_SELECTION_RESOLUTION: usize = 41;
const MAX_GRID_NODES: usize = 4_000_000;

/// A full campaign description. Relative paths are resolved against the
/// directory of the config file by [`load_config`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub format_version: String,
    pub seed: u64,
    /// Experiments selected after the initial data.
    pub budget: usize,
    pub experiment_length: usize,
    /// Midpoint-rule cells per dimension; 50 per dimension if absent.
    #[serde(default)]
    pub volume_resolution: Option<Vec<usize>>,
    /// Worker threads; all cores if absent.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub operating_box: OperatingBox,
    pub plant: PlantSection,
    #[serde(default)]
    pub excitation: ExcitationConfig,
    pub initial: InitialSection,
    pub model: HyperConfig,
    #[serde(default)]
    pub selection: SelectionSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("campaign_output")
}

/// Exactly one of `random` and `spec_path`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(default)]
    pub random: Option<RandomPlantSection>,
    /// A plant JSON written by `save_plant`.
    #[serde(default)]
    pub spec_path: Option<PathBuf>,
    /// Output matrix `C`, kept as metadata; identification uses full state measurements.
    #[serde(default)]
    pub output_matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomPlantSection {
    pub seed: u64,
    pub state_dim: usize,
    pub input_dim: usize,
    pub stability_margin: f64,
    pub a_variation: f64,
    pub b_variation: f64,
    pub noise_std: f64,
    pub noise_kind: NoiseKind,
    pub noise_theta_gain: f64,
}

impl Default for RandomPlantSection {
    fn default() -> Self {
        let d = RandomPlantConfig::default();
        RandomPlantSection {
            seed: 0,
            state_dim: d.state_dim,
            input_dim: d.input_dim,
            stability_margin: d.stability_margin,
            a_variation: d.a_variation,
            b_variation: d.b_variation,
            noise_std: d.noise_std,
            noise_kind: d.noise_kind,
            noise_theta_gain: d.noise_theta_gain,
        }
    }
}

impl RandomPlantSection {
    pub fn to_config(&self, operating_box: OperatingBox) -> RandomPlantConfig {
        RandomPlantConfig {
            state_dim: self.state_dim,
            input_dim: self.input_dim,
            operating_box,
            stability_margin: self.stability_margin,
            a_variation: self.a_variation,
            b_variation: self.b_variation,
            noise_std: self.noise_std,
            noise_kind: self.noise_kind,
            noise_theta_gain: self.noise_theta_gain,
        }
    }
}

/// Exactly one of `grid` (simulated experiments at cell centres), `points`
/// (simulated experiments at explicit points) and `dataset_paths`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub dataset_paths: Option<Vec<PathBuf>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Greedy,
    Random,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    #[serde(default)]
    pub strategy: StrategyKind,
    /// 41 per dimension if absent.
    #[serde(default)]
    pub grid_resolution: Option<Vec<usize>>,
    #[serde(default)]
    pub refinement_steps: Option<usize>,
    #[serde(default)]
    pub refinement_shrink: Option<f64>,
    #[serde(default)]
    pub tie_tolerance: Option<f64>,
}

impl SelectionSection {
    pub fn to_config(&self, sched_dim: usize) -> SelectionConfig {
        let mut cfg = SelectionConfig::uniform(sched_dim, DEFAULT_SELECTION_RESOLUTION);
        if let Some(r) = &self.grid_resolution {
            cfg.grid_resolution = r.clone();
        }
        if let Some(s) = self.refinement_steps {
            cfg.refinement_steps = s;
        }
        if let Some(s) = self.refinement_shrink {
            cfg.refinement_shrink = s;
        }
        if let Some(t) = self.tie_tolerance {
            cfg.tie_tolerance = t;
        }
        cfg
    }
}

impl CampaignConfig {
    pub fn sched_dim(&self) -> usize {
        self.operating_box.dim()
    }

    pub fn volume_resolution(&self) -> Vec<usize> {
        self.volume_resolution
            .clone()
            .unwrap_or_else(|| vec![DEFAULT_VOLUME_RESOLUTION; self.sched_dim()])
    }

    pub fn strategy(&self) -> SelectionStrategy {
        match self.selection.strategy {
            StrategyKind::Greedy => SelectionStrategy::Greedy(self.selection.to_config(self.sched_dim())),
            StrategyKind::Random => SelectionStrategy::UniformRandom,
        }
    }

    pub fn initial_points(&self) -> Option<Vec<OperatingPoint>> {
        self.initial
            .points
            .as_ref()
            .map(|ps| ps.iter().map(|p| OperatingPoint::new(p.clone())).collect())
    }

    /// Joins every relative path with `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        if let Some(p) = &mut self.plant.spec_path {
            join(p);
        }
        if let Some(ps) = &mut self.initial.dataset_paths {
            ps.iter_mut().for_each(join);
        }
    }

    /// Range and consistency checks that TOML typing cannot express.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let d = self.sched_dim();
        let check_resolution = |name: &str, r: &[usize], min: usize| -> std::result::Result<(), String> {
            if r.len() != d {
                return Err(format!("`{name}` has {} entries, the operating box has {d} dimensions", r.len()));
            }
            if r.iter().any(|&k| k < min) {
                return Err(format!("`{name}` entries must be at least {min}"));
            }
            if r.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k)).is_none_or(|n| n > MAX_GRID_NODES) {
                return Err(format!("`{name}` has more than {MAX_GRID_NODES} nodes"));
            }
            Ok(())
        };

        if self.experiment_length < 4 {
            return Err("`experiment_length` must be at least 4".into());
        }
        if self.threads == Some(0) {
            return Err("`threads` must be at least 1".into());
        }
        check_resolution("volume_resolution", &self.volume_resolution(), 2)?;
        if self.model.length_scales.len() != d {
            return Err(format!(
                "`model.length_scales` has {} entries, the operating box has {d} dimensions",
                self.model.length_scales.len()
            ));
        }
        if self.model.length_scales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err("`model.length_scales` entries must be positive".into());
        }
        if let SelectionStrategy::Greedy(cfg) = self.strategy() {
            check_resolution("selection.grid_resolution", &cfg.grid_resolution, 2)?;
            cfg.validate(d).map_err(|e| e.to_string())?;
        }

        match (&self.plant.random, &self.plant.spec_path) {
            (Some(_), Some(_)) | (None, None) => {
                return Err("`[plant]` needs exactly one of `random` and `spec_path`".into())
            }
            (Some(r), None) => {
                if r.state_dim == 0 || r.input_dim == 0 {
                    return Err("`plant.random` dimensions must be positive".into());
                }
                if self.experiment_length < r.state_dim + r.input_dim + 2 {
                    return Err(format!(
                        "`experiment_length` must be at least n + m + 2 = {}",
                        r.state_dim + r.input_dim + 2
                    ));
                }
            }
            (None, Some(p)) => {
                if !p.exists() {
                    return Err(format!("plant file {} does not exist", p.display()));
                }
            }
        }
        if let Some(c) = &self.plant.output_matrix {
            if c.is_empty() || c.iter().any(|row| row.len() != c[0].len()) {
                return Err("`plant.output_matrix` must be a non-empty rectangular array".into());
            }
            if let Some(r) = &self.plant.random {
                if c[0].len() != r.state_dim {
                    return Err(format!("`plant.output_matrix` needs {} columns", r.state_dim));
                }
            }
        }

        let given = [
            self.initial.grid.is_some(),
            self.initial.points.is_some(),
            self.initial.dataset_paths.is_some(),
        ];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err("`[initial]` needs exactly one of `grid`, `points` and `dataset_paths`".into());
        }
        if let Some(g) = &self.initial.grid {
            check_resolution("initial.grid", g, 1)?;
        }
        if let Some(points) = self.initial_points() {
            if points.is_empty() {
                return Err("`initial.points` is empty".into());
            }
            for p in &points {
                self.operating_box
                    .check_contains(p)
                    .map_err(|e| format!("`initial.points`: {e}"))?;
            }
        }
        if let Some(paths) = &self.initial.dataset_paths {
            if paths.is_empty() {
                return Err("`initial.dataset_paths` is empty".into());
            }
            if let Some(missing) = paths.iter().find(|p| !p.exists()) {
                return Err(format!("dataset {} does not exist", missing.display()));
            }
        }
        Ok(())
    }
}

/// Parses, version-checks, resolves paths and validates a campaign config.
/// Every failure is an [`Error::Config`] (or [`Error::UnsupportedVersion`]);
/// syntax errors carry the line and column.
pub fn load_config(path: &Path) -> Result<CampaignConfig> {
    let config_err = |message: String| Error::Config {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| config_err(e.to_string()))?;
    let mut cfg: CampaignConfig = toml::from_str(&text).map_err(|e| config_err(e.to_string()))?;
    check_version(path, &cfg.format_version)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.resolve_paths(base);
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
format_version = "1.0"
seed = 7
budget = 3
experiment_length = 200

[operating_box]
lower = [0.0, 0.0]
upper = [1.0, 1.0]

[plant.random]
seed = 1
state_dim = 2
input_dim = 1

[initial]
grid = [2, 2]

[model]
length_scales = [0.05, 0.05]
"#;

    fn write(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn minimal_config_loads_with_defaults() {
        let (dir, path) = write(MINIMAL);
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.volume_resolution(), vec![50, 50]);
        assert_eq!(cfg.output_dir, dir.path().join("campaign_output"));
        assert_eq!(cfg.selection.to_config(2).grid_resolution, vec![41, 41]);
        assert_eq!(cfg.model.prior_a_diagonal, 0.8);
    }

    #[test]
    fn syntax_error_reports_line_and_column() {
        let (_dir, path) = write(&MINIMAL.replace("budget = 3", "budget = = 3"));
        let err = load_config(&path).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        let msg = err.to_string();
        assert!(msg.contains("line 4") && msg.contains("column"), "{msg}");
    }

    #[test]
    fn unknown_key_and_range_errors() {
        let (_d1, p1) = write(&MINIMAL.replace("budget = 3", "budget = 3\nbugdet = 4"));
        assert!(load_config(&p1).unwrap_err().to_string().contains("bugdet"));

        let (_d2, p2) = write(&MINIMAL.replace("[0.05, 0.05]", "[0.05]"));
        assert!(matches!(load_config(&p2), Err(Error::Config { .. })));

        let (_d3, p3) = write(&MINIMAL.replace("upper = [1.0, 1.0]", "upper = [1.0, -1.0]"));
        assert!(matches!(load_config(&p3), Err(Error::Config { .. })));

        let (_d4, p4) = write(&MINIMAL.replace("grid = [2, 2]", "dataset_paths = [\"nope.csv\"]"));
        assert!(load_config(&p4).unwrap_err().to_string().contains("nope.csv"));
    }

    #[test]
    fn future_version_rejected() {
        let (_dir, path) = write(&MINIMAL.replace("\"1.0\"", "\"2.0\""));
        assert!(matches!(load_config(&path), Err(Error::UnsupportedVersion { .. })));
    }
}

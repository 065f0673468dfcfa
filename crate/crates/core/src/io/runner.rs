//! Running a configured campaign end to end and writing its artifacts.

use std::path::{Path, PathBuf};

use crate::active::{
    experiment_seeds, greedy_campaign, initial_experiment_seeds, initial_experiments, CampaignRecord, CampaignSettings,
};
use crate::error::{Error, Result};
use crate::gpr_lpv::GprLpvModel;
use crate::plant::{Plant, SimulatedPlant, SyntheticLpvPlant};
use crate::varx::TimeSeriesData;

use super::config::{load_config, CampaignConfig};
use super::dataset_file::{import_external_datasets, write_dataset};
use super::documents::{load_plant, save_estimate, save_model, save_plant};
use super::table::write_table;
use super::format_f64;

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub struct CampaignSummary {
    pub output_dir: PathBuf,
    pub record: CampaignRecord,
    pub model: GprLpvModel,
    /// Every dataset written, initial ones first.
    pub dataset_files: Vec<PathBuf>,
}

/// `iteration,theta_1..theta_d,g,volume`; iteration 0 has empty θ and `g`.
pub fn write_campaign_record(path: &Path, record: &CampaignRecord, sched_dim: usize) -> Result<()> {
    let header: Vec<String> = std::iter::once("iteration".to_string())
        .chain((1..=sched_dim).map(|i| format!("theta_{i}")))
        .chain(["g".to_string(), "volume".to_string()])
        .collect();
    let rows: Vec<Vec<String>> = record
        .steps
        .iter()
        .map(|s| {
            let theta: Vec<String> = match &s.theta {
                Some(t) => t.coords().iter().map(|c| format_f64(*c)).collect(),
                None => vec![String::new(); sched_dim],
            };
            std::iter::once(s.iteration.to_string())
                .chain(theta)
                .chain([s.g_value.map(format_f64).unwrap_or_default(), format_f64(s.volume)])
                .collect()
        })
        .collect();
    write_table(path, "campaign_record", &header, &rows)
}

/// Wall-clock seconds per iteration, kept apart from the reproducible record.
pub fn write_timings(path: &Path, record: &CampaignRecord) -> Result<()> {
    let header = vec!["iteration".to_string(), "seconds".to_string()];
    let rows: Vec<Vec<String>> = record
        .steps
        .iter()
        .map(|s| vec![s.iteration.to_string(), format!("{:.6}", s.duration.as_secs_f64())])
        .collect();
    write_table(path, "timings", &header, &rows)
}

fn config_error(path: &Path, message: String) -> Error {
    Error::Config {
        path: path.to_path_buf(),
        message,
    }
}

fn build_plant(cfg: &CampaignConfig, config_path: &Path) -> Result<SyntheticLpvPlant> {
    let plant = match (&cfg.plant.random, &cfg.plant.spec_path) {
        (Some(r), _) => SyntheticLpvPlant::random(&r.to_config(cfg.operating_box.clone()), r.seed)
            .map_err(|e| config_error(config_path, format!("cannot draw the random plant: {e}")))?,
        (None, Some(p)) => load_plant(p)?,
        (None, None) => unreachable!("validated by load_config"),
    };
    if plant.operating_box() != &cfg.operating_box {
        return Err(config_error(
            config_path,
            "the plant's operating box differs from `operating_box`".into(),
        ));
    }
    if let Some(c) = &cfg.plant.output_matrix {
        if c[0].len() != plant.state_dim() {
            return Err(config_error(
                config_path,
                format!("`plant.output_matrix` needs {} columns", plant.state_dim()),
            ));
        }
    }
    if cfg.experiment_length < plant.state_dim() + plant.input_dim() + 2 {
        return Err(config_error(
            config_path,
            format!(
                "`experiment_length` must be at least n + m + 2 = {}",
                plant.state_dim() + plant.input_dim() + 2
            ),
        ));
    }
    Ok(plant)
}

/// Initial datasets and, for simulated ones, their seeds.
fn initial_data(cfg: &CampaignConfig, plant: &SimulatedPlant, config_path: &Path) -> Result<Vec<(TimeSeriesData, Option<u64>)>> {
    let points = match (&cfg.initial.grid, cfg.initial_points()) {
        (Some(grid), _) => Some(cfg.operating_box.cell_centers(grid)?),
        (None, Some(points)) => Some(points),
        (None, None) => None,
    };
    if let Some(points) = points {
        let data = initial_experiments(plant, &points, cfg.experiment_length, cfg.seed).map_err(|e| e.at_iteration(0))?;
        let seeds = initial_experiment_seeds(cfg.seed, points.len());
        return Ok(data.into_iter().zip(seeds.into_iter().map(Some)).collect());
    }
    let paths = cfg.initial.dataset_paths.as_deref().unwrap_or_default();
    let imported = import_external_datasets(paths)?;
    for d in &imported {
        if (d.data.state_dim(), d.data.input_dim()) != (plant.state_dim(), plant.input_dim()) {
            return Err(config_error(
                config_path,
                format!(
                    "{} has {} states and {} inputs, the plant has {} and {}",
                    d.path.display(),
                    d.data.state_dim(),
                    d.data.input_dim(),
                    plant.state_dim(),
                    plant.input_dim()
                ),
            ));
        }
        cfg.operating_box
            .check_contains(d.data.operating_point())
            .map_err(|e| config_error(config_path, format!("{}: {e}", d.path.display())))?;
    }
    Ok(imported.into_iter().map(|d| (d.data, None)).collect())
}

fn run(cfg: &CampaignConfig, config_path: &Path, config_text: &str) -> Result<CampaignSummary> {
    let plant = SimulatedPlant::new(build_plant(cfg, config_path)?, cfg.excitation.clone());
    let initial = initial_data(cfg, &plant, config_path)?;
    let initial_data: Vec<TimeSeriesData> = initial.iter().map(|(d, _)| d.clone()).collect();
    let settings = CampaignSettings {
        operating_box: cfg.operating_box.clone(),
        hyper: cfg.model.clone(),
        strategy: cfg.strategy(),
        budget: cfg.budget,
        experiment_length: cfg.experiment_length,
        volume_resolution: cfg.volume_resolution(),
        seed: cfg.seed,
    };
    log::info!(
        "campaign: {} initial experiments, budget {}, output {}",
        initial_data.len(),
        cfg.budget,
        cfg.output_dir.display()
    );
    let outcome = greedy_campaign(&initial_data, &plant, &settings)?;

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    super::write_text(&out.join("config.toml"), config_text)?;
    save_plant(&out.join("plant.json"), &plant.plant)?;
    let mut dataset_files = Vec::new();
    for (i, ((data, seed), estimate)) in initial.iter().zip(&outcome.initial_estimates).enumerate() {
        let path = out.join("datasets").join(format!("initial_{i:03}.csv"));
        write_dataset(&path, data, *seed)?;
        save_estimate(&out.join("estimates").join(format!("initial_{i:03}.json")), estimate)?;
        dataset_files.push(path);
    }
    let seeds = experiment_seeds(cfg.seed, cfg.budget);
    for (k, (data, estimate)) in outcome.new_datasets.iter().zip(&outcome.new_estimates).enumerate() {
        let path = out.join("datasets").join(format!("exp_{:03}.csv", k + 1));
        write_dataset(&path, data, Some(seeds[k]))?;
        save_estimate(&out.join("estimates").join(format!("exp_{:03}.json", k + 1)), estimate)?;
        dataset_files.push(path);
    }
    write_campaign_record(&out.join("record.csv"), &outcome.record, cfg.sched_dim())?;
    write_timings(&out.join("timings.csv"), &outcome.record)?;
    save_model(&out.join("model.json"), &outcome.model)?;

    Ok(CampaignSummary {
        output_dir: out.clone(),
        record: outcome.record,
        model: outcome.model,
        dataset_files,
    })
}

/// Loads the config, runs the campaign and writes `record.csv`, `timings.csv`,
/// `model.json`, `plant.json`, a copy of the config, and every dataset and
/// local estimate into the output directory.
pub fn run_campaign(config_path: &Path, overrides: &RunOverrides) -> Result<CampaignSummary> {
    let mut cfg = load_config(config_path)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &overrides.output_dir {
        cfg.output_dir = dir.clone();
    }
    let config_text = std::fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    match overrides.threads.or(cfg.threads) {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| config_error(config_path, format!("cannot start {threads} worker threads: {e}")))?;
            pool.install(|| run(&cfg, config_path, &config_text))
        }
        None => run(&cfg, config_path, &config_text),
    }
}

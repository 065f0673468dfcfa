//! Operating-point selection by maximizing the uncertainty criterion, the
//! uncertainty volume `∫_Θ g_M(θ) dθ`, and greedy sequential campaigns.

use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OperatingBox, OperatingPoint};
use crate::gpr_lpv::{GprLpvModel, HyperConfig};
use crate::plant::Plant;
use crate::varx::{identify_local_model, LocalModelEstimate, TimeSeriesData};

/// Golden-section iterations per coordinate sweep; shrinks the bracket by 0.618³⁰ ≈ 5e-7.
const GOLDEN_ITERATIONS: usize = 30;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    /// Coarse scan nodes per dimension, boundaries included.
    pub grid_resolution: Vec<usize>,
    /// Coordinate-wise golden-section sweeps around the best grid node.
    #[serde(default = "default_refinement_steps")]
    pub refinement_steps: usize,
    /// Search window scale factor applied after each sweep.
    #[serde(default = "default_refinement_shrink")]
    pub refinement_shrink: f64,
    /// Grid values within this of the maximum count as ties.
    #[serde(default)]
    pub tie_tolerance: f64,
}

fn default_refinement_steps() -> usize {
    3
}

fn default_refinement_shrink() -> f64 {
    0.5
}

impl SelectionConfig {
    pub fn uniform(sched_dim: usize, resolution: usize) -> Self {
        SelectionConfig {
            grid_resolution: vec![resolution; sched_dim],
            refinement_steps: default_refinement_steps(),
            refinement_shrink: default_refinement_shrink(),
            tie_tolerance: 0.0,
        }
    }

    pub fn validate(&self, sched_dim: usize) -> Result<()> {
        if self.grid_resolution.len() != sched_dim {
            return Err(Error::DimensionMismatch {
                context: "selection grid resolution",
                expected: sched_dim,
                found: self.grid_resolution.len(),
            });
        }
        if self.grid_resolution.iter().any(|r| *r < 2) {
            return Err(Error::InvalidArgument("selection grid needs at least 2 nodes per dimension".into()));
        }
        if !(self.refinement_shrink > 0.0 && self.refinement_shrink < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "refinement shrink must lie in (0, 1), got {}",
                self.refinement_shrink
            )));
        }
        if !(self.tie_tolerance.is_finite() && self.tie_tolerance >= 0.0) {
            return Err(Error::InvalidArgument("tie tolerance must be non-negative".into()));
        }
        Ok(())
    }

    /// Coarse grid spacing per dimension: the size of one refinement cell.
    pub fn cell_size(&self, operating_box: &OperatingBox) -> Vec<f64> {
        operating_box
            .widths()
            .iter()
            .zip(&self.grid_resolution)
            .map(|(w, r)| w / (*r - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub theta: OperatingPoint,
    pub g_value: f64,
}

/// Evaluates `g_M` at every point, in parallel, preserving order.
pub fn evaluate_criterion(model: &GprLpvModel, points: &[OperatingPoint]) -> Result<Vec<f64>> {
    points
        .par_iter()
        .map(|p| model.uncertainty_criterion(p))
        .collect()
}

/// `θ_{m+1} = argmax_{θ ∈ Θ} g_M(θ)` by a coarse grid scan followed by
/// coordinate-wise golden-section polishing. Among grid nodes within
/// `tie_tolerance` of the best, the lexicographically smallest one is polished.
pub fn select_next_operating_point(model: &GprLpvModel, cfg: &SelectionConfig) -> Result<Selection> {
    let bx = model.operating_box();
    cfg.validate(bx.dim())?;
    let grid = bx.grid(&cfg.grid_resolution)?;
    let values = evaluate_criterion(model, &grid)?;
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = values
        .iter()
        .position(|v| *v >= best - cfg.tie_tolerance)
        .expect("grid is non-empty");

    let mut x = grid[start].coords().to_vec();
    let mut gx = values[start];
    let mut window = cfg.cell_size(bx);
    for _ in 0..cfg.refinement_steps {
        for i in 0..x.len() {
            let lo = (x[i] - window[i]).max(bx.lower()[i]);
            let hi = (x[i] + window[i]).min(bx.upper()[i]);
            let (t, gt) = golden_section_max(lo, hi, |t| {
                let mut y = x.clone();
                y[i] = t;
                model.uncertainty_criterion(&OperatingPoint::new(y))
            })?;
            if gt > gx {
                x[i] = t;
                gx = gt;
            }
        }
        window.iter_mut().for_each(|w| *w *= cfg.refinement_shrink);
    }
    Ok(Selection {
        theta: OperatingPoint::new(x),
        g_value: gx,
    })
}

/// Best point seen while golden-section searching `[lo, hi]`, endpoints included.
fn golden_section_max<F>(lo: f64, hi: f64, f: F) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut best = (lo, f(lo)?);
    let mut consider = |t: f64, v: f64| {
        if v > best.1 {
            best = (t, v);
        }
    };
    let fhi = f(hi)?;
    consider(hi, fhi);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    consider(c, fc);
    consider(d, fd);
    for _ in 0..GOLDEN_ITERATIONS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
            consider(c, fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
            consider(d, fd);
        }
    }
    Ok(best)
}

/// Midpoint-rule quadrature of `g_M` over the operating box.
pub fn uncertainty_volume(model: &GprLpvModel, resolution: &[usize]) -> Result<f64> {
    let bx = model.operating_box();
    if resolution.len() != bx.dim() || resolution.iter().any(|r| *r < 2) {
        return Err(Error::InvalidArgument(format!(
            "volume resolution must have {} entries of at least 2, got {resolution:?}",
            bx.dim()
        )));
    }
    let centers = bx.cell_centers(resolution)?;
    let values = evaluate_criterion(model, &centers)?;
    let cell: f64 = bx.volume() / centers.len() as f64;
    Ok(values.iter().sum::<f64>() * cell)
}

/// How each campaign iteration picks its operating point.
#[derive(Clone, Debug, PartialEq)]
pub enum SelectionStrategy {
    /// Maximize the uncertainty criterion.
    Greedy(SelectionConfig),
    /// Uniform random point in the box; the baseline active selection is compared against.
    UniformRandom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignSettings {
    pub operating_box: OperatingBox,
    pub hyper: HyperConfig,
    pub strategy: SelectionStrategy,
    pub budget: usize,
    pub experiment_length: usize,
    pub volume_resolution: Vec<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct CampaignStep {
    pub iteration: usize,
    /// `None` for iteration 0 (initial data only).
    pub theta: Option<OperatingPoint>,
    /// Criterion value at the selected point, before the experiment was appended.
    pub g_value: Option<f64>,
    /// Uncertainty volume after this iteration's append.
    pub volume: f64,
    pub duration: Duration,
}

/// Iteration 0 plus one row per appended experiment.
#[derive(Clone, Debug, Default)]
pub struct CampaignRecord {
    pub steps: Vec<CampaignStep>,
}

impl CampaignRecord {
    pub fn volumes(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.volume).collect()
    }

    pub fn selected_points(&self) -> Vec<&OperatingPoint> {
        self.steps.iter().filter_map(|s| s.theta.as_ref()).collect()
    }

    /// Bitwise equality of everything except wall-clock durations.
    pub fn same_results(&self, other: &CampaignRecord) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.steps.len() == other.steps.len()
            && self.steps.iter().zip(&other.steps).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.theta.as_ref().map(|t| bits(t.coords())) == b.theta.as_ref().map(|t| bits(t.coords()))
                    && a.g_value.map(f64::to_bits) == b.g_value.map(f64::to_bits)
                    && a.volume.to_bits() == b.volume.to_bits()
            })
    }
}

#[derive(Clone, Debug)]
pub struct CampaignOutcome {
    pub model: GprLpvModel,
    pub record: CampaignRecord,
    pub initial_estimates: Vec<LocalModelEstimate>,
    /// Datasets of the experiments run by the campaign, in order.
    pub new_datasets: Vec<TimeSeriesData>,
    pub new_estimates: Vec<LocalModelEstimate>,
}

/// Seed for the `k`-th experiment the campaign runs (zero-based).
pub fn experiment_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// Identify local models for the initial data, build the GPR-LPV model, then
/// `budget` times: select a point, run an experiment there, identify it, append.
pub fn greedy_campaign(initial: &[TimeSeriesData], plant: &dyn Plant, settings: &CampaignSettings) -> Result<CampaignOutcome> {
    if let SelectionStrategy::Greedy(cfg) = &settings.strategy {
        cfg.validate(settings.operating_box.dim())?;
    }
    let started = Instant::now();
    let initial_estimates = initial
        .iter()
        .map(identify_local_model)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_iteration(0))?;
    let mut model = GprLpvModel::build(&initial_estimates, settings.operating_box.clone(), settings.hyper.clone())
        .map_err(|e| e.at_iteration(0))?;
    let volume = uncertainty_volume(&model, &settings.volume_resolution).map_err(|e| e.at_iteration(0))?;
    let mut record = CampaignRecord {
        steps: vec![CampaignStep {
            iteration: 0,
            theta: None,
            g_value: None,
            volume,
            duration: started.elapsed(),
        }],
    };

    let seeds = experiment_seeds(settings.seed, settings.budget);
    let mut random = ChaCha8Rng::seed_from_u64(settings.seed);
    random.set_stream(1);
    let mut new_datasets = Vec::with_capacity(settings.budget);
    let mut new_estimates = Vec::with_capacity(settings.budget);

    for (k, seed) in seeds.into_iter().enumerate() {
        let iteration = k + 1;
        let started = Instant::now();
        let mut step = || -> Result<(GprLpvModel, Selection, TimeSeriesData, LocalModelEstimate, f64)> {
            let selection = match &settings.strategy {
                SelectionStrategy::Greedy(cfg) => select_next_operating_point(&model, cfg)?,
                SelectionStrategy::UniformRandom => {
                    let bx = &settings.operating_box;
                    let theta = OperatingPoint::new(
                        bx.lower()
                            .iter()
                            .zip(bx.upper())
                            .map(|(l, u)| random.random_range(*l..=*u))
                            .collect(),
                    );
                    let g_value = model.uncertainty_criterion(&theta)?;
                    Selection { theta, g_value }
                }
            };
            let data = plant.run_experiment(&selection.theta, settings.experiment_length, seed)?;
            let estimate = identify_local_model(&data)?;
            let next = model.append_experiment(&estimate)?;
            let volume = uncertainty_volume(&next, &settings.volume_resolution)?;
            Ok((next, selection, data, estimate, volume))
        };
        let (next, selection, data, estimate, volume) = step().map_err(|e| e.at_iteration(iteration))?;
        log::info!(
            "iteration {iteration}: θ = {}, g = {:.6e}, volume = {volume:.6e}",
            selection.theta,
            selection.g_value
        );
        model = next;
        new_datasets.push(data);
        new_estimates.push(estimate);
        record.steps.push(CampaignStep {
            iteration,
            theta: Some(selection.theta),
            g_value: Some(selection.g_value),
            volume,
            duration: started.elapsed(),
        });
    }

    Ok(CampaignOutcome {
        model,
        record,
        initial_estimates,
        new_datasets,
        new_estimates,
    })
}

/// Runs one experiment at each cell centre of a `grid` partition of the box
/// (e.g. `[4, 4]` for a 16-point interior grid).
pub fn initial_grid_experiments(plant: &dyn Plant, grid: &[usize], length: usize, seed: u64) -> Result<Vec<TimeSeriesData>> {
    let points = plant.operating_box().cell_centers(grid)?;
    initial_experiments(plant, &points, length, seed)
}

/// Seeds of the experiments run by [`initial_experiments`].
pub fn initial_experiment_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// Runs one experiment at each of `points`, in order.
pub fn initial_experiments(plant: &dyn Plant, points: &[OperatingPoint], length: usize, seed: u64) -> Result<Vec<TimeSeriesData>> {
    for p in points {
        plant.operating_box().check_contains(p)?;
    }
    points
        .iter()
        .zip(initial_experiment_seeds(seed, points.len()))
        .map(|(theta, s)| plant.run_experiment(theta, length, s))
        .collect()
}

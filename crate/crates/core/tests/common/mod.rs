#![allow(dead_code)]

use lpv_active::active::initial_grid_experiments;
use lpv_active::gpr_lpv::{GprLpvModel, HyperConfig};
use lpv_active::plant::{ExcitationConfig, Plant, RandomPlantConfig, SimulatedPlant, SyntheticLpvPlant};
use lpv_active::varx::{identify_local_model, LocalModelEstimate, TimeSeriesData};

pub const EXPERIMENT_LENGTH: usize = 6000;
pub const LENGTH_SCALE: f64 = 0.04;

/// Four states, three inputs, unit square, default noise.
pub fn reference_plant(seed: u64) -> SimulatedPlant {
    SimulatedPlant::new(
        SyntheticLpvPlant::random(&RandomPlantConfig::default(), seed).unwrap(),
        ExcitationConfig::default(),
    )
}

pub fn hyper() -> HyperConfig {
    HyperConfig::new(vec![LENGTH_SCALE, LENGTH_SCALE])
}

/// Sixteen experiments at the cell centres of a 4×4 partition.
pub fn initial_data(plant: &SimulatedPlant, seed: u64) -> Vec<TimeSeriesData> {
    initial_grid_experiments(plant, &[4, 4], EXPERIMENT_LENGTH, seed).unwrap()
}

pub fn reference_model(seed: u64) -> (SimulatedPlant, Vec<LocalModelEstimate>, GprLpvModel) {
    let plant = reference_plant(seed);
    let estimates: Vec<_> = initial_data(&plant, seed)
        .iter()
        .map(|d| identify_local_model(d).unwrap())
        .collect();
    let model = GprLpvModel::build(&estimates, plant.operating_box().clone(), hyper()).unwrap();
    (plant, estimates, model)
}

//! Greedy versus uniform-random selection on random synthetic plants.
//!
//! ```text
//! cargo run --release --example compare_strategies -- [pairs] [length_scale]
//! ```

use lpv_active::active::{greedy_campaign, initial_grid_experiments, CampaignSettings, SelectionConfig, SelectionStrategy};
use lpv_active::gpr_lpv::HyperConfig;
use lpv_active::plant::{ExcitationConfig, Plant, RandomPlantConfig, SimulatedPlant, SyntheticLpvPlant};

fn main() -> lpv_active::Result<()> {
    let mut args = std::env::args().skip(1);
    let pairs: u64 = args.next().map_or(5, |s| s.parse().expect("pairs must be an integer"));
    let ls: f64 = args.next().map_or(0.04, |s| s.parse().expect("length scale must be a number"));

    let mut wins = 0;
    for seed in 0..pairs {
        let plant = SimulatedPlant::new(
            SyntheticLpvPlant::random(&RandomPlantConfig::default(), seed)?,
            ExcitationConfig::default(),
        );
        let initial = initial_grid_experiments(&plant, &[4, 4], 6000, seed)?;
        let settings = |strategy| CampaignSettings {
            operating_box: plant.operating_box().clone(),
            hyper: HyperConfig::new(vec![ls, ls]),
            strategy,
            budget: 19,
            experiment_length: 6000,
            volume_resolution: vec![50, 50],
            seed: seed + 100,
        };
        let active = greedy_campaign(&initial, &plant, &settings(SelectionStrategy::Greedy(SelectionConfig::uniform(2, 41))))?;
        let random = greedy_campaign(&initial, &plant, &settings(SelectionStrategy::UniformRandom))?;
        let (va, vr) = (active.record.volumes(), random.record.volumes());
        let (fa, fr) = (va[va.len() - 1], vr[vr.len() - 1]);
        if fa <= fr {
            wins += 1;
        }
        println!("plant {seed}: initial {:.4e}  greedy {fa:.4e}  random {fr:.4e}", va[0]);
    }
    println!("greedy ended with the smaller volume in {wins} of {pairs} pairs");
    Ok(())
}

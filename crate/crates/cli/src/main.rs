use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lpv_active::active::{select_next_operating_point, uncertainty_volume, SelectionConfig};
use lpv_active::gpr_lpv::{ElementId, GprLpvModel, HyperConfig};
use lpv_active::io::{
    export_surface, load_estimate, load_model, load_plant, read_dataset, run_campaign, save_estimate, save_model,
    save_plant, write_dataset, RunOverrides, SurfaceKind,
};
use lpv_active::plant::{ExcitationConfig, Plant, RandomPlantConfig, SimulatedPlant, SyntheticLpvPlant};
use lpv_active::varx::{check_persistency_of_excitation, identify_local_model};
use lpv_active::{Error, OperatingBox, OperatingPoint};

/// Active experiment design for LPV system identification.
#[derive(Parser)]
#[command(name = "lpv-active", version)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random synthetic plant and save it as JSON.
    PlantDump(PlantDumpArgs),
    /// Run one experiment on a plant at a fixed operating point.
    Simulate(SimulateArgs),
    /// Least-squares estimate of the local model in a dataset.
    Identify(IdentifyArgs),
    /// Fit the GPR-LPV model to a set of local estimates.
    BuildModel(BuildModelArgs),
    /// Operating point with the largest summed posterior variance.
    SelectNext(SelectNextArgs),
    /// Integrated posterior variance over the operating box.
    Volume(VolumeArgs),
    /// Run a full campaign described by a TOML config.
    Campaign(CampaignArgs),
    /// Write the criterion (or one element's posterior) on a grid over a 2-D box.
    ExportSurface(ExportSurfaceArgs),
}

#[derive(Args)]
struct BoxArgs {
    /// Lower corner of the operating box (default: zeros).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lower: Option<Vec<f64>>,
    /// Upper corner of the operating box (default: ones).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    upper: Option<Vec<f64>>,
}

impl BoxArgs {
    fn resolve(&self, dim: usize) -> lpv_active::Result<OperatingBox> {
        OperatingBox::new(
            self.lower.clone().unwrap_or_else(|| vec![0.0; dim]),
            self.upper.clone().unwrap_or_else(|| vec![1.0; dim]),
        )
    }
}

#[derive(Args)]
struct PlantDumpArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    state_dim: usize,
    #[arg(long, default_value_t = 3)]
    input_dim: usize,
    /// Scheduling dimension, used when the box corners are not given.
    #[arg(long, default_value_t = 2)]
    sched_dim: usize,
    #[command(flatten)]
    bounds: BoxArgs,
    #[arg(long, default_value_t = 0.05)]
    noise_std: f64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Plant JSON written by `plant-dump`.
    #[arg(long)]
    plant: PathBuf,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    theta: Vec<f64>,
    #[arg(long, default_value_t = 6000)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-channel RMS of the multisine input.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long)]
    harmonics: Option<usize>,
    #[arg(long)]
    slew_limit: Option<f64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    data: PathBuf,
    /// Operating point, if the dataset has no metadata file.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    theta: Option<Vec<f64>>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildModelArgs {
    /// Estimate JSON files written by `identify`.
    #[arg(long, num_args = 1.., required = true)]
    estimates: Vec<PathBuf>,
    /// Diagonal of the kernel's Λ, one entry per scheduling coordinate.
    #[arg(long, value_delimiter = ',', required = true)]
    length_scales: Vec<f64>,
    /// Fixed prior standard deviation instead of the empirical-Bayes choice.
    #[arg(long)]
    signal_std: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    prior_a_diagonal: f64,
    #[command(flatten)]
    bounds: BoxArgs,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectNextArgs {
    #[arg(long)]
    model: PathBuf,
    /// Coarse grid nodes per dimension.
    #[arg(long, default_value_t = 41)]
    resolution: usize,
    #[arg(long, default_value_t = 3)]
    refinement_steps: usize,
}

#[derive(Args)]
struct VolumeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Midpoint-rule cells per dimension.
    #[arg(long, default_value_t = 50)]
    resolution: usize,
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExportSurfaceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 101)]
    resolution: usize,
    /// Export one element (e.g. `a11`, `b23`) instead of the criterion.
    #[arg(long)]
    element: Option<ElementId>,
    #[arg(long, short)]
    out: PathBuf,
}

fn print_json(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("json value serializes"));
}

fn plant_dump(args: &PlantDumpArgs) -> lpv_active::Result<()> {
    let dim = args.bounds.lower.as_ref().map_or(args.sched_dim, Vec::len);
    let cfg = RandomPlantConfig {
        state_dim: args.state_dim,
        input_dim: args.input_dim,
        operating_box: args.bounds.resolve(dim)?,
        noise_std: args.noise_std,
        ..RandomPlantConfig::default()
    };
    let plant = SyntheticLpvPlant::random(&cfg, args.seed)?;
    save_plant(&args.out, &plant)?;
    log::info!("wrote {}", args.out.display());
    Ok(())
}

fn simulate(args: &SimulateArgs) -> lpv_active::Result<()> {
    let plant = SimulatedPlant::new(
        load_plant(&args.plant)?,
        ExcitationConfig {
            amplitude: args.amplitude,
            harmonics: args.harmonics,
            slew_limit: args.slew_limit,
        },
    );
    let data = plant.run_experiment(&OperatingPoint::new(args.theta.clone()), args.length, args.seed)?;
    write_dataset(&args.out, &data, Some(args.seed))?;
    log::info!("wrote {} samples to {}", data.sample_count(), args.out.display());
    Ok(())
}

fn identify(args: &IdentifyArgs) -> lpv_active::Result<()> {
    let theta = args.theta.clone().map(OperatingPoint::new);
    let (data, _) = read_dataset(&args.data, theta.as_ref())?;
    let excitation = check_persistency_of_excitation(&data);
    let estimate = identify_local_model(&data)?;
    save_estimate(&args.out, &estimate)?;
    print_json(serde_json::json!({
        "operating_point": estimate.operating_point.coords(),
        "smallest_singular_value": excitation.smallest_singular_value,
        "total_variance": estimate.total_variance(),
    }));
    Ok(())
}

fn build_model(args: &BuildModelArgs) -> lpv_active::Result<()> {
    let estimates = args
        .estimates
        .iter()
        .map(|p| load_estimate(p))
        .collect::<lpv_active::Result<Vec<_>>>()?;
    let mut hyper = HyperConfig::new(args.length_scales.clone());
    hyper.prior_a_diagonal = args.prior_a_diagonal;
    if let Some(value) = args.signal_std {
        hyper.signal_std = lpv_active::gpr_lpv::SignalStdPolicy::Fixed { value };
    }
    let operating_box = args.bounds.resolve(args.length_scales.len())?;
    let model = GprLpvModel::build(&estimates, operating_box, hyper)?;
    save_model(&args.out, &model)?;
    log::info!("wrote {}", args.out.display());
    Ok(())
}

fn select_next(args: &SelectNextArgs) -> lpv_active::Result<()> {
    let model = load_model(&args.model)?;
    let mut cfg = SelectionConfig::uniform(model.sched_dim(), args.resolution);
    cfg.refinement_steps = args.refinement_steps;
    let selection = select_next_operating_point(&model, &cfg)?;
    print_json(serde_json::json!({
        "theta": selection.theta.coords(),
        "g": selection.g_value,
    }));
    Ok(())
}

fn volume(args: &VolumeArgs) -> lpv_active::Result<()> {
    let model = load_model(&args.model)?;
    let v = uncertainty_volume(&model, &vec![args.resolution; model.sched_dim()])?;
    print_json(serde_json::json!({ "volume": v }));
    Ok(())
}

fn campaign(args: &CampaignArgs, threads: Option<usize>) -> lpv_active::Result<()> {
    let overrides = RunOverrides {
        seed: args.seed,
        output_dir: args.output_dir.clone(),
        threads,
    };
    let summary = run_campaign(&args.config, &overrides)?;
    let volumes = summary.record.volumes();
    print_json(serde_json::json!({
        "output_dir": summary.output_dir,
        "experiments": summary.dataset_files.len(),
        "initial_volume": volumes.first(),
        "final_volume": volumes.last(),
    }));
    Ok(())
}

fn export(args: &ExportSurfaceArgs) -> lpv_active::Result<()> {
    let model = load_model(&args.model)?;
    let kind = args.element.map_or(SurfaceKind::Criterion, SurfaceKind::Element);
    export_surface(&model, kind, args.resolution, &args.out)?;
    log::info!("wrote {}", args.out.display());
    Ok(())
}

/// 2 for bad input (config, files, arguments), 3 for numerical failures.
fn exit_code(error: &Error) -> u8 {
    if error.is_numerical() {
        3
    } else {
        2
    }
}

fn run(cli: &Cli) -> lpv_active::Result<()> {
    match &cli.command {
        Command::PlantDump(a) => plant_dump(a),
        Command::Simulate(a) => simulate(a),
        Command::Identify(a) => identify(a),
        Command::BuildModel(a) => build_model(a),
        Command::SelectNext(a) => select_next(a),
        Command::Volume(a) => volume(a),
        Command::Campaign(a) => campaign(a, cli.threads),
        Command::ExportSurface(a) => export(a),
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), String> {
    if let Some(n) = threads {
        if n == 0 {
            return Err("--threads must be at least 1".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(message) = init_threads(cli.threads) {
        eprintln!("error: {message}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                if !e.to_string().contains(&s.to_string()) {
                    eprintln!("  caused by: {s}");
                }
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

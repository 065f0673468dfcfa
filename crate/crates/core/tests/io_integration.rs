use lpv_active::active::{select_next_operating_point, SelectionConfig};
use lpv_active::gpr_lpv::{ElementId, GprLpvModel, HyperConfig, ParameterMatrix, SignalStdPolicy};
use lpv_active::io::{
    export_surface, import_external_datasets, read_dataset, run_campaign, write_dataset, RunOverrides, SurfaceKind,
};
use lpv_active::plant::{ExcitationConfig, Plant, RandomPlantConfig, SimulatedPlant, SyntheticLpvPlant};
use lpv_active::varx::LocalModelEstimate;
use lpv_active::{Error, OperatingBox, OperatingPoint};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn surface_rows(path: &std::path::Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect()
}

fn estimate(theta: [f64; 2], a: f64, se: f64) -> LocalModelEstimate {
    LocalModelEstimate {
        a_hat: DMatrix::from_element(1, 1, a),
        b_hat: DMatrix::from_element(1, 1, 2.0 * a),
        a_se: DMatrix::from_element(1, 1, se),
        b_se: DMatrix::from_element(1, 1, se),
        residual_cov: DMatrix::identity(1, 1),
        operating_point: OperatingPoint::new(theta.to_vec()),
    }
}

#[test]
fn prior_only_surface_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let mut h = HyperConfig::new(vec![0.1, 0.1]);
    h.signal_std = SignalStdPolicy::Fixed { value: 0.5 };
    let model = GprLpvModel::prior_only(2, 2, OperatingBox::unit(2), h).unwrap();
    let path = dir.path().join("g.csv");
    export_surface(&model, SurfaceKind::Criterion, 9, &path).unwrap();
    let rows = surface_rows(&path);
    assert_eq!(rows.len(), 81);
    assert!(rows.iter().all(|r| r[2] == 8.0 * 0.25));
}

#[test]
fn surface_maximum_agrees_with_selection() {
    let dir = tempfile::tempdir().unwrap();
    let ests = [
        estimate([0.2, 0.3], 0.4, 0.05),
        estimate([0.7, 0.8], 0.5, 0.02),
        estimate([0.9, 0.1], 0.3, 0.1),
    ];
    let model = GprLpvModel::build(&ests, OperatingBox::unit(2), HyperConfig::new(vec![0.08, 0.08])).unwrap();
    let path = dir.path().join("g.csv");
    export_surface(&model, SurfaceKind::Criterion, 41, &path).unwrap();
    let grid_max = surface_rows(&path).iter().map(|r| r[2]).fold(f64::NEG_INFINITY, f64::max);
    let sel = select_next_operating_point(&model, &SelectionConfig::uniform(2, 41)).unwrap();
    assert!(sel.g_value >= grid_max - 1e-12 * grid_max, "{} < {grid_max}", sel.g_value);
}

#[test]
fn element_surface_reproduces_noise_free_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let ests = [estimate([0.0, 0.0], 0.4, 0.0), estimate([1.0, 1.0], 0.6, 0.0)];
    let mut h = HyperConfig::new(vec![0.2, 0.2]);
    h.signal_std = SignalStdPolicy::Fixed { value: 1.0 };
    let model = GprLpvModel::build(&ests, OperatingBox::unit(2), h).unwrap();
    let path = dir.path().join("a11.csv");
    let id = ElementId {
        matrix: ParameterMatrix::A,
        row: 0,
        col: 0,
    };
    export_surface(&model, SurfaceKind::Element(id), 3, &path).unwrap();
    let rows = surface_rows(&path);
    let corner = rows.iter().find(|r| r[0] == 1.0 && r[1] == 1.0).unwrap();
    assert!((corner[2] - 0.6).abs() < 1e-9 && corner[3] < 1e-9);
}

#[test]
fn surface_needs_two_dimensions() {
    let model = GprLpvModel::prior_only(1, 1, OperatingBox::unit(3), HyperConfig::new(vec![0.1; 3])).unwrap();
    let err = export_surface(&model, SurfaceKind::Criterion, 5, std::path::Path::new("unused.csv")).unwrap_err();
    assert!(matches!(err, Error::UnsupportedDimension(_)));
}

const SMALL_CONFIG: &str = r#"
format_version = "1.0"
seed = 3
budget = 0
experiment_length = 300
volume_resolution = [10, 10]

[operating_box]
lower = [0.0, 0.0]
upper = [1.0, 1.0]

[plant.random]
seed = 2
state_dim = 2
input_dim = 1

[initial]
grid = [2, 2]

[model]
length_scales = [0.05, 0.05]
"#;

#[test]
fn zero_budget_campaign_has_a_single_record_row() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, SMALL_CONFIG).unwrap();
    let summary = run_campaign(&config, &RunOverrides::default()).unwrap();
    assert_eq!(summary.record.steps.len(), 1);
    assert_eq!(summary.dataset_files.len(), 4);
    let record = std::fs::read_to_string(dir.path().join("campaign_output/record.csv")).unwrap();
    assert_eq!(record.lines().count(), 3);
}

#[test]
fn campaign_from_imported_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RandomPlantConfig {
        state_dim: 2,
        input_dim: 1,
        ..RandomPlantConfig::default()
    };
    let plant = SimulatedPlant::new(SyntheticLpvPlant::random(&cfg, 2).unwrap(), ExcitationConfig::default());
    let mut names = Vec::new();
    for (i, theta) in [[0.2, 0.2], [0.8, 0.6]].iter().enumerate() {
        let data = plant.run_experiment(&OperatingPoint::new(theta.to_vec()), 300, i as u64).unwrap();
        let name = format!("lab_{i}.csv");
        write_dataset(&dir.path().join(&name), &data, None).unwrap();
        names.push(format!("\"{name}\""));
    }
    let text = SMALL_CONFIG
        .replace("budget = 0", "budget = 2")
        .replace("grid = [2, 2]", &format!("dataset_paths = [{}]", names.join(", ")));
    let config = dir.path().join("c.toml");
    std::fs::write(&config, text).unwrap();
    let summary = run_campaign(&config, &RunOverrides::default()).unwrap();
    assert_eq!(summary.model.points().len(), 4);
    let v = summary.record.volumes();
    assert!(v[2] <= v[1] && v[1] <= v[0]);
}

#[test]
fn unexcited_initial_data_fails_at_iteration_zero() {
    let dir = tempfile::tempdir().unwrap();
    let t = 50;
    let data = lpv_active::varx::TimeSeriesData::new(
        DMatrix::from_fn(t, 2, |k, j| 0.9f64.powi(k as i32) * (j + 1) as f64),
        DMatrix::zeros(t, 1),
        OperatingPoint::new(vec![0.5, 0.5]),
    )
    .unwrap();
    write_dataset(&dir.path().join("flat.csv"), &data, None).unwrap();
    let imported = import_external_datasets(&[dir.path().join("flat.csv")]).unwrap();
    assert!(imported[0].excitation_warning());

    let text = SMALL_CONFIG.replace("grid = [2, 2]", "dataset_paths = [\"flat.csv\"]");
    let config = dir.path().join("c.toml");
    std::fs::write(&config, text).unwrap();
    let err = run_campaign(&config, &RunOverrides::default()).unwrap_err();
    assert!(err.is_numerical());
    assert!(matches!(err, Error::Iteration { iteration: 0, .. }), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dataset_roundtrip_is_bit_exact(
        values in proptest::collection::vec(-1e300f64..1e300, 24),
        tiny in proptest::collection::vec(-1e-300f64..1e-300, 8),
        theta in proptest::collection::vec(-5.0f64..5.0, 1..=3),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut all = values.clone();
        all.extend(tiny);
        let states = DMatrix::from_fn(8, 3, |k, j| all[k * 3 + j]);
        let inputs = DMatrix::from_fn(8, 1, |k, _| all[24 + k]);
        let data = lpv_active::varx::TimeSeriesData::new(states, inputs, OperatingPoint::new(theta)).unwrap();
        write_dataset(&path, &data, Some(1)).unwrap();
        let (back, _) = read_dataset(&path, None).unwrap();
        prop_assert_eq!(back, data);
    }
}

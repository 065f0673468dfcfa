//! Synthetic LPV plant `x_{k+1} = A(θ)x_k + B(θ)u_k + w_k` and multisine excitation.
//!
//! `A(θ)` and `B(θ)` are affine in a fixed smooth basis of the box-normalized
//! coordinates `s = normalize(θ) ∈ [-1, 1]ᵈ`:
//! `φ(θ) = [s₁, …, s_d, sin(π s₁), …, sin(π s_d)]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OperatingBox, OperatingPoint};
use crate::varx::TimeSeriesData;

/// Validated spectral radius is pushed this far below the requested margin so
/// that points between validation nodes stay inside it too.
const MARGIN_HEADROOM: f64 = 0.98;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Zero-mean uniform noise with the same covariance.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticLpvPlant {
    #[serde(with = "crate::serde_matrix")]
    a0: DMatrix<f64>,
    /// One coefficient matrix per basis function, `2d` in total.
    #[serde(with = "crate::serde_matrix::vec")]
    a_coeffs: Vec<DMatrix<f64>>,
    #[serde(with = "crate::serde_matrix")]
    b0: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix::vec")]
    b_coeffs: Vec<DMatrix<f64>>,
    #[serde(with = "crate::serde_matrix")]
    noise_cov: DMatrix<f64>,
    #[serde(default)]
    noise_kind: NoiseKind,
    /// `E(θ) = E · (1 + gain · (s₁ + 1)/2)`; zero keeps the noise constant over θ.
    #[serde(default)]
    noise_theta_gain: f64,
    operating_box: OperatingBox,
    stability_margin: f64,
}

/// Knobs for drawing a random plant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomPlantConfig {
    pub state_dim: usize,
    pub input_dim: usize,
    pub operating_box: OperatingBox,
    pub stability_margin: f64,
    /// Standard deviation of the entries of the θ-varying `A` coefficients.
    pub a_variation: f64,
    /// Standard deviation of the entries of the θ-varying `B` coefficients.
    pub b_variation: f64,
    /// Process noise is `noise_std² · I`.
    pub noise_std: f64,
    pub noise_kind: NoiseKind,
    pub noise_theta_gain: f64,
}

impl Default for RandomPlantConfig {
    /// Four states, three inputs, two scheduling coordinates on the unit box.
    fn default() -> Self {
        RandomPlantConfig {
            state_dim: 4,
            input_dim: 3,
            operating_box: OperatingBox::unit(2),
            stability_margin: 0.95,
            a_variation: 0.12,
            b_variation: 0.3,
            noise_std: 0.05,
            noise_kind: NoiseKind::Gaussian,
            noise_theta_gain: 0.0,
        }
    }
}

impl SyntheticLpvPlant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a0: DMatrix<f64>,
        a_coeffs: Vec<DMatrix<f64>>,
        b0: DMatrix<f64>,
        b_coeffs: Vec<DMatrix<f64>>,
        noise_cov: DMatrix<f64>,
        operating_box: OperatingBox,
        stability_margin: f64,
    ) -> Result<Self> {
        let plant = SyntheticLpvPlant {
            a0,
            a_coeffs,
            b0,
            b_coeffs,
            noise_cov,
            noise_kind: NoiseKind::Gaussian,
            noise_theta_gain: 0.0,
            operating_box,
            stability_margin,
        };
        plant.validate()?;
        Ok(plant)
    }

    /// Plant with θ-independent `A₀`, `B₀`.
    pub fn constant(a0: DMatrix<f64>, b0: DMatrix<f64>, noise_cov: DMatrix<f64>, operating_box: OperatingBox, stability_margin: f64) -> Result<Self> {
        let k = 2 * operating_box.dim();
        let (n, m) = (a0.nrows(), b0.ncols());
        Self::new(
            a0,
            vec![DMatrix::zeros(n, n); k],
            b0,
            vec![DMatrix::zeros(n, m); k],
            noise_cov,
            operating_box,
            stability_margin,
        )
    }

    /// Draws coefficients from `seed`, then scales the `A` family down if needed
    /// so that the spectral radius stays below the margin on the validation grid.
    pub fn random(cfg: &RandomPlantConfig, seed: u64) -> Result<Self> {
        let (n, m) = (cfg.state_dim, cfg.input_dim);
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("plant needs at least one state and one input".into()));
        }
        for (name, v) in [("a_variation", cfg.a_variation), ("b_variation", cfg.b_variation), ("noise_std", cfg.noise_std)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        let k = 2 * cfg.operating_box.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = |sd: f64| -> f64 {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        };

        let mut a0 = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { gauss(0.08) });
        let diag: Vec<f64> = (0..n).map(|_| 0.7 + gauss(0.06)).collect();
        for (i, d) in diag.into_iter().enumerate() {
            a0[(i, i)] = d.clamp(0.45, 0.9);
        }
        let mut a_coeffs: Vec<DMatrix<f64>> = (0..k).map(|_| DMatrix::from_fn(n, n, |_, _| gauss(cfg.a_variation))).collect();
        let b0 = DMatrix::from_fn(n, m, |_, _| gauss(0.5));
        let b_coeffs: Vec<DMatrix<f64>> = (0..k).map(|_| DMatrix::from_fn(n, m, |_, _| gauss(cfg.b_variation))).collect();

        let mut plant = SyntheticLpvPlant {
            a0: a0.clone(),
            a_coeffs: a_coeffs.clone(),
            b0,
            b_coeffs,
            noise_cov: DMatrix::identity(n, n) * (cfg.noise_std * cfg.noise_std),
            noise_kind: cfg.noise_kind,
            noise_theta_gain: cfg.noise_theta_gain,
            operating_box: cfg.operating_box.clone(),
            stability_margin: cfg.stability_margin,
        };
        if !(cfg.stability_margin > 0.0 && cfg.stability_margin < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "stability margin must lie in (0, 1), got {}",
                cfg.stability_margin
            )));
        }
        let worst = plant.max_spectral_radius_on_grid();
        let target = MARGIN_HEADROOM * cfg.stability_margin;
        if worst > target {
            let scale = target / worst;
            a0 *= scale;
            for c in &mut a_coeffs {
                *c *= scale;
            }
            plant.a0 = a0;
            plant.a_coeffs = a_coeffs;
        }
        plant.validate()?;
        Ok(plant)
    }

    pub fn with_noise_kind(mut self, kind: NoiseKind) -> Self {
        self.noise_kind = kind;
        self
    }

    pub fn with_noise_cov(mut self, noise_cov: DMatrix<f64>) -> Result<Self> {
        self.noise_cov = noise_cov;
        self.validate()?;
        Ok(self)
    }

    pub fn with_noise_theta_gain(mut self, gain: f64) -> Result<Self> {
        self.noise_theta_gain = gain;
        self.validate()?;
        Ok(self)
    }

    /// Checks shapes, noise PSD-ness, and stability on the validation grid.
    pub fn validate(&self) -> Result<()> {
        let n = self.a0.nrows();
        let m = self.b0.ncols();
        let k = 2 * self.operating_box.dim();
        if self.a0.ncols() != n || self.b0.nrows() != n || n == 0 || m == 0 {
            return Err(Error::InvalidArgument("plant A0/B0 have inconsistent shapes".into()));
        }
        if self.a_coeffs.len() != k || self.b_coeffs.len() != k {
            return Err(Error::DimensionMismatch {
                context: "plant basis coefficients",
                expected: k,
                found: self.a_coeffs.len().min(self.b_coeffs.len()),
            });
        }
        if self.a_coeffs.iter().any(|c| c.shape() != (n, n)) || self.b_coeffs.iter().any(|c| c.shape() != (n, m)) {
            return Err(Error::InvalidArgument("plant basis coefficient has the wrong shape".into()));
        }
        if self.noise_cov.shape() != (n, n) {
            return Err(Error::InvalidArgument("noise covariance must be n × n".into()));
        }
        if (&self.noise_cov - self.noise_cov.transpose()).amax() > 1e-12 * self.noise_cov.amax().max(1.0) {
            return Err(Error::InvalidArgument("noise covariance must be symmetric".into()));
        }
        let min_eig = SymmetricEigen::new(self.noise_cov.clone()).eigenvalues.min();
        if min_eig < -1e-12 * self.noise_cov.amax().max(1.0) {
            return Err(Error::InvalidArgument("noise covariance must be positive semidefinite".into()));
        }
        if !(self.noise_theta_gain.is_finite() && self.noise_theta_gain > -1.0) {
            return Err(Error::InvalidArgument("noise θ gain must exceed -1".into()));
        }
        if !(self.stability_margin > 0.0 && self.stability_margin < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "stability margin must lie in (0, 1), got {}",
                self.stability_margin
            )));
        }
        let worst = self.max_spectral_radius_on_grid();
        if worst > self.stability_margin {
            return Err(Error::InvalidArgument(format!(
                "spectral radius {worst} exceeds the stability margin {}",
                self.stability_margin
            )));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.a0.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b0.ncols()
    }

    pub fn sched_dim(&self) -> usize {
        self.operating_box.dim()
    }

    pub fn operating_box(&self) -> &OperatingBox {
        &self.operating_box
    }

    pub fn stability_margin(&self) -> f64 {
        self.stability_margin
    }

    pub fn noise_kind(&self) -> NoiseKind {
        self.noise_kind
    }

    pub fn noise_cov_at(&self, theta: &OperatingPoint) -> DMatrix<f64> {
        if self.noise_theta_gain == 0.0 {
            return self.noise_cov.clone();
        }
        let s = self.operating_box.normalize(theta);
        &self.noise_cov * (1.0 + self.noise_theta_gain * 0.5 * (s[0] + 1.0))
    }

    fn basis(&self, theta: &OperatingPoint) -> Vec<f64> {
        let s = self.operating_box.normalize(theta);
        s.iter().copied().chain(s.iter().map(|v| (PI * v).sin())).collect()
    }

    /// Exact `(A(θ), B(θ))`.
    pub fn true_matrices(&self, theta: &OperatingPoint) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.operating_box.check_contains(theta)?;
        Ok(self.matrices_unchecked(theta))
    }

    fn matrices_unchecked(&self, theta: &OperatingPoint) -> (DMatrix<f64>, DMatrix<f64>) {
        let phi = self.basis(theta);
        let mut a = self.a0.clone();
        let mut b = self.b0.clone();
        for (w, (ca, cb)) in phi.iter().zip(self.a_coeffs.iter().zip(&self.b_coeffs)) {
            a += ca * *w;
            b += cb * *w;
        }
        (a, b)
    }

    /// Upper bound `L` with `‖A(θ) - A(θ')‖_F ≤ L ‖θ - θ'‖`.
    pub fn a_lipschitz_bound(&self) -> f64 {
        lipschitz(&self.a_coeffs, &self.operating_box)
    }

    pub fn b_lipschitz_bound(&self) -> f64 {
        lipschitz(&self.b_coeffs, &self.operating_box)
    }

    /// Nodes on which the stability margin is enforced.
    pub fn validation_grid(&self) -> Vec<OperatingPoint> {
        let per_axis = match self.sched_dim() {
            1 => 401,
            2 => 61,
            3 => 17,
            _ => 7,
        };
        self.operating_box
            .grid(&vec![per_axis; self.sched_dim()])
            .expect("validation resolution is at least 2")
    }

    pub fn max_spectral_radius_on_grid(&self) -> f64 {
        self.validation_grid()
            .iter()
            .map(|t| spectral_radius(&self.matrices_unchecked(t).0))
            .fold(0.0, f64::max)
    }

    /// Runs `x_{k+1} = A(θ)x_k + B(θ)u_k + w_k` from `x₀ = 0`.
    pub fn simulate_experiment(&self, theta: &OperatingPoint, input: &DMatrix<f64>, seed: u64) -> Result<TimeSeriesData> {
        self.operating_box.check_contains(theta)?;
        if input.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "input channels",
                expected: self.input_dim(),
                found: input.ncols(),
            });
        }
        let (a, b) = self.matrices_unchecked(theta);
        let noise_factor = psd_sqrt(&self.noise_cov_at(theta));
        let n = self.state_dim();
        let t = input.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uniform_half_width = 3f64.sqrt();

        let mut states = DMatrix::zeros(t, n);
        let mut x = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for k in 0..t.saturating_sub(1) {
            for zi in z.iter_mut() {
                *zi = match self.noise_kind {
                    NoiseKind::Gaussian => rng.sample(StandardNormal),
                    NoiseKind::Uniform => rng.random_range(-uniform_half_width..uniform_half_width),
                };
            }
            x = &a * &x + &b * input.row(k).transpose() + &noise_factor * &z;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("simulated state at step {}", k + 1)));
            }
            states.row_mut(k + 1).copy_from(&x.transpose());
        }
        TimeSeriesData::new(states, input.clone(), theta.clone())
    }
}

fn lipschitz(coeffs: &[DMatrix<f64>], bx: &OperatingBox) -> f64 {
    let d = bx.dim();
    bx.widths()
        .iter()
        .enumerate()
        .map(|(j, w)| (coeffs[j].norm() + PI * coeffs[d + j].norm()) * 2.0 / w)
        .sum()
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    // nalgebra's unbounded Schur iteration can cycle on some matrices
    match Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITERATIONS) {
        Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => gelfand_bound(a),
    }
}

const SCHUR_MAX_ITERATIONS: usize = 10_000;

/// `‖A^(2^k)‖^(1/2^k)` by scaled repeated squaring; converges to ρ(A) from above.
fn gelfand_bound(a: &DMatrix<f64>) -> f64 {
    let mut m = a.clone();
    let mut log_rho = 0.0;
    let mut weight = 1.0;
    for _ in 0..48 {
        let norm = m.norm();
        if norm == 0.0 {
            return 0.0;
        }
        m /= norm;
        log_rho += weight * norm.ln();
        weight *= 0.5;
        m = &m * &m;
    }
    (log_rho + weight * m.norm().ln()).exp()
}

/// Symmetric square root factor `F` with `F Fᵀ = M` for a PSD `M`.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    /// Cycles per `length` samples.
    pub frequency_index: usize,
    pub amplitude: f64,
    pub phase: f64,
}

/// Sum-of-sinusoids excitation, one harmonic list per input channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultisineSignal {
    pub length: usize,
    pub harmonics: Vec<Vec<Harmonic>>,
    /// Maximum allowed `|u_{k+1} - u_k|` per channel.
    pub slew_limit: Option<f64>,
}

/// Minimum number of distinct frequencies per channel for a first-order VARX
/// regressor of dimension `n + m`.
pub fn recommended_harmonics(state_dim: usize, input_dim: usize) -> usize {
    (state_dim + input_dim).div_ceil(2) + 1
}

impl MultisineSignal {
    /// `harmonics` frequencies per channel, interleaved across channels so no two
    /// channels share a frequency, spread over roughly the lowest tenth of the
    /// band. Each channel has RMS `amplitude`.
    pub fn spread(channels: usize, length: usize, harmonics: usize, amplitude: f64, slew_limit: Option<f64>) -> Self {
        let stride = ((length / 10) / (channels * harmonics).max(1)).max(1);
        let per_harmonic = if harmonics == 0 { 0.0 } else { amplitude * (2.0 / harmonics as f64).sqrt() };
        let harmonics = (0..channels)
            .map(|c| {
                (0..harmonics)
                    .map(|j| Harmonic {
                        frequency_index: 1 + c + channels * stride * j,
                        amplitude: per_harmonic,
                        phase: 0.0,
                    })
                    .collect()
            })
            .collect();
        MultisineSignal {
            length,
            harmonics,
            slew_limit,
        }
    }

    /// [`spread`](Self::spread) with the recommended number of harmonics.
    pub fn recommended(state_dim: usize, input_dim: usize, length: usize, amplitude: f64, slew_limit: Option<f64>) -> Self {
        Self::spread(input_dim, length, recommended_harmonics(state_dim, input_dim), amplitude, slew_limit)
    }

    pub fn channels(&self) -> usize {
        self.harmonics.len()
    }
}

/// `length × channels` input; each harmonic's phase is offset by a uniform
/// random angle drawn from `seed`. Channels violating the slew limit are scaled
/// down uniformly until they satisfy it.
pub fn multisine_input(spec: &MultisineSignal, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = spec.length;
    let mut u: DMatrix<f64> = DMatrix::zeros(t, spec.channels());
    for (c, harmonics) in spec.harmonics.iter().enumerate() {
        for h in harmonics {
            let phase = h.phase + rng.random_range(0.0..2.0 * PI);
            let omega = 2.0 * PI * h.frequency_index as f64 / t as f64;
            for k in 0..t {
                u[(k, c)] += h.amplitude * (omega * k as f64 + phase).sin();
            }
        }
        if let Some(limit) = spec.slew_limit {
            let max_step: f64 = (1..t).map(|k| (u[(k, c)] - u[(k - 1, c)]).abs()).fold(0.0, f64::max);
            if max_step > limit {
                let scale = limit / max_step;
                u.column_mut(c).iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    u
}

/// Something an experiment can be run on at a chosen operating point.
pub trait Plant {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn operating_box(&self) -> &OperatingBox;
    fn run_experiment(&self, theta: &OperatingPoint, length: usize, seed: u64) -> Result<TimeSeriesData>;
}

/// Excitation used when a [`SimulatedPlant`] runs an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcitationConfig {
    /// Per-channel RMS of the multisine.
    pub amplitude: f64,
    /// Frequencies per channel; `None` uses the recommended minimum.
    pub harmonics: Option<usize>,
    pub slew_limit: Option<f64>,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        ExcitationConfig {
            amplitude: 1.0,
            harmonics: None,
            slew_limit: None,
        }
    }
}

/// A synthetic plant excited by a seeded multisine.
#[derive(Clone, Debug)]
pub struct SimulatedPlant {
    pub plant: SyntheticLpvPlant,
    pub excitation: ExcitationConfig,
}

impl SimulatedPlant {
    pub fn new(plant: SyntheticLpvPlant, excitation: ExcitationConfig) -> Self {
        SimulatedPlant { plant, excitation }
    }

    pub fn input_signal(&self, length: usize) -> MultisineSignal {
        let (n, m) = (self.plant.state_dim(), self.plant.input_dim());
        let h = self.excitation.harmonics.unwrap_or_else(|| recommended_harmonics(n, m));
        MultisineSignal::spread(m, length, h, self.excitation.amplitude, self.excitation.slew_limit)
    }
}

impl Plant for SimulatedPlant {
    fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }

    fn operating_box(&self) -> &OperatingBox {
        self.plant.operating_box()
    }

    fn run_experiment(&self, theta: &OperatingPoint, length: usize, seed: u64) -> Result<TimeSeriesData> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input_seed = rng.next_u64();
        let noise_seed = rng.next_u64();
        let input = multisine_input(&self.input_signal(length), input_seed);
        self.plant.simulate_experiment(theta, &input, noise_seed)
    }
}

/// Gaussian draw helper shared with tests that need independent noise.
pub fn gaussian_matrix(rows: usize, cols: usize, sd: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).expect("sd is non-negative");
    DMatrix::from_fn(rows, cols, |_, _| normal.sample(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::varx::{check_persistency_of_excitation, identify_local_model};

    #[test]
    fn gelfand_bound_matches_known_radii() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((gelfand_bound(&rot) - 0.5).abs() < 1e-12);
        let jordan = DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.9]);
        let g = gelfand_bound(&jordan);
        assert!(g >= 0.9 && g < 0.9 + 1e-9, "{g}");
        assert_eq!(gelfand_bound(&DMatrix::zeros(3, 3)), 0.0);
        let nilpotent = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(gelfand_bound(&nilpotent), 0.0);
    }

    #[test]
    fn random_plants_construct_for_many_seeds() {
        for seed in 0..40 {
            let plant = SyntheticLpvPlant::random(&RandomPlantConfig::default(), seed).unwrap();
            assert!(plant.max_spectral_radius_on_grid() < 0.95);
        }
    }

    fn reference_plant(seed: u64) -> SyntheticLpvPlant {
        SyntheticLpvPlant::random(&RandomPlantConfig::default(), seed).unwrap()
    }

    #[test]
    fn constant_plant_is_constant() {
        let a0 = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let b0 = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let p = SyntheticLpvPlant::constant(a0.clone(), b0.clone(), DMatrix::identity(2, 2), OperatingBox::unit(2), 0.9).unwrap();
        for t in [[0.0, 0.0], [0.3, 0.9], [1.0, 1.0]] {
            let (a, b) = p.true_matrices(&OperatingPoint::from(&t[..])).unwrap();
            assert_eq!(a, a0);
            assert_eq!(b, b0);
        }
    }

    #[test]
    fn outside_box_rejected() {
        let p = reference_plant(1);
        assert!(matches!(
            p.true_matrices(&OperatingPoint::new(vec![1.5, 0.5])),
            Err(Error::OutsideBox { .. })
        ));
    }

    #[test]
    fn unstable_plant_rejected() {
        let a0 = DMatrix::from_row_slice(1, 1, &[0.99]);
        let r = SyntheticLpvPlant::constant(a0, DMatrix::from_element(1, 1, 1.0), DMatrix::identity(1, 1), OperatingBox::unit(1), 0.9);
        assert!(r.is_err());
    }

    #[test]
    fn zero_harmonics_is_silent() {
        let spec = MultisineSignal::spread(3, 100, 0, 1.0, None);
        assert!(multisine_input(&spec, 4).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn multisine_deterministic_and_slew_limited() {
        let spec = MultisineSignal::recommended(4, 3, 500, 1.0, Some(0.05));
        let u1 = multisine_input(&spec, 7);
        let u2 = multisine_input(&spec, 7);
        assert_eq!(u1, u2);
        assert_ne!(u1, multisine_input(&spec, 8));
        for c in 0..3 {
            for k in 1..500 {
                assert!((u1[(k, c)] - u1[(k - 1, c)]).abs() <= 0.05 + 1e-12);
            }
        }
    }

    #[test]
    fn recommended_harmonics_for_four_states_three_inputs() {
        assert_eq!(recommended_harmonics(4, 3), 5);
        assert_eq!(recommended_harmonics(2, 2), 3);
    }

    #[test]
    fn zero_noise_zero_input_stays_at_rest() {
        let p = reference_plant(2).with_noise_cov(DMatrix::zeros(4, 4)).unwrap();
        let d = p.simulate_experiment(&OperatingPoint::new(vec![0.5, 0.5]), &DMatrix::zeros(100, 3), 1).unwrap();
        assert!(d.states().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let sim = SimulatedPlant::new(reference_plant(3), ExcitationConfig::default());
        let theta = OperatingPoint::new(vec![0.2, 0.7]);
        let d1 = sim.run_experiment(&theta, 300, 5).unwrap();
        let d2 = sim.run_experiment(&theta, 300, 5).unwrap();
        assert_eq!(d1, d2);
        assert_ne!(d1, sim.run_experiment(&theta, 300, 6).unwrap());
    }

    #[test]
    fn noiseless_end_to_end_recovery() {
        let p = reference_plant(4).with_noise_cov(DMatrix::zeros(4, 4)).unwrap();
        let sim = SimulatedPlant::new(p, ExcitationConfig::default());
        let theta = OperatingPoint::new(vec![0.3, 0.8]);
        let d = sim.run_experiment(&theta, 600, 1).unwrap();
        let est = identify_local_model(&d).unwrap();
        let (a, b) = sim.plant.true_matrices(&theta).unwrap();
        assert!((&est.a_hat - a).norm() + (&est.b_hat - b).norm() <= 1e-8);
        assert!(est.a_se.amax() <= 1e-8 && est.b_se.amax() <= 1e-8);
    }

    #[test]
    fn recommended_multisine_is_persistently_exciting() {
        let sim = SimulatedPlant::new(reference_plant(5), ExcitationConfig::default());
        let d = sim.run_experiment(&OperatingPoint::new(vec![0.5, 0.1]), 6000, 3).unwrap();
        let check = check_persistency_of_excitation(&d);
        assert!(check.ok, "{check:?}");
    }

    #[test]
    fn uniform_noise_matches_covariance() {
        let p = reference_plant(6).with_noise_kind(NoiseKind::Uniform);
        let theta = OperatingPoint::new(vec![0.5, 0.5]);
        let d = p.simulate_experiment(&theta, &DMatrix::zeros(20000, 3), 2).unwrap();
        let (a, _) = p.true_matrices(&theta).unwrap();
        let z = d.states().rows(0, 19999).into_owned();
        let y = d.targets();
        let r = y - z * a.transpose();
        let cov = r.transpose() * &r / 19999.0;
        let e = p.noise_cov_at(&theta);
        assert!((&cov - &e).norm() / e.norm() < 0.05);
    }

    #[test]
    fn theta_dependent_noise_scales_covariance() {
        let p = reference_plant(7).with_noise_theta_gain(1.0).unwrap();
        let lo = p.noise_cov_at(&OperatingPoint::new(vec![0.0, 0.5]));
        let hi = p.noise_cov_at(&OperatingPoint::new(vec![1.0, 0.5]));
        assert!((&hi - &lo * 2.0).amax() < 1e-15);
    }

    #[test]
    fn plant_document_roundtrip() {
        let p = reference_plant(8).with_noise_kind(NoiseKind::Uniform);
        let json = serde_json::to_string(&p).unwrap();
        let back: SyntheticLpvPlant = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }
}

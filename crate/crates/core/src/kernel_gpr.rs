//! Scalar Gaussian process regression with per-observation noise.
//!
//! The posterior is computed from a Cholesky factor of `K(θ,θ) + Σ` and never
//! forms an explicit inverse. Noise enters as a diagonal `Σ = diag(se²)`, so each
//! training label can carry its own standard error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OperatingPoint;

/// Diagonal jitter levels, as multiples of `σ²`, tried in order until `K + Σ`
/// factorizes. Zero comes first so that well-posed problems are solved exactly.
pub const JITTER_LEVELS: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Round-off allowance (relative to `σ²`) before a negative variance is an error.
pub const VARIANCE_CLAMP_TOLERANCE: f64 = 1e-10;

/// Smallest admissible Schur complement (relative to `σ²`) when conditioning on
/// a new observation.
const SCHUR_TOLERANCE: f64 = 1e-14;

/// `κ(θ,θ') = σ² exp(-½ (θ-θ')ᵀ Λ⁻¹ (θ-θ'))` with diagonal `Λ`.
///
/// `length_scales` holds the diagonal entries of `Λ` itself, so a squared
/// coordinate difference is divided by the entry directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquaredExponentialKernel {
    signal_std: f64,
    length_scales: Vec<f64>,
}

impl SquaredExponentialKernel {
    pub fn new(signal_std: f64, length_scales: Vec<f64>) -> Result<Self> {
        if !(signal_std.is_finite() && signal_std > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel signal std must be positive, got {signal_std}"
            )));
        }
        if length_scales.is_empty() {
            return Err(Error::InvalidArgument("kernel needs at least one length scale".into()));
        }
        if let Some(l) = length_scales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "kernel length scales must be positive, got {l}"
            )));
        }
        Ok(SquaredExponentialKernel {
            signal_std,
            length_scales,
        })
    }

    pub fn signal_std(&self) -> f64 {
        self.signal_std
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_std * self.signal_std
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// Same length scales, different signal std.
    pub fn with_signal_std(&self, signal_std: f64) -> Result<Self> {
        Self::new(signal_std, self.length_scales.clone())
    }

    pub fn eval(&self, a: &OperatingPoint, b: &OperatingPoint) -> Result<f64> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        Ok(self.eval_unchecked(a.coords(), b.coords()))
    }

    fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let quad: f64 = a
            .iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| (x - y) * (x - y) / l)
            .sum();
        self.signal_variance() * (-0.5 * quad).exp()
    }

    /// `K(rows, cols)` with entry `(i, j) = κ(rows[i], cols[j])`.
    pub fn gram_matrix(&self, rows: &[OperatingPoint], cols: &[OperatingPoint]) -> Result<DMatrix<f64>> {
        for p in rows.iter().chain(cols) {
            self.check_dim(p)?;
        }
        Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.eval_unchecked(rows[i].coords(), cols[j].coords())
        }))
    }

    fn cross_vector(&self, points: &[OperatingPoint], target: &OperatingPoint) -> DVector<f64> {
        DVector::from_iterator(
            points.len(),
            points.iter().map(|p| self.eval_unchecked(p.coords(), target.coords())),
        )
    }

    fn check_dim(&self, p: &OperatingPoint) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "kernel input",
                expected: self.dim(),
                found: p.dim(),
            });
        }
        Ok(())
    }
}

/// Prior mean function. Only constants are supported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PriorMean {
    Constant(f64),
}

impl PriorMean {
    pub fn eval(&self, _point: &OperatingPoint) -> f64 {
        match *self {
            PriorMean::Constant(c) => c,
        }
    }
}

impl Default for PriorMean {
    fn default() -> Self {
        PriorMean::Constant(0.0)
    }
}

/// Feature/label pairs `(θᵢ, γ̂ᵢ)` with per-label noise standard deviations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GprDataset {
    points: Vec<OperatingPoint>,
    labels: Vec<f64>,
    noise_sd: Vec<f64>,
}

impl GprDataset {
    pub fn new(points: Vec<OperatingPoint>, labels: Vec<f64>, noise_sd: Vec<f64>) -> Result<Self> {
        let mut ds = GprDataset::default();
        if labels.len() != points.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: points.len(),
                found: labels.len(),
            });
        }
        if noise_sd.len() != points.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset noise",
                expected: points.len(),
                found: noise_sd.len(),
            });
        }
        for ((p, y), s) in points.into_iter().zip(labels).zip(noise_sd) {
            ds.push(p, y, s)?;
        }
        Ok(ds)
    }

    pub fn empty() -> Self {
        GprDataset::default()
    }

    pub fn push(&mut self, point: OperatingPoint, label: f64, noise_sd: f64) -> Result<()> {
        if let Some(first) = self.points.first() {
            if first.dim() != point.dim() {
                return Err(Error::DimensionMismatch {
                    context: "dataset point",
                    expected: first.dim(),
                    found: point.dim(),
                });
            }
        }
        if !label.is_finite() {
            return Err(Error::NonFinite(format!("label {label}")));
        }
        if !(noise_sd.is_finite() && noise_sd >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise standard deviation must be finite and non-negative, got {noise_sd}"
            )));
        }
        if point.coords().iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("operating point {point}")));
        }
        if noise_sd == 0.0 {
            if let Some(i) = self
                .points
                .iter()
                .zip(&self.noise_sd)
                .position(|(p, s)| *s == 0.0 && p == &point)
            {
                return Err(Error::SingularGram {
                    first: i,
                    second: self.points.len(),
                });
            }
        }
        self.points.push(point);
        self.labels.push(label);
        self.noise_sd.push(noise_sd);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[OperatingPoint] {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn noise_sd(&self) -> &[f64] {
        &self.noise_sd
    }
}

/// A fitted scalar GP. Immutable; appending returns a new posterior.
#[derive(Clone, Debug)]
pub struct GprPosterior {
    dataset: GprDataset,
    kernel: SquaredExponentialKernel,
    prior_mean: PriorMean,
    /// Lower-triangular `L` with `L Lᵀ = K + Σ + jitter·I`.
    factor: DMatrix<f64>,
    /// `(K + Σ)⁻¹ (f - μ(θ))`.
    weights: DVector<f64>,
    /// Absolute diagonal jitter that was needed for the factorization.
    jitter: f64,
}

impl GprPosterior {
    pub fn fit(dataset: GprDataset, kernel: SquaredExponentialKernel, prior_mean: PriorMean) -> Result<Self> {
        if let Some(p) = dataset.points.first() {
            kernel.check_dim(p)?;
        }
        let m = dataset.len();
        let mut gram = kernel.gram_matrix(&dataset.points, &dataset.points)?;
        for (i, s) in dataset.noise_sd.iter().enumerate() {
            gram[(i, i)] += s * s;
        }
        let residual = DVector::from_iterator(
            m,
            dataset
                .points
                .iter()
                .zip(&dataset.labels)
                .map(|(p, y)| y - prior_mean.eval(p)),
        );

        let sigma2 = kernel.signal_variance();
        for eps in JITTER_LEVELS {
            let jitter = eps * sigma2;
            let mut attempt = gram.clone();
            for i in 0..m {
                attempt[(i, i)] += jitter;
            }
            if let Some(chol) = attempt.cholesky() {
                if eps > 0.0 {
                    log::debug!("gram factorization needed jitter {eps:e}·σ²");
                }
                let weights = chol.solve(&residual);
                return Ok(GprPosterior {
                    factor: chol.unpack(),
                    weights,
                    jitter,
                    dataset,
                    kernel,
                    prior_mean,
                });
            }
        }
        let (first, second) = most_correlated_pair(&gram);
        Err(Error::SingularGram { first, second })
    }

    pub fn dataset(&self) -> &GprDataset {
        &self.dataset
    }

    pub fn kernel(&self) -> &SquaredExponentialKernel {
        &self.kernel
    }

    pub fn prior_mean(&self) -> PriorMean {
        self.prior_mean
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior `(mean, variance)` at `target`.
    pub fn predict(&self, target: &OperatingPoint) -> Result<(f64, f64)> {
        self.kernel.check_dim(target)?;
        let cross = self.kernel.cross_vector(&self.dataset.points, target);
        let mean = self.prior_mean.eval(target) + cross.dot(&self.weights);
        let variance = self.variance_from_cross(&cross)?;
        Ok((mean, variance))
    }

    /// Posterior variance only; skips the mean.
    pub fn predict_variance(&self, target: &OperatingPoint) -> Result<f64> {
        self.kernel.check_dim(target)?;
        let cross = self.kernel.cross_vector(&self.dataset.points, target);
        self.variance_from_cross(&cross)
    }

    fn variance_from_cross(&self, cross: &DVector<f64>) -> Result<f64> {
        let prior = self.kernel.signal_variance();
        let explained = if cross.is_empty() {
            0.0
        } else {
            self.solve_lower(cross).norm_squared()
        };
        clamp_variance(prior - explained, prior)
    }

    fn solve_lower(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor
            .solve_lower_triangular(rhs)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Reduction in posterior variance at `target` if `(next_point, ·, next_noise_sd)`
    /// were appended; the label does not matter.
    ///
    /// `(κ(θ*,θₙ) - kᵀK⁻¹k*)² / (κ(θₙ,θₙ) + se² - kᵀK⁻¹k)` where `k = K(θ, θₙ)` and
    /// `k* = K(θ, θ*)`. The denominator is the Schur complement of the extended
    /// `K + Σ` and must be positive.
    pub fn variance_reduction(
        &self,
        next_point: &OperatingPoint,
        next_noise_sd: f64,
        target: &OperatingPoint,
    ) -> Result<f64> {
        self.kernel.check_dim(next_point)?;
        self.kernel.check_dim(target)?;
        if !(next_noise_sd.is_finite() && next_noise_sd >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise standard deviation must be finite and non-negative, got {next_noise_sd}"
            )));
        }
        let sigma2 = self.kernel.signal_variance();
        let k_next = self.kernel.cross_vector(&self.dataset.points, next_point);
        let k_target = self.kernel.cross_vector(&self.dataset.points, target);
        let (cross_term, self_term) = if self.dataset.is_empty() {
            (0.0, 0.0)
        } else {
            let v_next = self.solve_lower(&k_next);
            let v_target = self.solve_lower(&k_target);
            (v_next.dot(&v_target), v_next.norm_squared())
        };
        let numerator = self.kernel.eval_unchecked(target.coords(), next_point.coords()) - cross_term;
        let denominator = sigma2 + next_noise_sd * next_noise_sd + self.jitter - self_term;
        if !(denominator > SCHUR_TOLERANCE * sigma2) {
            return Err(Error::NumericalDegeneracy(format!(
                "Schur complement {denominator:e} of the extended gram matrix is not positive"
            )));
        }
        Ok(numerator * numerator / denominator)
    }

    /// Refits with one more observation.
    pub fn append_observation(&self, point: OperatingPoint, label: f64, noise_sd: f64) -> Result<Self> {
        self.kernel.check_dim(&point)?;
        let mut dataset = self.dataset.clone();
        dataset.push(point, label, noise_sd)?;
        GprPosterior::fit(dataset, self.kernel.clone(), self.prior_mean)
    }
}

pub(crate) fn clamp_variance(variance: f64, prior: f64) -> Result<f64> {
    if variance < -VARIANCE_CLAMP_TOLERANCE * prior {
        return Err(Error::NegativeVariance { value: variance });
    }
    Ok(variance.clamp(0.0, prior))
}

fn most_correlated_pair(gram: &DMatrix<f64>) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_corr = f64::NEG_INFINITY;
    for i in 0..gram.nrows() {
        for j in (i + 1)..gram.ncols() {
            let corr = gram[(i, j)] / (gram[(i, i)] * gram[(j, j)]).sqrt();
            if corr > best_corr {
                best_corr = corr;
                best = (i, j);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> OperatingPoint {
        OperatingPoint::from(c)
    }

    fn kernel(sigma: f64, lambda: &[f64]) -> SquaredExponentialKernel {
        SquaredExponentialKernel::new(sigma, lambda.to_vec()).unwrap()
    }

    #[test]
    fn kernel_closed_form_values() {
        let k = kernel(2.0, &[1.0, 1.0]);
        assert_eq!(k.eval(&pt(&[0.3, 0.7]), &pt(&[0.3, 0.7])).unwrap(), 4.0);
        let v = k.eval(&pt(&[1.0, 0.0]), &pt(&[0.0, 0.0])).unwrap();
        assert!((v - 4.0 * (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 2.42612).abs() < 1e-5);

        let k = kernel(1.0, &[4.0, 1.0]);
        let v = k.eval(&pt(&[2.0, 5.0]), &pt(&[0.0, 5.0])).unwrap();
        assert!((v - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn kernel_rejects_bad_hyperparameters_and_dims() {
        assert!(SquaredExponentialKernel::new(0.0, vec![1.0]).is_err());
        assert!(SquaredExponentialKernel::new(1.0, vec![1.0, -1.0]).is_err());
        let k = kernel(1.0, &[1.0, 1.0]);
        assert!(matches!(
            k.eval(&pt(&[0.0]), &pt(&[0.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gram_single_point_and_symmetry() {
        let k = kernel(1.5, &[0.3]);
        let g = k.gram_matrix(&[pt(&[0.2])], &[pt(&[0.2])]).unwrap();
        assert_eq!(g, DMatrix::from_element(1, 1, 2.25));

        let pts: Vec<_> = [0.1, 0.5, 0.55, 0.9].iter().map(|x| pt(&[*x])).collect();
        let g = k.gram_matrix(&pts, &pts).unwrap();
        assert_eq!(g, g.transpose());
    }

    #[test]
    fn empty_fit_is_prior() {
        let post = GprPosterior::fit(GprDataset::empty(), kernel(0.7, &[0.1, 0.2]), PriorMean::Constant(0.8)).unwrap();
        let (m, v) = post.predict(&pt(&[0.3, 0.9])).unwrap();
        assert_eq!(m, 0.8);
        assert_eq!(v, 0.7 * 0.7);
    }

    #[test]
    fn noise_free_single_point_interpolates() {
        let ds = GprDataset::new(vec![pt(&[0.4, 0.4])], vec![1.7], vec![0.0]).unwrap();
        let post = GprPosterior::fit(ds, kernel(1.0, &[0.05, 0.05]), PriorMean::Constant(0.0)).unwrap();
        let (m, v) = post.predict(&pt(&[0.4, 0.4])).unwrap();
        assert!((m - 1.7).abs() < 1e-10);
        assert!(v.abs() < 1e-10);
        assert_eq!(post.jitter(), 0.0);
    }

    #[test]
    fn two_point_matches_explicit_inverse() {
        let (s, l) = (1.3, 0.2);
        let k = kernel(s, &[l]);
        let (x1, x2, xs) = (0.1, 0.45, 0.3);
        let (y1, y2) = (0.6, -0.2);
        let (n1, n2) = (0.1, 0.25);
        let mu = 0.3;
        let ds = GprDataset::new(vec![pt(&[x1]), pt(&[x2])], vec![y1, y2], vec![n1, n2]).unwrap();
        let post = GprPosterior::fit(ds, k, PriorMean::Constant(mu)).unwrap();

        // hand-rolled 2x2 inverse
        let kf = |a: f64, b: f64| s * s * (-0.5 * (a - b) * (a - b) / l).exp();
        let (a, b, d) = (kf(x1, x1) + n1 * n1, kf(x1, x2), kf(x2, x2) + n2 * n2);
        let det = a * d - b * b;
        let inv = [[d / det, -b / det], [-b / det, a / det]];
        let ks = [kf(xs, x1), kf(xs, x2)];
        let r = [y1 - mu, y2 - mu];
        let w = [inv[0][0] * r[0] + inv[0][1] * r[1], inv[1][0] * r[0] + inv[1][1] * r[1]];
        let mean = mu + ks[0] * w[0] + ks[1] * w[1];
        let quad = ks[0] * (inv[0][0] * ks[0] + inv[0][1] * ks[1]) + ks[1] * (inv[1][0] * ks[0] + inv[1][1] * ks[1]);
        let var = s * s - quad;

        let (m, v) = post.predict(&pt(&[xs])).unwrap();
        assert!((m - mean).abs() < 1e-12 * mean.abs().max(1.0));
        assert!((v - var).abs() < 1e-12 * var.abs().max(1.0));
    }

    #[test]
    fn far_target_recovers_prior() {
        let ds = GprDataset::new(vec![pt(&[0.0, 0.0]), pt(&[0.1, 0.0])], vec![3.0, 2.0], vec![0.01, 0.02]).unwrap();
        let post = GprPosterior::fit(ds, kernel(2.0, &[0.01, 0.01]), PriorMean::Constant(-1.0)).unwrap();
        let (m, v) = post.predict(&pt(&[10.0, 10.0])).unwrap();
        assert!((m + 1.0).abs() < 1e-6);
        assert!((v - 4.0).abs() < 1e-6);
    }

    #[test]
    fn reduction_vanishes_for_huge_noise() {
        let ds = GprDataset::new(vec![pt(&[0.2])], vec![1.0], vec![0.1]).unwrap();
        let post = GprPosterior::fit(ds, kernel(1.0, &[0.1]), PriorMean::Constant(0.0)).unwrap();
        let r = post.variance_reduction(&pt(&[0.5]), 1e12, &pt(&[0.5])).unwrap();
        assert!(r <= 1e-12);
    }

    #[test]
    fn reduction_on_empty_model_at_target_is_full_prior() {
        let post = GprPosterior::fit(GprDataset::empty(), kernel(1.5, &[0.1]), PriorMean::Constant(0.0)).unwrap();
        let r = post.variance_reduction(&pt(&[0.5]), 0.0, &pt(&[0.5])).unwrap();
        assert!((r - 2.25).abs() < 1e-15);
    }

    #[test]
    fn reduction_degenerate_for_duplicate_noise_free_point() {
        let ds = GprDataset::new(vec![pt(&[0.2])], vec![1.0], vec![0.0]).unwrap();
        let post = GprPosterior::fit(ds, kernel(1.0, &[0.1]), PriorMean::Constant(0.0)).unwrap();
        assert!(matches!(
            post.variance_reduction(&pt(&[0.2]), 0.0, &pt(&[0.3])),
            Err(Error::NumericalDegeneracy(_))
        ));
    }

    #[test]
    fn append_noise_free_then_zero_variance() {
        let ds = GprDataset::new(vec![pt(&[0.2, 0.2])], vec![1.0], vec![0.05]).unwrap();
        let post = GprPosterior::fit(ds, kernel(1.0, &[0.1, 0.1]), PriorMean::Constant(0.0)).unwrap();
        let post = post.append_observation(pt(&[0.7, 0.1]), 0.3, 0.0).unwrap();
        let (m, v) = post.predict(&pt(&[0.7, 0.1])).unwrap();
        assert!(v < 1e-10);
        assert!((m - 0.3).abs() < 1e-8);
    }

    #[test]
    fn coincident_noise_free_duplicate_rejected() {
        let ds = GprDataset::new(vec![pt(&[0.2])], vec![1.0], vec![0.0]).unwrap();
        let post = GprPosterior::fit(ds, kernel(1.0, &[0.1]), PriorMean::Constant(0.0)).unwrap();
        assert!(matches!(
            post.append_observation(pt(&[0.2]), 1.1, 0.0),
            Err(Error::SingularGram { first: 0, second: 1 })
        ));
        // a noisy duplicate is fine
        assert!(post.append_observation(pt(&[0.2]), 1.1, 0.1).is_ok());
    }

    #[test]
    fn near_coincident_points_use_jitter() {
        let ds = GprDataset::new(
            vec![pt(&[0.2]), pt(&[0.2 + 1e-9])],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let post = GprPosterior::fit(ds, kernel(1.0, &[1.0]), PriorMean::Constant(0.0)).unwrap();
        assert!(post.jitter() > 0.0);
        let (m, v) = post.predict(&pt(&[0.2])).unwrap();
        assert!((m - 1.0).abs() < 1e-4);
        assert!(v < 1e-5);
    }

    #[test]
    fn append_huge_noise_is_uninformative() {
        let ds = GprDataset::new(vec![pt(&[0.2]), pt(&[0.6])], vec![1.0, -0.5], vec![0.05, 0.1]).unwrap();
        let post = GprPosterior::fit(ds, kernel(1.0, &[0.05]), PriorMean::Constant(0.1)).unwrap();
        let appended = post.append_observation(pt(&[0.4]), 100.0, 1e12).unwrap();
        for i in 0..=10 {
            let t = pt(&[i as f64 / 10.0]);
            let (m0, v0) = post.predict(&t).unwrap();
            let (m1, v1) = appended.predict(&t).unwrap();
            assert!((m0 - m1).abs() < 1e-9);
            assert!((v0 - v1).abs() < 1e-9);
        }
    }

    #[test]
    fn clamp_rejects_structural_negativity() {
        assert_eq!(clamp_variance(-1e-12, 1.0).unwrap(), 0.0);
        assert_eq!(clamp_variance(1.5, 1.0).unwrap(), 1.0);
        assert!(clamp_variance(-1e-6, 1.0).is_err());
    }
}

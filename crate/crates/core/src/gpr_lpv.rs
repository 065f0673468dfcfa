//! GPR-LPV model: one scalar GP per element of `A(θ)` and `B(θ)`.
//!
//! Element `γ` is regressed on `(θᵢ, γ̂_{θᵢ})` with observation noise
//! `Σ_γ = diag(se(γ̂_{θ₁})², …)` taken from the local identifications, so the
//! elementwise posteriors inherit the local estimation uncertainty.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OperatingBox, OperatingPoint};
use crate::kernel_gpr::{GprDataset, GprPosterior, PriorMean, SquaredExponentialKernel};
use crate::varx::LocalModelEstimate;

pub const MODEL_FORMAT_VERSION: &str = "1.0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParameterMatrix {
    A,
    B,
}

/// Position of one scalar parameter, zero-based. Displays one-based, e.g. `a11`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElementId {
    pub matrix: ParameterMatrix,
    pub row: usize,
    pub col: usize,
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.matrix {
            ParameterMatrix::A => 'a',
            ParameterMatrix::B => 'b',
        };
        write!(f, "{m}{}{}", self.row + 1, self.col + 1)
    }
}

impl FromStr for ElementId {
    type Err = Error;

    /// Accepts `a11`, `b23`, or `a1_12` for indices above nine.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse matrix element `{s}`"));
        let mut chars = s.chars();
        let matrix = match chars.next().map(|c| c.to_ascii_lowercase()) {
            Some('a') => ParameterMatrix::A,
            Some('b') => ParameterMatrix::B,
            _ => return Err(bad()),
        };
        let rest = chars.as_str();
        let (r, c) = if let Some((r, c)) = rest.split_once('_') {
            (r, c)
        } else if rest.len() == 2 {
            rest.split_at(1)
        } else {
            return Err(bad());
        };
        let row: usize = r.parse().map_err(|_| bad())?;
        let col: usize = c.parse().map_err(|_| bad())?;
        if row == 0 || col == 0 {
            return Err(bad());
        }
        Ok(ElementId {
            matrix,
            row: row - 1,
            col: col - 1,
        })
    }
}

/// How each element's kernel signal std `σ_γ` is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalStdPolicy {
    /// `σ_γ = max(factor · maxᵢ se(γ̂_{θᵢ}), floor)`.
    EmpiricalBayes { factor: f64, floor: f64 },
    /// Same `σ` for every element.
    Fixed { value: f64 },
}

impl Default for SignalStdPolicy {
    fn default() -> Self {
        SignalStdPolicy::EmpiricalBayes {
            factor: 2.0,
            floor: 1e-6,
        }
    }
}

impl SignalStdPolicy {
    fn resolve(&self, standard_errors: &[f64]) -> f64 {
        match *self {
            SignalStdPolicy::EmpiricalBayes { factor, floor } => {
                let max_se = standard_errors.iter().copied().fold(0.0, f64::max);
                (factor * max_se).max(floor)
            }
            SignalStdPolicy::Fixed { value } => value,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SignalStdPolicy::EmpiricalBayes { factor, floor } => factor.is_finite() && factor > 0.0 && floor.is_finite() && floor > 0.0,
            SignalStdPolicy::Fixed { value } => value.is_finite() && value > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid signal std policy {self:?}")))
        }
    }
}

/// Kernel and prior settings shared by all element GPs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperConfig {
    /// Diagonal of `Λ`, one entry per θ coordinate.
    pub length_scales: Vec<f64>,
    #[serde(default)]
    pub signal_std: SignalStdPolicy,
    /// Constant prior mean of the diagonal of `A`. Off-diagonal `A` and all of `B` use 0.
    #[serde(default = "default_prior_a_diagonal")]
    pub prior_a_diagonal: f64,
    /// Recompute `σ_γ` from all standard errors after each appended experiment.
    #[serde(default)]
    pub reresolve_on_append: bool,
}

fn default_prior_a_diagonal() -> f64 {
    0.8
}

impl HyperConfig {
    pub fn new(length_scales: Vec<f64>) -> Self {
        HyperConfig {
            length_scales,
            signal_std: SignalStdPolicy::default(),
            prior_a_diagonal: default_prior_a_diagonal(),
            reresolve_on_append: false,
        }
    }

    pub fn prior_mean(&self, id: ElementId) -> PriorMean {
        match id.matrix {
            ParameterMatrix::A if id.row == id.col => PriorMean::Constant(self.prior_a_diagonal),
            _ => PriorMean::Constant(0.0),
        }
    }

    fn validate(&self, sched_dim: usize) -> Result<()> {
        if self.length_scales.len() != sched_dim {
            return Err(Error::DimensionMismatch {
                context: "kernel length scales",
                expected: sched_dim,
                found: self.length_scales.len(),
            });
        }
        if !self.prior_a_diagonal.is_finite() {
            return Err(Error::InvalidArgument("prior mean must be finite".into()));
        }
        self.signal_std.validate()
    }
}

/// Posterior means and variances of `A(θ*)` and `B(θ*)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixPrediction {
    pub a_mean: DMatrix<f64>,
    pub b_mean: DMatrix<f64>,
    pub a_var: DMatrix<f64>,
    pub b_var: DMatrix<f64>,
    /// The query point was outside the operating box (extrapolation).
    pub outside_box: bool,
}

#[derive(Clone, Debug)]
pub struct GprLpvModel {
    state_dim: usize,
    input_dim: usize,
    operating_box: OperatingBox,
    hyper: HyperConfig,
    points: Vec<OperatingPoint>,
    /// `A` elements row-major, then `B` elements row-major.
    elements: Vec<GprPosterior>,
}

impl GprLpvModel {
    /// Model with no experiments: every element is its prior.
    pub fn prior_only(state_dim: usize, input_dim: usize, operating_box: OperatingBox, hyper: HyperConfig) -> Result<Self> {
        hyper.validate(operating_box.dim())?;
        let empty: Vec<f64> = Vec::new();
        let sigma = hyper.signal_std.resolve(&empty);
        let stds = vec![sigma; state_dim * state_dim + state_dim * input_dim];
        Self::fit_elements(state_dim, input_dim, operating_box, hyper, Vec::new(), &stds, |_| (Vec::new(), Vec::new()))
    }

    /// `gpr()`: fits all `n² + nm` element GPs with `σ_γ` from the configured policy.
    pub fn build(estimates: &[LocalModelEstimate], operating_box: OperatingBox, hyper: HyperConfig) -> Result<Self> {
        let (n, m) = check_estimates(estimates, &operating_box)?;
        hyper.validate(operating_box.dim())?;
        let stds: Vec<f64> = element_ids(n, m)
            .map(|id| {
                let se: Vec<f64> = estimates.iter().map(|e| element_of(e, id).1).collect();
                hyper.signal_std.resolve(&se)
            })
            .collect();
        Self::build_with_signal_stds(estimates, operating_box, hyper, &stds)
    }

    /// Like [`build`](Self::build) but with explicit per-element `σ_γ`, in element order.
    pub fn build_with_signal_stds(
        estimates: &[LocalModelEstimate],
        operating_box: OperatingBox,
        hyper: HyperConfig,
        signal_stds: &[f64],
    ) -> Result<Self> {
        let (n, m) = check_estimates(estimates, &operating_box)?;
        hyper.validate(operating_box.dim())?;
        let points = estimates.iter().map(|e| e.operating_point.clone()).collect();
        Self::fit_elements(n, m, operating_box, hyper, points, signal_stds, |id| {
            estimates.iter().map(|e| element_of(e, id)).unzip()
        })
    }

    fn fit_elements<F>(
        state_dim: usize,
        input_dim: usize,
        operating_box: OperatingBox,
        hyper: HyperConfig,
        points: Vec<OperatingPoint>,
        signal_stds: &[f64],
        data_for: F,
    ) -> Result<Self>
    where
        F: Fn(ElementId) -> (Vec<f64>, Vec<f64>) + Sync,
    {
        let ids: Vec<ElementId> = element_ids(state_dim, input_dim).collect();
        if signal_stds.len() != ids.len() {
            return Err(Error::DimensionMismatch {
                context: "element signal stds",
                expected: ids.len(),
                found: signal_stds.len(),
            });
        }
        let elements = ids
            .par_iter()
            .zip(signal_stds.par_iter())
            .map(|(id, sigma)| {
                let (labels, noise) = data_for(*id);
                let dataset = GprDataset::new(points.clone(), labels, noise)?;
                let kernel = SquaredExponentialKernel::new(*sigma, hyper.length_scales.clone())?;
                GprPosterior::fit(dataset, kernel, hyper.prior_mean(*id))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GprLpvModel {
            state_dim,
            input_dim,
            operating_box,
            hyper,
            points,
            elements,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn sched_dim(&self) -> usize {
        self.operating_box.dim()
    }

    pub fn operating_box(&self) -> &OperatingBox {
        &self.operating_box
    }

    pub fn hyper(&self) -> &HyperConfig {
        &self.hyper
    }

    /// Operating points of all experiments so far, in order.
    pub fn points(&self) -> &[OperatingPoint] {
        &self.points
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn element_ids(&self) -> impl Iterator<Item = ElementId> {
        element_ids(self.state_dim, self.input_dim)
    }

    pub fn element(&self, id: ElementId) -> Result<&GprPosterior> {
        let idx = self.index_of(id)?;
        Ok(&self.elements[idx])
    }

    pub fn elements(&self) -> impl Iterator<Item = (ElementId, &GprPosterior)> {
        self.element_ids().zip(&self.elements)
    }

    pub fn signal_stds(&self) -> Vec<f64> {
        self.elements.iter().map(|e| e.kernel().signal_std()).collect()
    }

    fn index_of(&self, id: ElementId) -> Result<usize> {
        let (n, m) = (self.state_dim, self.input_dim);
        match id.matrix {
            ParameterMatrix::A if id.row < n && id.col < n => Ok(id.row * n + id.col),
            ParameterMatrix::B if id.row < n && id.col < m => Ok(n * n + id.row * m + id.col),
            _ => Err(Error::InvalidArgument(format!("element {id} does not exist in a {n}-state, {m}-input model"))),
        }
    }

    pub fn predict_matrices(&self, target: &OperatingPoint) -> Result<MatrixPrediction> {
        self.operating_box.check_dim(target)?;
        let outside_box = !self.operating_box.contains(target);
        if outside_box {
            log::warn!("GPR-LPV queried outside the operating box at {target}");
        }
        let (n, m) = (self.state_dim, self.input_dim);
        let mut out = MatrixPrediction {
            a_mean: DMatrix::zeros(n, n),
            b_mean: DMatrix::zeros(n, m),
            a_var: DMatrix::zeros(n, n),
            b_var: DMatrix::zeros(n, m),
            outside_box,
        };
        for (id, gp) in self.element_ids().zip(&self.elements) {
            let (mean, var) = gp.predict(target)?;
            let (mean_m, var_m) = match id.matrix {
                ParameterMatrix::A => (&mut out.a_mean, &mut out.a_var),
                ParameterMatrix::B => (&mut out.b_mean, &mut out.b_var),
            };
            mean_m[(id.row, id.col)] = mean;
            var_m[(id.row, id.col)] = var;
        }
        Ok(out)
    }

    /// `uc()`: `g_M(θ*) = Σ_γ Var(γ | D_γ, θ*)`.
    pub fn uncertainty_criterion(&self, target: &OperatingPoint) -> Result<f64> {
        self.operating_box.check_dim(target)?;
        let mut total = 0.0;
        for gp in &self.elements {
            total += gp.predict_variance(target)?;
        }
        Ok(total)
    }

    /// `Σ_γ σ_γ²`, the criterion's value with no nearby data.
    pub fn prior_total_variance(&self) -> f64 {
        self.elements.iter().map(|e| e.kernel().signal_variance()).sum()
    }

    /// Extends every element GP with the new experiment's estimate and standard error.
    pub fn append_experiment(&self, estimate: &LocalModelEstimate) -> Result<Self> {
        estimate.validate()?;
        if estimate.state_dim() != self.state_dim || estimate.input_dim() != self.input_dim {
            return Err(Error::InvalidArgument(format!(
                "estimate is {}×{}, model expects n={}, m={}",
                estimate.state_dim(),
                estimate.input_dim(),
                self.state_dim,
                self.input_dim
            )));
        }
        self.operating_box.check_contains(&estimate.operating_point)?;
        let theta = &estimate.operating_point;
        let ids: Vec<ElementId> = self.element_ids().collect();
        let elements = ids
            .par_iter()
            .zip(self.elements.par_iter())
            .map(|(id, gp)| {
                let (label, se) = element_of(estimate, *id);
                if self.hyper.reresolve_on_append {
                    let mut dataset = gp.dataset().clone();
                    dataset.push(theta.clone(), label, se)?;
                    let sigma = self.hyper.signal_std.resolve(dataset.noise_sd());
                    let kernel = gp.kernel().with_signal_std(sigma)?;
                    GprPosterior::fit(dataset, kernel, gp.prior_mean())
                } else {
                    gp.append_observation(theta.clone(), label, se)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut points = self.points.clone();
        points.push(theta.clone());
        Ok(GprLpvModel {
            state_dim: self.state_dim,
            input_dim: self.input_dim,
            operating_box: self.operating_box.clone(),
            hyper: self.hyper.clone(),
            points,
            elements,
        })
    }

    /// Same data and kernels, with appends no longer re-resolving `σ`.
    pub fn with_reresolve_on_append(mut self, on: bool) -> Self {
        self.hyper.reresolve_on_append = on;
        self
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION.to_string(),
            state_dim: self.state_dim,
            input_dim: self.input_dim,
            operating_box: self.operating_box.clone(),
            hyper: self.hyper.clone(),
            points: self.points.clone(),
            elements: self
                .elements()
                .map(|(id, gp)| ElementDocument {
                    element: id.to_string(),
                    signal_std: gp.kernel().signal_std(),
                    prior_mean: match gp.prior_mean() {
                        PriorMean::Constant(c) => c,
                    },
                    labels: gp.dataset().labels().to_vec(),
                    noise_sd: gp.dataset().noise_sd().to_vec(),
                })
                .collect(),
        }
    }

    /// Refits a model from its serialized form. The format version is not checked here.
    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        doc.hyper.validate(doc.operating_box.dim())?;
        for p in &doc.points {
            doc.operating_box.check_contains(p)?;
        }
        let ids: Vec<ElementId> = element_ids(doc.state_dim, doc.input_dim).collect();
        if doc.elements.len() != ids.len() {
            return Err(Error::DimensionMismatch {
                context: "serialized model elements",
                expected: ids.len(),
                found: doc.elements.len(),
            });
        }
        let elements = ids
            .par_iter()
            .zip(doc.elements.par_iter())
            .map(|(id, e)| {
                let parsed: ElementId = e.element.parse()?;
                if parsed != *id {
                    return Err(Error::InvalidArgument(format!("expected element {id}, found {}", e.element)));
                }
                let dataset = GprDataset::new(doc.points.clone(), e.labels.clone(), e.noise_sd.clone())?;
                let kernel = SquaredExponentialKernel::new(e.signal_std, doc.hyper.length_scales.clone())?;
                GprPosterior::fit(dataset, kernel, PriorMean::Constant(e.prior_mean))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GprLpvModel {
            state_dim: doc.state_dim,
            input_dim: doc.input_dim,
            operating_box: doc.operating_box.clone(),
            hyper: doc.hyper.clone(),
            points: doc.points.clone(),
            elements,
        })
    }
}

/// Serialized form of a fitted model; enough to refit it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: String,
    pub state_dim: usize,
    pub input_dim: usize,
    pub operating_box: OperatingBox,
    pub hyper: HyperConfig,
    pub points: Vec<OperatingPoint>,
    pub elements: Vec<ElementDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementDocument {
    pub element: String,
    pub signal_std: f64,
    pub prior_mean: f64,
    pub labels: Vec<f64>,
    pub noise_sd: Vec<f64>,
}

fn element_ids(n: usize, m: usize) -> impl Iterator<Item = ElementId> {
    let a = (0..n * n).map(move |k| ElementId {
        matrix: ParameterMatrix::A,
        row: k / n,
        col: k % n,
    });
    let b = (0..n * m).map(move |k| ElementId {
        matrix: ParameterMatrix::B,
        row: k / m,
        col: k % m,
    });
    a.chain(b)
}

/// `(γ̂, se(γ̂))` for one element of an estimate.
fn element_of(e: &LocalModelEstimate, id: ElementId) -> (f64, f64) {
    match id.matrix {
        ParameterMatrix::A => (e.a_hat[(id.row, id.col)], e.a_se[(id.row, id.col)]),
        ParameterMatrix::B => (e.b_hat[(id.row, id.col)], e.b_se[(id.row, id.col)]),
    }
}

fn check_estimates(estimates: &[LocalModelEstimate], operating_box: &OperatingBox) -> Result<(usize, usize)> {
    let first = estimates.first().ok_or(Error::EmptyEstimates)?;
    let (n, m) = (first.state_dim(), first.input_dim());
    for e in estimates {
        e.validate()?;
        if e.state_dim() != n || e.input_dim() != m {
            return Err(Error::InvalidArgument(format!(
                "estimates disagree on dimensions: ({n}, {m}) vs ({}, {})",
                e.state_dim(),
                e.input_dim()
            )));
        }
        operating_box.check_contains(&e.operating_point)?;
    }
    Ok((n, m))
}

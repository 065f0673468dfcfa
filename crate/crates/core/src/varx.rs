//! Local linear model identification from one fixed-θ experiment.
//!
//! The one-step regression `x_{k+1} = [A B] z_k + w_k` with `z_k = [x_k; u_k]`
//! shares its regressors across all state equations, so equationwise OLS is the
//! GLS estimator. Standard errors come from `Σ̂_w ⊗ (ZᵀZ)⁻¹`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OperatingPoint;

/// Smallest singular value of `Z/√T` that still counts as persistently exciting.
pub const PE_THRESHOLD: f64 = 1e-8;

/// Above this condition number of `Z` the solve goes through QR instead of the
/// normal equations.
pub const NORMAL_EQUATIONS_MAX_CONDITION: f64 = 1e6;

/// State and input sequences recorded at one operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesData {
    /// `T × n`, row `k` is `x_k`.
    states: DMatrix<f64>,
    /// `T × m`, row `k` is `u_k`.
    inputs: DMatrix<f64>,
    operating_point: OperatingPoint,
}

impl TimeSeriesData {
    pub fn new(states: DMatrix<f64>, inputs: DMatrix<f64>, operating_point: OperatingPoint) -> Result<Self> {
        if states.nrows() != inputs.nrows() {
            return Err(Error::DimensionMismatch {
                context: "input rows",
                expected: states.nrows(),
                found: inputs.nrows(),
            });
        }
        if states.ncols() == 0 || inputs.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "time series needs at least one state and one input channel".into(),
            ));
        }
        let needed = states.ncols() + inputs.ncols() + 2;
        if states.nrows() < needed {
            return Err(Error::InsufficientData {
                needed,
                got: states.nrows(),
            });
        }
        if let Some(k) = (0..states.nrows())
            .find(|&k| states.row(k).iter().chain(inputs.row(k).iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite(format!("time series row {k}")));
        }
        Ok(TimeSeriesData {
            states,
            inputs,
            operating_point,
        })
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn operating_point(&self) -> &OperatingPoint {
        &self.operating_point
    }

    pub fn sample_count(&self) -> usize {
        self.states.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Regressor matrix `Z`, rows `[x_kᵀ u_kᵀ]` for `k = 0 … T-2`.
    pub fn regressors(&self) -> DMatrix<f64> {
        let rows = self.sample_count() - 1;
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut z = DMatrix::zeros(rows, n + m);
        z.view_mut((0, 0), (rows, n)).copy_from(&self.states.rows(0, rows));
        z.view_mut((0, n), (rows, m)).copy_from(&self.inputs.rows(0, rows));
        z
    }

    /// Regression targets `x_{k+1}`, `k = 0 … T-2`.
    pub fn targets(&self) -> DMatrix<f64> {
        self.states.rows(1, self.sample_count() - 1).into_owned()
    }
}

/// `(Â, B̂)` with elementwise standard errors and the residual covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalModelEstimate {
    #[serde(with = "crate::serde_matrix")]
    pub a_hat: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub b_hat: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub a_se: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub b_se: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub residual_cov: DMatrix<f64>,
    pub operating_point: OperatingPoint,
}

impl LocalModelEstimate {
    pub fn state_dim(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_hat.ncols()
    }

    /// Sum of squared standard errors: the trace of the estimated parameter covariance.
    pub fn total_variance(&self) -> f64 {
        self.a_se.iter().chain(self.b_se.iter()).map(|s| s * s).sum()
    }

    /// Checks shapes and the non-negativity / symmetry requirements.
    pub fn validate(&self) -> Result<()> {
        let n = self.a_hat.nrows();
        let m = self.b_hat.ncols();
        let shape_ok = self.a_hat.shape() == (n, n)
            && self.b_hat.shape() == (n, m)
            && self.a_se.shape() == (n, n)
            && self.b_se.shape() == (n, m)
            && self.residual_cov.shape() == (n, n);
        if !shape_ok {
            return Err(Error::InvalidArgument("local model estimate has inconsistent matrix shapes".into()));
        }
        if self.a_se.iter().chain(self.b_se.iter()).any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidArgument("standard errors must be finite and non-negative".into()));
        }
        if self.a_hat.iter().chain(self.b_hat.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("local model estimate".into()));
        }
        if (&self.residual_cov - self.residual_cov.transpose()).amax() > 1e-12 * self.residual_cov.amax().max(1.0) {
            return Err(Error::InvalidArgument("residual covariance is not symmetric".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExcitationCheck {
    pub ok: bool,
    /// Smallest singular value of `Z/√T`.
    pub smallest_singular_value: f64,
}

pub fn check_persistency_of_excitation(data: &TimeSeriesData) -> ExcitationCheck {
    let z = data.regressors();
    let scale = (data.sample_count() as f64).sqrt();
    let smallest = z.singular_values().min() / scale;
    ExcitationCheck {
        ok: smallest > PE_THRESHOLD,
        smallest_singular_value: smallest,
    }
}

/// Least-squares VARX estimate with standard errors (`ilm`).
pub fn identify_local_model(data: &TimeSeriesData) -> Result<LocalModelEstimate> {
    let n = data.state_dim();
    let p = n + data.input_dim();
    let z = data.regressors();
    let y = data.targets();
    let rows = z.nrows();

    let sv = z.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let smallest_normalized = smin / (data.sample_count() as f64).sqrt();
    if !(smallest_normalized > PE_THRESHOLD) {
        return Err(Error::PersistencyOfExcitation {
            smallest_singular_value: smallest_normalized,
        });
    }

    // coeffs is p × n, i.e. [A B]ᵀ; gram_inv is (ZᵀZ)⁻¹
    let (coeffs, gram_inv) = if smax / smin <= NORMAL_EQUATIONS_MAX_CONDITION {
        let zt = z.transpose();
        let chol = (&zt * &z).cholesky().ok_or_else(|| {
            Error::NumericalDegeneracy("normal equations are not positive definite".into())
        })?;
        (chol.solve(&(&zt * &y)), chol.inverse())
    } else {
        let qr = z.clone().qr();
        let r = qr.r();
        let qty = qr.q().transpose() * &y;
        let coeffs = r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::NumericalDegeneracy("QR factor of regressors is singular".into()))?;
        let r_inv = r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .ok_or_else(|| Error::NumericalDegeneracy("QR factor of regressors is singular".into()))?;
        let gram_inv = &r_inv * r_inv.transpose();
        (coeffs, gram_inv)
    };

    let residuals = &y - &z * &coeffs;
    let dof = (rows - p) as f64;
    let mut residual_cov = residuals.transpose() * &residuals / dof;
    residual_cov = (&residual_cov + residual_cov.transpose()) * 0.5;

    let gamma = coeffs.transpose();
    let gram_diag: DVector<f64> = gram_inv.diagonal();
    let se = DMatrix::from_fn(n, p, |i, j| (residual_cov[(i, i)] * gram_diag[j]).max(0.0).sqrt());

    Ok(LocalModelEstimate {
        a_hat: gamma.columns(0, n).into_owned(),
        b_hat: gamma.columns(n, p - n).into_owned(),
        a_se: se.columns(0, n).into_owned(),
        b_se: se.columns(n, p - n).into_owned(),
        residual_cov,
        operating_point: data.operating_point().clone(),
    })
}

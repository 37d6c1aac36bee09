//! Low-dimensional least-squares estimators: OLS, reduced-rank regression
//! and the low-Tucker-rank ALS estimator, plus its plug-in covariance.

mod als;
mod covariance;

use crate::clock::Stopwatch;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use als::{fit_ltr, AlsOptions};
pub use covariance::{asymptotic_covariance, jacobian};

use crate::error::{invalid, Error, Result};
use crate::model::{response_modes, TensorSeries};
use crate::regularized::{AdmmDiagnostics, BicRow};
use crate::tensor::{dematricize, DenseTensor};
use crate::tucker::TuckerDecomposition;

/// Stacked regression `Y ≈ X Bᵀ` built from a series of length `T + 1`:
/// row `t` of `response` is `vec(Y_{t+1})ᵀ`, row `t` of `predictor` is `vec(Y_t)ᵀ`.
#[derive(Debug, Clone)]
pub struct RegressionDesign {
    dims: Vec<usize>,
    response: DMatrix<f64>,
    predictor: DMatrix<f64>,
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
}

impl RegressionDesign {
    pub fn from_series(series: &TensorSeries) -> Result<Self> {
        if series.len() < 2 {
            return Err(invalid(
                "a regression design needs at least two observations",
            ));
        }
        let rows = series.to_rows();
        let t = rows.nrows() - 1;
        let response = rows.rows(1, t).into_owned();
        let predictor = rows.rows(0, t).into_owned();
        Self::from_matrices(series.dims(), response, predictor)
    }

    pub fn from_matrices(
        dims: &[usize],
        response: DMatrix<f64>,
        predictor: DMatrix<f64>,
    ) -> Result<Self> {
        let p: usize = dims.iter().product();
        if response.shape() != predictor.shape() || response.ncols() != p || response.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: vec![predictor.nrows(), p],
                found: vec![response.nrows(), response.ncols()],
            });
        }
        let gram = predictor.transpose() * &predictor;
        let cross = response.transpose() * &predictor;
        Ok(Self {
            dims: dims.to_vec(),
            response,
            predictor,
            gram,
            cross,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Dims of the transition tensor, `(p_1,…,p_d,p_1,…,p_d)`.
    pub fn transition_dims(&self) -> Vec<usize> {
        let mut d = self.dims.clone();
        d.extend_from_slice(&self.dims);
        d
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn sample_size(&self) -> usize {
        self.response.nrows()
    }

    pub fn state_len(&self) -> usize {
        self.response.ncols()
    }

    pub fn response(&self) -> &DMatrix<f64> {
        &self.response
    }

    pub fn predictor(&self) -> &DMatrix<f64> {
        &self.predictor
    }

    /// `XᵀX`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `YᵀX`.
    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    pub fn residuals(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.response - &self.predictor * b.transpose()
    }

    /// `T⁻¹ Σ_t ‖y_t − B y_{t−1}‖²` for a transition matrix `B = A_[S_2]`.
    pub fn loss(&self, b: &DMatrix<f64>) -> f64 {
        self.residuals(b).norm_squared() / self.sample_size() as f64
    }

    pub fn loss_tensor(&self, a: &DenseTensor) -> Result<f64> {
        Ok(self.loss(&self.transition_matrix(a)?))
    }

    /// Residual sum of squares (unscaled).
    pub fn rss(&self, b: &DMatrix<f64>) -> f64 {
        self.residuals(b).norm_squared()
    }

    pub fn transition_matrix(&self, a: &DenseTensor) -> Result<DMatrix<f64>> {
        if a.dims() != self.transition_dims().as_slice() {
            return Err(Error::DimensionMismatch {
                expected: self.transition_dims(),
                found: a.dims().to_vec(),
            });
        }
        a.matricize(&response_modes(self.order()))
    }

    pub fn tensor_from_matrix(&self, b: &DMatrix<f64>) -> Result<DenseTensor> {
        dematricize(b, &self.transition_dims(), &response_modes(self.order()))
    }

    /// Mean squared norm of the responses, used as a scale reference.
    pub fn response_scale(&self) -> f64 {
        self.response.norm_squared() / self.sample_size() as f64
    }
}

/// Result of any estimator in this crate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub estimator: String,
    pub estimate: DenseTensor,
    pub ranks: Option<Vec<usize>>,
    #[serde(skip)]
    pub tucker: Option<TuckerDecomposition>,
    pub objective_trace: Vec<f64>,
    /// Objective after every individual block update (ALS only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub block_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub elapsed: f64,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    /// Set when truncation floored some mode's rank at 1.
    #[serde(default)]
    pub rank_floored: bool,
    pub bic_table: Option<Vec<BicRow>>,
    #[serde(skip)]
    pub admm: Option<AdmmDiagnostics>,
}

impl FitReport {
    pub(crate) fn closed_form(
        estimator: &str,
        estimate: DenseTensor,
        objective: f64,
        start: Stopwatch,
    ) -> Self {
        Self {
            estimator: estimator.to_string(),
            estimate,
            ranks: None,
            tucker: None,
            objective_trace: vec![objective],
            block_trace: Vec::new(),
            iterations: 1,
            converged: true,
            elapsed: start.seconds(),
            lambda: None,
            gamma: None,
            rank_floored: false,
            bic_table: None,
            admm: None,
        }
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// Eigenvalues of `XᵀX` below this fraction of the largest count as zero.
const GRAM_RANK_TOL: f64 = 1e-12;

fn gram_cholesky(design: &RegressionDesign) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let p = design.state_len();
    let t = design.sample_size();
    let eig = SymmetricEigen::new(design.gram().clone());
    let lmax = eig.eigenvalues.max();
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > GRAM_RANK_TOL * lmax)
        .count();
    if t < p || rank < p {
        return Err(Error::RankDeficient {
            what: "predictor Gram matrix XᵀX",
            rank: rank.min(t),
            dim: p,
        });
    }
    Cholesky::new(design.gram().clone()).ok_or(Error::RankDeficient {
        what: "predictor Gram matrix XᵀX",
        rank,
        dim: p,
    })
}

/// `B_OLS = YᵀX (XᵀX)⁻¹`.
pub(crate) fn ols_matrix(design: &RegressionDesign) -> Result<DMatrix<f64>> {
    let ch = gram_cholesky(design)?;
    Ok(ch.solve(&design.cross().transpose()).transpose())
}

pub fn fit_ols(design: &RegressionDesign) -> Result<FitReport> {
    let start = Stopwatch::start();
    let b = ols_matrix(design)?;
    let obj = design.loss(&b);
    Ok(FitReport::closed_form(
        "OLS",
        design.tensor_from_matrix(&b)?,
        obj,
        start,
    ))
}

/// Reduced-rank regression: `B_OLS` projected onto the leading `rank`
/// right singular vectors of the fitted values `X B_OLSᵀ`.
pub(crate) fn rrr_matrix(design: &RegressionDesign, rank: usize) -> Result<DMatrix<f64>> {
    let p = design.state_len();
    if rank == 0 || rank > p {
        return Err(invalid(format!("RRR rank {rank} must lie in 1..={p}")));
    }
    let ch = gram_cholesky(design)?;
    let b_ols = ch.solve(&design.cross().transpose()).transpose();
    if rank == p {
        return Ok(b_ols);
    }
    // F = X B_olsᵀ has FᵀF = (B_ols L)(B_ols L)ᵀ with XᵀX = L Lᵀ.
    let bl = &b_ols * ch.l();
    let v = crate::linalg::leading_left_singular_vectors(&bl, rank);
    Ok(&v * (v.transpose() * b_ols))
}

pub fn fit_rrr(design: &RegressionDesign, rank: usize) -> Result<FitReport> {
    let start = Stopwatch::start();
    let b = rrr_matrix(design, rank)?;
    let obj = design.loss(&b);
    let mut report = FitReport::closed_form("RRR", design.tensor_from_matrix(&b)?, obj, start);
    report.ranks = Some(vec![rank]);
    Ok(report)
}

/// Matricization rank bound `min(∏_{i≤d} r_i, ∏_{i>d} r_i)` used for RRR.
pub fn rrr_rank(ranks: &[usize]) -> usize {
    let d = ranks.len() / 2;
    let pred: usize = ranks[..d].iter().product();
    let resp: usize = ranks[d..].iter().product();
    pred.min(resp)
}

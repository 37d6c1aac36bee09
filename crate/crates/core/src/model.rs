//! The low-rank tensor autoregressive model `Y_t = <A, Y_{t-1}> + E_t`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::rng;
use crate::tensor::{dematricize, kron_reverse, DenseTensor};
use crate::tucker::TuckerDecomposition;

/// Burn-in used when callers do not supply one.
pub const DEFAULT_BURN_IN: usize = 200;

/// Frobenius norm of the simulated core tensor.
pub const DGP_CORE_NORM: f64 = 5.0;

const MAX_DGP_ATTEMPTS: u64 = 1000;

/// Row modes of the response-side matricization `A_[S_2]` for state order `d`.
pub fn response_modes(d: usize) -> Vec<usize> {
    (d..2 * d).collect()
}

/// Row modes of the predictor-side matricization `A_[S_1]`.
pub fn predictor_modes(d: usize) -> Vec<usize> {
    (0..d).collect()
}

/// Ordered observations of equal shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSeries {
    dims: Vec<usize>,
    observations: Vec<DenseTensor>,
}

impl TensorSeries {
    pub fn new(dims: Vec<usize>, observations: Vec<DenseTensor>) -> Result<Self> {
        if observations.is_empty() {
            return Err(invalid("a series needs at least one observation"));
        }
        if let Some(bad) = observations.iter().find(|o| o.dims() != dims.as_slice()) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: bad.dims().to_vec(),
            });
        }
        Ok(Self { dims, observations })
    }

    /// Builds a series from a `T × p` matrix whose rows are `vec(Y_t)ᵀ`.
    pub fn from_rows(dims: &[usize], rows: &DMatrix<f64>) -> Result<Self> {
        let p: usize = dims.iter().product();
        if rows.ncols() != p {
            return Err(invalid(format!(
                "{} columns cannot hold tensors of dims {dims:?} ({p} entries)",
                rows.ncols()
            )));
        }
        let obs = rows
            .row_iter()
            .map(|r| DenseTensor::new(dims.to_vec(), r.iter().copied().collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims.to_vec(), obs)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[DenseTensor] {
        &self.observations
    }

    pub fn get(&self, t: usize) -> &DenseTensor {
        &self.observations[t]
    }

    /// `T × p` matrix of vectorized observations.
    pub fn to_rows(&self) -> DMatrix<f64> {
        let p: usize = self.dims.iter().product();
        DMatrix::from_fn(self.len(), p, |t, j| self.observations[t].data()[j])
    }

    /// Observations `start..end` (zero-based, end exclusive) as a new series.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(invalid(format!(
                "window {start}..{end} invalid for series of length {}",
                self.len()
            )));
        }
        Self::new(self.dims.clone(), self.observations[start..end].to_vec())
    }
}

#[derive(Debug, Clone)]
pub struct LrtarModel {
    transition: DenseTensor,
    noise_cov: DMatrix<f64>,
    noise_sqrt: DMatrix<f64>,
    tucker: Option<TuckerDecomposition>,
}

impl LrtarModel {
    pub fn new(transition: DenseTensor, noise_cov: DMatrix<f64>) -> Result<Self> {
        let dims = transition.dims();
        if dims.len() % 2 != 0 {
            return Err(invalid(format!(
                "transition tensor must have even order, got dims {dims:?}"
            )));
        }
        let d = dims.len() / 2;
        if dims[..d] != dims[d..] {
            return Err(invalid(format!(
                "transition tensor must be balanced, got dims {dims:?}"
            )));
        }
        let p: usize = dims[..d].iter().product();
        if noise_cov.nrows() != p || noise_cov.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: vec![p, p],
                found: vec![noise_cov.nrows(), noise_cov.ncols()],
            });
        }
        let asym = (&noise_cov - noise_cov.transpose()).abs().max();
        if asym > 1e-12 * noise_cov.abs().max().max(1.0) {
            return Err(invalid(format!(
                "noise covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let noise_sqrt = linalg::sqrt_spd(&noise_cov)?;
        Ok(Self {
            transition,
            noise_cov,
            noise_sqrt,
            tucker: None,
        })
    }

    /// Model whose transition tensor is given in Tucker form.
    pub fn from_tucker(tucker: TuckerDecomposition, noise_cov: DMatrix<f64>) -> Result<Self> {
        let mut model = Self::new(tucker.reconstruct(), noise_cov)?;
        model.tucker = Some(tucker);
        Ok(model)
    }

    /// Model with transition matrix `A_[S_2] = b`.
    pub fn from_transition_matrix(
        dims: &[usize],
        b: &DMatrix<f64>,
        noise_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let mut full = dims.to_vec();
        full.extend_from_slice(dims);
        let transition = dematricize(b, &full, &response_modes(dims.len()))?;
        Self::new(transition, noise_cov)
    }

    /// Multilinear (MTAR) model `Y_t = Y_{t-1} ×_1 B_1 ⋯ ×_d B_d + E_t`.
    pub fn from_multilinear(mats: &[DMatrix<f64>], noise_cov: DMatrix<f64>) -> Result<Self> {
        let dims: Vec<usize> = mats.iter().map(|m| m.nrows()).collect();
        if let Some(m) = mats.iter().find(|m| !m.is_square()) {
            return Err(invalid(format!(
                "multilinear coefficients must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let refs: Vec<&DMatrix<f64>> = mats.iter().collect();
        Self::from_transition_matrix(&dims, &kron_reverse(&refs), noise_cov)
    }

    /// Adds a Tucker form for an existing transition tensor.
    pub fn with_tucker(mut self, tucker: TuckerDecomposition) -> Result<Self> {
        let err = tucker.reconstruct().sub(&self.transition)?.norm();
        if err > 1e-10 * self.transition.norm().max(1.0) {
            return Err(invalid(format!(
                "Tucker form does not reconstruct the transition tensor (error {err:e})"
            )));
        }
        self.tucker = Some(tucker);
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.transition.order() / 2
    }

    pub fn state_dims(&self) -> &[usize] {
        &self.transition.dims()[..self.order()]
    }

    pub fn state_len(&self) -> usize {
        self.state_dims().iter().product()
    }

    pub fn transition(&self) -> &DenseTensor {
        &self.transition
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn tucker(&self) -> Option<&TuckerDecomposition> {
        self.tucker.as_ref()
    }

    /// The VAR transition matrix `A_[S_2]`.
    pub fn transition_matrix(&self) -> DMatrix<f64> {
        self.transition
            .matricize(&response_modes(self.order()))
            .expect("balanced transition")
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.transition_matrix())
    }

    pub fn is_stationary(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    /// One-step conditional mean `<A, y_prev>`.
    pub fn conditional_mean(&self, y_prev: &DenseTensor) -> Result<DenseTensor> {
        if y_prev.dims() != self.state_dims() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dims().to_vec(),
                found: y_prev.dims().to_vec(),
            });
        }
        self.transition.generalized_inner(y_prev)
    }

    /// Simulates `t_len` observations after discarding `burn_in`, starting
    /// from the zero tensor with Gaussian innovations `Σ_e^{1/2} ξ_t`.
    pub fn simulate(&self, t_len: usize, burn_in: usize, seed: u64) -> Result<TensorSeries> {
        if t_len == 0 {
            return Err(invalid("series length must be at least 1"));
        }
        let radius = self.spectral_radius();
        if radius >= 1.0 {
            return Err(Error::Nonstationary { radius });
        }
        let p = self.state_len();
        let b = self.transition_matrix();
        let mut rng = rng::stream(seed, &[rng::TAG_NOISE]);
        let mut y = DVector::zeros(p);
        let mut xi = DVector::zeros(p);
        let mut obs = Vec::with_capacity(t_len);
        for step in 0..burn_in + t_len {
            for x in xi.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            y = &b * &y + &self.noise_sqrt * &xi;
            if step >= burn_in {
                obs.push(DenseTensor::from_vector(self.state_dims(), &y)?);
            }
        }
        TensorSeries::new(self.state_dims().to_vec(), obs)
    }
}

/// Random Tucker-form model with core norm 5, orthonormal Gaussian factors
/// and identity noise, redrawn until it is stationary.
pub fn make_dgp(dims: &[usize], ranks: &[usize], seed: u64) -> Result<LrtarModel> {
    let d = dims.len();
    if d == 0 || ranks.len() != 2 * d {
        return Err(invalid(format!(
            "need {} ranks for state dims {dims:?}, got {ranks:?}",
            2 * d
        )));
    }
    for (i, &r) in ranks.iter().enumerate() {
        let p = dims[i % d];
        if r == 0 || r > p {
            return Err(invalid(format!(
                "rank {r} at position {i} must lie in 1..={p}"
            )));
        }
    }
    let p: usize = dims.iter().product();
    for attempt in 0..MAX_DGP_ATTEMPTS {
        let mut core_rng = rng::stream(seed, &[rng::TAG_ATTEMPT, attempt, rng::TAG_CORE]);
        let mut core = DenseTensor::from_fn(ranks, |_| core_rng.sample(StandardNormal));
        let scale = DGP_CORE_NORM / core.norm();
        core = core.scaled(scale);
        let factors = ranks
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let pi = dims[i % d];
                let mut f_rng = rng::stream(
                    seed,
                    &[rng::TAG_ATTEMPT, attempt, rng::TAG_FACTOR, i as u64],
                );
                let g = DMatrix::from_fn(pi, pi, |_, _| f_rng.sample(StandardNormal));
                linalg::leading_left_singular_vectors(&g, r)
            })
            .collect();
        let tucker = TuckerDecomposition::new(core, factors)?;
        let model = LrtarModel::from_tucker(tucker, DMatrix::identity(p, p))?;
        if model.spectral_radius() < 1.0 {
            return Ok(model);
        }
    }
    Err(Error::Numerical(format!(
        "no stationary model found for dims {dims:?}, ranks {ranks:?} after {MAX_DGP_ATTEMPTS} draws"
    )))
}

/// Number of free parameters of a Tucker-form transition tensor:
/// `∏ r_i + Σ r_i (p_i − r_i) + Σ r_{d+i} (p_i − r_{d+i})`.
pub fn param_count(dims: &[usize], ranks: &[usize]) -> Result<usize> {
    let d = dims.len();
    if ranks.len() != 2 * d {
        return Err(invalid(format!(
            "need {} ranks, got {}",
            2 * d,
            ranks.len()
        )));
    }
    let mut count: usize = ranks.iter().product();
    for (i, &r) in ranks.iter().enumerate() {
        let p = dims[i % d];
        if r > p {
            return Err(invalid(format!("rank {r} exceeds dimension {p}")));
        }
        count += r * (p - r);
    }
    Ok(count)
}

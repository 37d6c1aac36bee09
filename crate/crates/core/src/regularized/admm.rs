use crate::clock::Stopwatch;

use nalgebra::DMatrix;

use super::{mode_maps, rate_lambda, Penalty, RegOptions};
use crate::error::{Error, Result};
use crate::least_squares::{FitReport, RegressionDesign};
use crate::tensor::{DenseTensor, MatricizationMap};

/// Surrogate ranks count singular values above this fraction of the largest.
pub const SURROGATE_RANK_TOL: f64 = 1e-6;

/// Residual denominators never drop below this multiple of `‖YᵀX/T‖_F`, so
/// runs whose solution is exactly zero can still be declared converged.
const ZERO_SCALE: f64 = 1e-6;

/// Final state and traces of one ADMM run.
#[derive(Debug, Clone)]
pub struct AdmmDiagnostics {
    pub penalty: Penalty,
    pub lambda: f64,
    pub rho: f64,
    pub primary: DenseTensor,
    pub surrogates: Vec<DenseTensor>,
    /// Scaled dual variables.
    pub multipliers: Vec<DenseTensor>,
    /// Rank of each surrogate's penalized matricization.
    pub surrogate_ranks: Vec<usize>,
    /// `L_T(A) + λ Σ_k ‖W_k,[I_k]‖_*` after each iteration.
    pub objective_trace: Vec<f64>,
    pub primal_trace: Vec<f64>,
    pub dual_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl AdmmDiagnostics {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }

    pub(crate) fn into_report(self, name: &str, start: Stopwatch) -> FitReport {
        FitReport {
            estimator: name.to_string(),
            estimate: self.primary.clone(),
            ranks: None,
            tucker: None,
            objective_trace: self.objective_trace.clone(),
            block_trace: Vec::new(),
            iterations: self.iterations,
            converged: self.converged,
            elapsed: start.seconds(),
            lambda: Some(self.lambda),
            gamma: None,
            rank_floored: false,
            bic_table: None,
            admm: Some(self),
        }
    }
}

/// Starting point for [`admm_solve`].
#[derive(Debug, Clone)]
pub struct AdmmWarmStart {
    pub primary: DenseTensor,
    pub surrogates: Option<Vec<DenseTensor>>,
    pub multipliers: Option<Vec<DenseTensor>>,
    /// Penalty level and ρ the multipliers belong to; they are rescaled to the new ones.
    pub lambda: f64,
    pub rho: Option<f64>,
}

impl AdmmWarmStart {
    /// `W_k = A`, zero multipliers.
    pub fn from_estimate(primary: DenseTensor, lambda: f64) -> Self {
        Self {
            primary,
            surrogates: None,
            multipliers: None,
            lambda,
            rho: None,
        }
    }

    pub fn from_diagnostics(diag: &AdmmDiagnostics) -> Self {
        Self {
            primary: diag.primary.clone(),
            surrogates: Some(diag.surrogates.clone()),
            multipliers: Some(diag.multipliers.clone()),
            lambda: diag.lambda,
            rho: Some(diag.rho),
        }
    }
}

/// `4 √(λ_min λ_max) · √(λ / rate_lambda)`, with the eigenvalues those of
/// `XᵀX / T` and the second factor clamped to `[1/16, 4]`. Fixed for the
/// whole run.
pub fn auto_rho(design: &RegressionDesign, lambda: f64) -> f64 {
    let gram = design.gram() / design.sample_size() as f64;
    let (lo, hi) = crate::linalg::min_max_eigenvalues(&gram);
    if !(hi > 0.0) {
        return 1.0;
    }
    let base = 4.0 * (lo.max(1e-12 * hi) * hi).sqrt();
    let rate = rate_lambda(design);
    let factor = if rate > 0.0 {
        (lambda / rate).sqrt().clamp(0.0625, 4.0)
    } else {
        1.0
    };
    base * factor
}

/// Soft-thresholds the singular values, returning the result and the
/// surviving shrunk values.
fn prox(m: &DMatrix<f64>, tau: f64) -> (DMatrix<f64>, Vec<f64>) {
    let s = m.clone().svd(true, true);
    let (u, sv, v_t) = (s.u.unwrap(), s.singular_values, s.v_t.unwrap());
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    let mut kept = Vec::new();
    for j in 0..sv.len() {
        let shrunk = sv[j] - tau;
        if shrunk > 0.0 {
            kept.push(shrunk);
            out.ger(shrunk, &u.column(j), &v_t.row(j).transpose(), 1.0);
        }
    }
    (out, kept)
}

fn rank_of(shrunk: &[f64]) -> usize {
    let top = shrunk.iter().copied().fold(0.0, f64::max);
    shrunk
        .iter()
        .filter(|&&s| s > SURROGATE_RANK_TOL * top)
        .count()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `T⁻¹‖Y − X Bᵀ‖²` from sufficient statistics.
fn loss_from_stats(design: &RegressionDesign, yy: f64, b: &DMatrix<f64>) -> f64 {
    let t = design.sample_size() as f64;
    let cross = b.dot(design.cross());
    let quad = (b * design.gram()).dot(b);
    ((yy - 2.0 * cross + quad) / t).max(0.0)
}

/// ADMM for `min_A L_T(A) + λ Σ_k ‖A_[I_k]‖_*` with one surrogate per
/// penalized matricization.
///
/// Each iteration solves the ridge-type `A` step in closed form, applies
/// singular value soft-thresholding at `λ / (2ρ)` to every (over-relaxed)
/// surrogate input and updates the scaled duals. Stops when both the relative primal residual
/// `max_k ‖A − W_k‖ / ‖A‖` and the relative dual residual
/// `ρ ‖W − W_prev‖ / ‖A‖` fall below their tolerances.
pub fn admm_solve(
    design: &RegressionDesign,
    penalty: Penalty,
    lambda: f64,
    opts: &RegOptions,
    warm: Option<&AdmmWarmStart>,
) -> Result<AdmmDiagnostics> {
    let dims = design.transition_dims();
    let maps = mode_maps(&dims, penalty);
    let k = maps.len();
    let rho = opts.rho.unwrap_or_else(|| auto_rho(design, lambda));
    let t = design.sample_size() as f64;
    let p = design.state_len();
    let s2 = MatricizationMap::new(&dims, &crate::model::response_modes(design.order()))?;

    let mut system = design.gram() / t;
    for i in 0..p {
        system[(i, i)] += k as f64 * rho;
    }
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::Numerical("ADMM system matrix is not positive definite".into()))?;
    let moment = design.cross() / t;
    let yy = design.response().norm_squared();
    let floor = (ZERO_SCALE * moment.norm()).max(f64::MIN_POSITIVE);

    let (mut a, mut w, mut c) = match warm {
        Some(ws) => {
            if ws.primary.dims() != dims.as_slice() {
                return Err(Error::DimensionMismatch {
                    expected: dims.clone(),
                    found: ws.primary.dims().to_vec(),
                });
            }
            let w = match &ws.surrogates {
                Some(s) if s.len() == k => s.clone(),
                _ => vec![ws.primary.clone(); k],
            };
            let c = match &ws.multipliers {
                Some(m) if m.len() == k && ws.lambda > 0.0 => {
                    let scale = lambda / ws.lambda * ws.rho.map_or(1.0, |r| r / rho);
                    m.iter().map(|x| x.scaled(scale)).collect()
                }
                _ => vec![DenseTensor::zeros(&dims); k],
            };
            (ws.primary.clone(), w, c)
        }
        None => (
            DenseTensor::zeros(&dims),
            vec![DenseTensor::zeros(&dims); k],
            vec![DenseTensor::zeros(&dims); k],
        ),
    };

    let tau = lambda / (2.0 * rho);
    let mut ranks = vec![0; k];
    let mut objective_trace = Vec::new();
    let mut primal_trace = Vec::new();
    let mut dual_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut sum = DenseTensor::zeros(&dims);

    while iterations < opts.max_iter {
        iterations += 1;

        sum.data_mut().fill(0.0);
        for (wk, ck) in w.iter().zip(&c) {
            for ((s, x), y) in sum.data_mut().iter_mut().zip(wk.data()).zip(ck.data()) {
                *s += x - y;
            }
        }
        let rhs = &moment + s2.apply(&sum) * rho;
        let b = chol.solve(&rhs.transpose()).transpose();
        a = s2.invert(&b)?;

        let mut penalty_sum = 0.0;
        let mut primal_max: f64 = 0.0;
        let mut dual_sq = 0.0;
        for j in 0..k {
            let mut relaxed = a.scaled(opts.relaxation);
            relaxed.axpy(1.0 - opts.relaxation, &w[j])?;
            let shifted = relaxed.add(&c[j])?;
            let (m, kept) = prox(&maps[j].apply(&shifted), tau);
            penalty_sum += kept.iter().sum::<f64>();
            ranks[j] = rank_of(&kept);
            let w_new = maps[j].invert(&m)?;
            dual_sq += sq_dist(w_new.data(), w[j].data());
            w[j] = w_new;
            c[j] = shifted.sub(&w[j])?;
            primal_max = primal_max.max(sq_dist(a.data(), w[j].data()).sqrt());
        }

        let obj = loss_from_stats(design, yy, &b) + lambda * penalty_sum;
        if !obj.is_finite() {
            return Err(Error::Numerical("ADMM iterates diverged".into()));
        }
        let scale = a.norm().max(floor);
        let primal = primal_max / scale;
        let dual = rho * dual_sq.sqrt() / scale;
        objective_trace.push(obj);
        primal_trace.push(primal);
        dual_trace.push(dual);
        if primal < opts.tol_primal && dual < opts.tol_dual {
            converged = true;
            break;
        }
    }

    Ok(AdmmDiagnostics {
        penalty,
        lambda,
        rho,
        primary: a,
        surrogates: w,
        multipliers: c,
        surrogate_ranks: ranks,
        objective_trace,
        primal_trace,
        dual_trace,
        iterations,
        converged,
    })
}

use crate::clock::Stopwatch;

use serde::{Deserialize, Serialize};

use super::admm::{admm_solve, AdmmDiagnostics, AdmmWarmStart};
use super::{lambda_max, mn_start, mode_maps, rate_lambda, Penalty, RegOptions};
use crate::error::{invalid, Result};
use crate::least_squares::{FitReport, RegressionDesign};
use crate::linalg;
use crate::tensor::DenseTensor;

/// Number of points in the default λ grid.
pub const DEFAULT_GRID_LEN: usize = 30;
/// The default grid reaches at least down to `DEFAULT_GRID_FLOOR · λ_max`...
pub const DEFAULT_GRID_FLOOR: f64 = 0.01;
/// ...and to `RATE_GRID_FLOOR ·` [`rate_lambda`], which matters for persistent
/// series where `λ_max` is far above the noise level.
pub const RATE_GRID_FLOOR: f64 = 0.01;

/// Fitted matricizations count singular values above this fraction of the largest.
pub const BIC_RANK_TOL: f64 = 1e-6;

/// One row of the BIC table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicRow {
    pub lambda: f64,
    pub bic: f64,
    pub df: f64,
    pub rss: f64,
    pub ranks: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct BicSelection {
    pub lambda: f64,
    /// Rows in decreasing λ order.
    pub table: Vec<BicRow>,
    pub fit: FitReport,
}

/// Log-spaced grid from `λ_max` down to
/// `min(0.01 λ_max, 0.01 rate_lambda)`, in decreasing order.
pub fn default_lambda_grid(design: &RegressionDesign, penalty: Penalty) -> Vec<f64> {
    let hi = lambda_max(design, penalty);
    let lo = (DEFAULT_GRID_FLOOR * hi).min(RATE_GRID_FLOOR * rate_lambda(design));
    if !(hi > 0.0 && lo > 0.0) {
        return vec![hi.max(f64::MIN_POSITIVE)];
    }
    let n = DEFAULT_GRID_LEN;
    (0..n)
        .map(|i| hi * (lo / hi).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Rank of every penalized matricization of `a` at relative tolerance
/// [`BIC_RANK_TOL`].
pub fn fitted_ranks(a: &DenseTensor, penalty: Penalty) -> Vec<usize> {
    mode_maps(a.dims(), penalty)
        .iter()
        .map(|m| linalg::numerical_rank(&m.apply(a), BIC_RANK_TOL))
        .collect()
}

/// Degrees of freedom: the average over the penalized matricizations of
/// `s_k (rows_k + cols_k − s_k)`.
pub fn degrees_of_freedom(dims: &[usize], penalty: Penalty, ranks: &[usize]) -> f64 {
    let maps = mode_maps(dims, penalty);
    let total: usize = maps
        .iter()
        .zip(ranks)
        .map(|(m, &s)| s * (m.row_dim() + m.col_dim() - s))
        .sum();
    total as f64 / maps.len() as f64
}

fn bic_row(design: &RegressionDesign, diag: &AdmmDiagnostics) -> Result<BicRow> {
    let t = design.sample_size() as f64;
    let n = t * design.state_len() as f64;
    let b = design.transition_matrix(&diag.primary)?;
    let rss = design.rss(&b);
    let ranks = fitted_ranks(&diag.primary, diag.penalty);
    let df = degrees_of_freedom(&design.transition_dims(), diag.penalty, &ranks);
    let bic = n * (rss / n).max(f64::MIN_POSITIVE).ln() + t.ln() * df;
    Ok(BicRow {
        lambda: diag.lambda,
        bic,
        df,
        rss,
        ranks,
        iterations: diag.iterations,
        converged: diag.converged,
    })
}

/// Fits the penalized estimator along `grid` (largest λ first, each fit
/// warm-started from the previous one) and keeps the λ with the smallest
/// BIC; ties go to the larger λ.
pub fn select_lambda_bic(
    design: &RegressionDesign,
    grid: &[f64],
    penalty: Penalty,
    opts: &RegOptions,
    warm: Option<&AdmmWarmStart>,
) -> Result<BicSelection> {
    if grid.is_empty() {
        return Err(invalid("lambda grid must be nonempty"));
    }
    let start = Stopwatch::start();
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    lambdas.dedup();

    let mut state = match (warm, penalty) {
        (Some(w), _) => Some(w.clone()),
        (None, Penalty::Mn) => None,
        (None, _) => Some(mn_start(design, lambdas[0], opts)?),
    };
    let mut table = Vec::with_capacity(lambdas.len());
    let mut best: Option<(f64, AdmmDiagnostics)> = None;
    let mut iterations = 0;
    for &lambda in &lambdas {
        let diag = admm_solve(design, penalty, lambda, opts, state.as_ref())?;
        iterations += diag.iterations;
        let row = bic_row(design, &diag)?;
        state = Some(AdmmWarmStart::from_diagnostics(&diag));
        if best.as_ref().is_none_or(|(b, _)| row.bic < *b) {
            best = Some((row.bic, diag));
        }
        table.push(row);
    }
    let (_, diag) = best.expect("grid is nonempty");
    let lambda = diag.lambda;
    let mut fit = diag.into_report(penalty.name(), start);
    fit.iterations = iterations;
    fit.bic_table = Some(table.clone());
    Ok(BicSelection { lambda, table, fit })
}

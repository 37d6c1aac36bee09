//! Nuclear-norm regularized estimators (SN, MN, SSN) solved by ADMM, the
//! truncated SSN estimator, and BIC tuning of the penalty level.

mod admm;
mod bic;
mod truncate;

use crate::clock::Stopwatch;

use serde::{Deserialize, Serialize};

pub use admm::{admm_solve, auto_rho, AdmmDiagnostics, AdmmWarmStart};
pub use bic::{
    default_lambda_grid, degrees_of_freedom, fitted_ranks, select_lambda_bic, BicRow, BicSelection,
};
pub use truncate::{truncate_tssn, Truncation};

use crate::error::{invalid, Result};
use crate::least_squares::{FitReport, RegressionDesign};
use crate::linalg;
use crate::model::predictor_modes;
use crate::tensor::{DenseTensor, MatricizationMap};

/// The `2^{d-1}` square matricizations of a balanced order-`2d` tensor:
/// every set contains mode 0 and, for each `i` in `1..d`, exactly one of
/// `i` and `d + i`. The first set is `{0, …, d−1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SquareModeSets {
    d: usize,
    sets: Vec<Vec<usize>>,
}

impl SquareModeSets {
    pub fn new(d: usize) -> Self {
        assert!(d >= 1, "state order must be positive");
        let sets = (0..1usize << (d - 1))
            .map(|mask| {
                let mut set = vec![0];
                for i in 1..d {
                    set.push(if mask >> (i - 1) & 1 == 1 { d + i } else { i });
                }
                set.sort_unstable();
                set
            })
            .collect();
        Self { d, sets }
    }

    pub fn order(&self) -> usize {
        self.d
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }
}

/// Which family of matricizations the nuclear-norm penalty is summed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Penalty {
    /// All `2d` one-mode unfoldings.
    Sn,
    /// The single square matricization `A_[S_1]`.
    Mn,
    /// All `2^{d-1}` square matricizations.
    Ssn,
}

impl Penalty {
    pub fn mode_sets(self, d: usize) -> Vec<Vec<usize>> {
        match self {
            Penalty::Sn => (0..2 * d).map(|i| vec![i]).collect(),
            Penalty::Mn => vec![predictor_modes(d)],
            Penalty::Ssn => SquareModeSets::new(d).sets,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Penalty::Sn => "SN",
            Penalty::Mn => "MN",
            Penalty::Ssn => "SSN",
        }
    }
}

fn balanced_order(t: &DenseTensor) -> Result<usize> {
    let dims = t.dims();
    let d = dims.len() / 2;
    if dims.len() % 2 != 0 || dims[..d] != dims[d..] {
        return Err(invalid(format!(
            "expected a balanced order-2d tensor, got dims {dims:?}"
        )));
    }
    Ok(d)
}

fn penalty_norm(t: &DenseTensor, penalty: Penalty) -> Result<f64> {
    let d = balanced_order(t)?;
    penalty
        .mode_sets(d)
        .iter()
        .map(|s| Ok(linalg::nuclear_norm(&t.matricize(s)?)))
        .sum()
}

/// `Σ_k ‖A_[I_k]‖_*` over the square matricizations.
pub fn ssn_norm(t: &DenseTensor) -> Result<f64> {
    penalty_norm(t, Penalty::Ssn)
}

/// `Σ_i ‖A_(i)‖_*` over all one-mode unfoldings.
pub fn sn_norm(t: &DenseTensor) -> Result<f64> {
    penalty_norm(t, Penalty::Sn)
}

/// `‖A_[S_1]‖_*`.
pub fn mn_norm(t: &DenseTensor) -> Result<f64> {
    penalty_norm(t, Penalty::Mn)
}

/// How the penalty level is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    /// BIC selection over the given values.
    Grid(Vec<f64>),
    /// BIC selection over [`default_lambda_grid`].
    DefaultGrid,
    /// `λ = c · rate_lambda(design)`, see [`rate_lambda`].
    Rate(f64),
    /// `λ = c · unit_rate_lambda(design)`, see [`unit_rate_lambda`].
    UnitRate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegOptions {
    pub lambda: LambdaChoice,
    /// ADMM penalty parameter; `None` picks [`auto_rho`] from the data.
    pub rho: Option<f64>,
    /// Over-relaxation factor in `(0, 2)`; 1 is plain ADMM.
    pub relaxation: f64,
    pub max_iter: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// Truncation threshold for TSSN; `None` means `2^{d-1} λ / 4`.
    pub gamma: Option<f64>,
}

impl Default for RegOptions {
    fn default() -> Self {
        Self {
            lambda: LambdaChoice::DefaultGrid,
            rho: None,
            relaxation: 1.8,
            max_iter: 500,
            tol_primal: 1e-5,
            tol_dual: 1e-5,
            gamma: None,
        }
    }
}

impl RegOptions {
    pub fn fixed(lambda: f64) -> Self {
        Self {
            lambda: LambdaChoice::Fixed(lambda),
            ..Self::default()
        }
    }

    pub fn grid(values: Vec<f64>) -> Self {
        Self {
            lambda: LambdaChoice::Grid(values),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.lambda {
            LambdaChoice::Fixed(l) if !(*l > 0.0 && l.is_finite()) => {
                return Err(invalid(format!(
                    "lambda must be positive and finite, got {l}"
                )))
            }
            LambdaChoice::Grid(g) if g.is_empty() => {
                return Err(invalid("lambda grid must be nonempty"))
            }
            LambdaChoice::Grid(g) if g.iter().any(|l| !(*l > 0.0 && l.is_finite())) => {
                return Err(invalid("lambda grid values must be positive and finite"))
            }
            LambdaChoice::Rate(c) | LambdaChoice::UnitRate(c) if !(*c > 0.0 && c.is_finite()) => {
                return Err(invalid(format!(
                    "lambda rate constant must be positive, got {c}"
                )))
            }
            _ => {}
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(invalid(format!("rho must be positive, got {rho}")));
            }
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(invalid(format!(
                "relaxation must lie in (0, 2), got {}",
                self.relaxation
            )));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(invalid("ADMM tolerances must be positive"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(invalid(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// Penalty level above which the regularized estimate is (near) zero:
/// `(2/K) max_k ‖(T⁻¹ Σ_t Y_t ∘ Y_{t−1})_[I_k]‖_op` over the `K` penalized
/// matricizations, i.e. the loss gradient at `A = 0`.
pub fn lambda_max(design: &RegressionDesign, penalty: Penalty) -> f64 {
    let t = design.sample_size() as f64;
    let moment = design
        .tensor_from_matrix(&(design.cross() / t))
        .expect("design shapes are consistent");
    let sets = penalty.mode_sets(design.order());
    let k = sets.len() as f64;
    let max_op = sets
        .iter()
        .map(|s| linalg::operator_norm(&moment.matricize(s).expect("valid mode set")))
        .fold(0.0, f64::max);
    2.0 * max_op / k
}

/// Penalty level of the order of the statistical noise,
/// `2^{2−d} √(‖Σ̂_y‖_op p / T)` with `Σ̂_y` the sample covariance of the
/// predictors; assumes unit-scale innovations.
pub fn rate_lambda(design: &RegressionDesign) -> f64 {
    let t = design.sample_size() as f64;
    let p = design.state_len() as f64;
    let (_, top) = crate::linalg::min_max_eigenvalues(&(design.gram() / t));
    let k = (1u64 << (design.order() - 1)) as f64;
    2.0 / k * (top.max(0.0) * p / t).sqrt()
}

/// `2^{2−d} √(p / T)`: the noise rate with the dependence constant left to
/// the caller. Unlike [`rate_lambda`] it does not grow with the persistence
/// of the sample, which keeps λ stable across random models.
pub fn unit_rate_lambda(design: &RegressionDesign) -> f64 {
    let t = design.sample_size() as f64;
    let p = design.state_len() as f64;
    let k = (1u64 << (design.order() - 1)) as f64;
    2.0 / k * (p / t).sqrt()
}

/// Recommended truncation threshold `2^{d-1} λ / 4`.
pub fn default_gamma(lambda: f64, d: usize) -> f64 {
    (1u64 << (d - 1)) as f64 * lambda / 4.0
}

pub(crate) fn mode_maps(dims: &[usize], penalty: Penalty) -> Vec<MatricizationMap> {
    penalty
        .mode_sets(dims.len() / 2)
        .iter()
        .map(|s| MatricizationMap::new(dims, s).expect("valid mode set"))
        .collect()
}

/// Fits the penalized estimator, choosing λ per `opts.lambda`.
pub fn fit_penalized(
    design: &RegressionDesign,
    penalty: Penalty,
    opts: &RegOptions,
    warm: Option<&AdmmWarmStart>,
) -> Result<FitReport> {
    opts.validate()?;
    let fixed = match &opts.lambda {
        LambdaChoice::Fixed(l) => Some(*l),
        LambdaChoice::Rate(c) => Some(c * rate_lambda(design)),
        LambdaChoice::UnitRate(c) => Some(c * unit_rate_lambda(design)),
        _ => None,
    };
    match &opts.lambda {
        LambdaChoice::Fixed(_) | LambdaChoice::Rate(_) | LambdaChoice::UnitRate(_) => {
            let lambda = &fixed.expect("fixed penalty level");
            let start = Stopwatch::start();
            let init;
            let warm = match (warm, penalty) {
                (Some(w), _) => Some(w),
                (None, Penalty::Mn) => None,
                (None, _) => {
                    init = mn_start(design, *lambda, opts)?;
                    Some(&init)
                }
            };
            let out = admm_solve(design, penalty, *lambda, opts, warm)?;
            Ok(out.into_report(penalty.name(), start))
        }
        LambdaChoice::Grid(grid) => Ok(select_lambda_bic(design, grid, penalty, opts, warm)?.fit),
        LambdaChoice::DefaultGrid => {
            let grid = default_lambda_grid(design, penalty);
            Ok(select_lambda_bic(design, &grid, penalty, opts, warm)?.fit)
        }
    }
}

/// ADMM start at the MN estimate with zero multipliers.
pub(crate) fn mn_start(
    design: &RegressionDesign,
    lambda: f64,
    opts: &RegOptions,
) -> Result<AdmmWarmStart> {
    let mn = admm_solve(design, Penalty::Mn, lambda, opts, None)?;
    Ok(AdmmWarmStart::from_estimate(mn.primary, lambda))
}

pub fn fit_mn(design: &RegressionDesign, opts: &RegOptions) -> Result<FitReport> {
    fit_penalized(design, Penalty::Mn, opts, None)
}

pub fn fit_sn(design: &RegressionDesign, opts: &RegOptions) -> Result<FitReport> {
    fit_penalized(design, Penalty::Sn, opts, None)
}

pub fn fit_ssn(design: &RegressionDesign, opts: &RegOptions) -> Result<FitReport> {
    fit_penalized(design, Penalty::Ssn, opts, None)
}

/// SSN fit followed by per-mode singular value truncation at `opts.gamma`
/// (default `2^{d-1} λ / 4` with the selected λ).
pub fn fit_tssn(design: &RegressionDesign, opts: &RegOptions) -> Result<FitReport> {
    fit_tssn_warm(design, opts, None)
}

pub fn fit_tssn_warm(
    design: &RegressionDesign,
    opts: &RegOptions,
    warm: Option<&AdmmWarmStart>,
) -> Result<FitReport> {
    let report = fit_penalized(design, Penalty::Ssn, opts, warm)?;
    truncate_report(report, opts.gamma)
}

/// Turns an SSN fit into the TSSN fit, truncating at `gamma` or by default
/// at `2^{d-1} λ / 4`.
pub fn truncate_report(mut report: FitReport, gamma: Option<f64>) -> Result<FitReport> {
    let lambda = report
        .lambda
        .ok_or_else(|| invalid("truncation needs a penalized fit"))?;
    let start = Stopwatch::start();
    let d = report.estimate.order() / 2;
    let gamma = gamma.unwrap_or_else(|| default_gamma(lambda, d));
    let trunc = truncate_tssn(&report.estimate, gamma)?;
    report.elapsed += start.seconds();
    report.estimator = "TSSN".into();
    report.estimate = trunc.estimate;
    report.ranks = Some(trunc.ranks);
    report.tucker = Some(trunc.tucker);
    report.gamma = Some(gamma);
    report.rank_floored = trunc.floored;
    Ok(report)
}

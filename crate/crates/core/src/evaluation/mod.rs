//! Simulation studies, rolling forecasts and error metrics.

mod cases;
mod experiment;
mod forecast;
mod metrics;
mod scaling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::least_squares::{
    fit_ltr, fit_ols, fit_rrr, rrr_rank, AlsOptions, FitReport, RegressionDesign,
};
use crate::regularized::{fit_penalized, fit_tssn_warm, AdmmWarmStart, Penalty, RegOptions};

pub use cases::{experiment_case, ExperimentCase, EXPERIMENT_CASES};
pub use experiment::{
    run_experiment, summarize, write_results_csv, ExperimentSpec, ModelDraw, ResultRow, SummaryRow,
};
pub use forecast::{
    rolling_forecast, ForecastMethod, ForecastOptions, ForecastReport, ForecastRow,
};
pub use metrics::{in_sample_errors, prediction_errors};
pub use scaling::{
    error_scaling_study, scaling_case, ScalingCase, ScalingLambda, ScalingOptions, ScalingPoint,
    ScalingRow, DEFAULT_SCALING_RATE, SCALING_CASES,
};

/// The estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Estimator {
    Ols,
    Rrr,
    Ltr,
    Sn,
    Mn,
    Ssn,
    Tssn,
}

impl Estimator {
    pub const ALL: [Estimator; 7] = [
        Estimator::Ols,
        Estimator::Rrr,
        Estimator::Ltr,
        Estimator::Sn,
        Estimator::Mn,
        Estimator::Ssn,
        Estimator::Tssn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Ols => "OLS",
            Estimator::Rrr => "RRR",
            Estimator::Ltr => "LTR",
            Estimator::Sn => "SN",
            Estimator::Mn => "MN",
            Estimator::Ssn => "SSN",
            Estimator::Tssn => "TSSN",
        }
    }

    /// Whether the estimator needs the multilinear ranks.
    pub fn needs_ranks(self) -> bool {
        matches!(self, Estimator::Rrr | Estimator::Ltr)
    }

    pub fn penalty(self) -> Option<Penalty> {
        match self {
            Estimator::Sn => Some(Penalty::Sn),
            Estimator::Mn => Some(Penalty::Mn),
            Estimator::Ssn | Estimator::Tssn => Some(Penalty::Ssn),
            _ => None,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                invalid(format!(
                    "unknown estimator '{s}' (expected one of OLS, RRR, LTR, SN, MN, SSN, TSSN)"
                ))
            })
    }
}

/// Settings shared by every estimator call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitConfig {
    /// Multilinear ranks for RRR and LTR.
    pub ranks: Option<Vec<usize>>,
    pub reg: RegOptions,
    pub als: AlsOptions,
}

impl FitConfig {
    pub fn with_ranks(ranks: &[usize]) -> Self {
        Self {
            ranks: Some(ranks.to_vec()),
            ..Self::default()
        }
    }

    fn ranks_for(&self, estimator: Estimator) -> Result<&[usize]> {
        self.ranks
            .as_deref()
            .ok_or_else(|| invalid(format!("{estimator} needs multilinear ranks")))
    }
}

pub fn fit_estimator(
    design: &RegressionDesign,
    estimator: Estimator,
    config: &FitConfig,
) -> Result<FitReport> {
    fit_estimator_warm(design, estimator, config, None)
}

/// Like [`fit_estimator`], starting iterative solvers from `warm` when it
/// comes from a compatible earlier fit.
pub fn fit_estimator_warm(
    design: &RegressionDesign,
    estimator: Estimator,
    config: &FitConfig,
    warm: Option<&FitReport>,
) -> Result<FitReport> {
    match estimator {
        Estimator::Ols => fit_ols(design),
        Estimator::Rrr => fit_rrr(design, rrr_rank(config.ranks_for(estimator)?)),
        Estimator::Ltr => {
            let init = warm.filter(|w| w.estimator == "LTR").map(|w| &w.estimate);
            fit_ltr(design, config.ranks_for(estimator)?, init, &config.als)
        }
        Estimator::Sn | Estimator::Mn | Estimator::Ssn => {
            let penalty = estimator.penalty().expect("penalized");
            let ws = admm_warm(warm, penalty);
            fit_penalized(design, penalty, &config.reg, ws.as_ref())
        }
        Estimator::Tssn => {
            let ws = admm_warm(warm, Penalty::Ssn);
            fit_tssn_warm(design, &config.reg, ws.as_ref())
        }
    }
}

fn admm_warm(warm: Option<&FitReport>, penalty: Penalty) -> Option<AdmmWarmStart> {
    let diag = warm?.admm.as_ref()?;
    (diag.penalty == penalty).then(|| AdmmWarmStart::from_diagnostics(diag))
}

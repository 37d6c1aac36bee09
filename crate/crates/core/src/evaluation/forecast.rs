use serde::{Deserialize, Serialize};

use super::metrics::prediction_errors;
use super::{fit_estimator_warm, Estimator, FitConfig};
use crate::error::{invalid, Result};
use crate::least_squares::{FitReport, RegressionDesign};
use crate::model::TensorSeries;
use crate::regularized::LambdaChoice;
use crate::tensor::DenseTensor;

/// How the transition tensor is obtained at each origin.
#[derive(Debug, Clone)]
pub enum ForecastMethod {
    /// Refit the estimator on all data before the origin.
    Fit {
        estimator: Estimator,
        config: FitConfig,
    },
    /// Use a given transition tensor throughout.
    Fixed {
        label: String,
        transition: DenseTensor,
    },
    /// Forecast zero.
    Zero,
}

impl ForecastMethod {
    pub fn label(&self) -> String {
        match self {
            ForecastMethod::Fit { estimator, .. } => estimator.name().to_string(),
            ForecastMethod::Fixed { label, .. } => label.clone(),
            ForecastMethod::Zero => "zero".to_string(),
        }
    }

    fn min_origin(&self) -> usize {
        match self {
            ForecastMethod::Fit { .. } => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForecastOptions {
    /// BIC re-tuning period in origins; λ is held fixed in between.
    pub retune_every: usize,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self { retune_every: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    /// 1-based time index of the forecast target.
    pub origin: usize,
    pub l2: f64,
    pub linf: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub method: String,
    pub start_origin: usize,
    pub end_origin: usize,
    pub horizon: usize,
    pub rows: Vec<ForecastRow>,
    /// Origins whose fit failed; excluded from the averages.
    pub missing: Vec<usize>,
    pub mean_l2: Option<f64>,
    pub mean_linf: Option<f64>,
}

/// One-step rolling forecasts for origins `t = start_origin..=T` (1-based):
/// the model is fitted on observations `1..t−1` and `Y_t` is predicted
/// from `Y_{t−1}`.
///
/// Regularized fits are warm-started from the previous origin. When λ is
/// BIC-tuned it is re-selected every `retune_every` origins and held fixed
/// in between.
pub fn rolling_forecast(
    series: &TensorSeries,
    method: &ForecastMethod,
    start_origin: usize,
    opts: &ForecastOptions,
) -> Result<ForecastReport> {
    let t_len = series.len();
    if start_origin < method.min_origin() || start_origin > t_len {
        return Err(invalid(format!(
            "start origin {start_origin} must lie in {}..={t_len}",
            method.min_origin()
        )));
    }
    if opts.retune_every == 0 {
        return Err(invalid("retune period must be at least 1"));
    }
    let state = series.dims();
    let full: Vec<usize> = state.iter().chain(state).copied().collect();
    if let ForecastMethod::Fixed { transition, .. } = method {
        if transition.dims() != full.as_slice() {
            return Err(crate::error::Error::DimensionMismatch {
                expected: full,
                found: transition.dims().to_vec(),
            });
        }
    }
    if let ForecastMethod::Fit { config, .. } = method {
        config.reg.validate()?;
    }

    let zero = DenseTensor::zeros(&full);
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    let mut prev_fit: Option<FitReport> = None;
    let mut held_lambda: Option<f64> = None;

    for (i, t) in (start_origin..=t_len).enumerate() {
        let prev = series.get(t - 2);
        let actual = series.get(t - 1);
        let (transition, lambda) = match method {
            ForecastMethod::Zero => (&zero, None),
            ForecastMethod::Fixed { transition, .. } => (transition, None),
            ForecastMethod::Fit { estimator, config } => {
                let mut cfg = config.clone();
                let tuned = matches!(
                    cfg.reg.lambda,
                    LambdaChoice::Grid(_) | LambdaChoice::DefaultGrid
                );
                if tuned && estimator.penalty().is_some() && i % opts.retune_every != 0 {
                    if let Some(l) = held_lambda {
                        cfg.reg.lambda = LambdaChoice::Fixed(l);
                    }
                }
                let fit = series
                    .window(0, t - 1)
                    .and_then(|s| RegressionDesign::from_series(&s))
                    .and_then(|d| fit_estimator_warm(&d, *estimator, &cfg, prev_fit.as_ref()));
                match fit {
                    Ok(f) => {
                        held_lambda = f.lambda;
                        prev_fit = Some(f);
                    }
                    Err(_) => {
                        missing.push(t);
                        continue;
                    }
                }
                let f = prev_fit.as_ref().expect("just set");
                (&f.estimate, f.lambda)
            }
        };
        let (l2, linf) = prediction_errors(transition, prev, actual)?;
        rows.push(ForecastRow {
            origin: t,
            l2,
            linf,
            lambda,
        });
    }

    let n = rows.len() as f64;
    let mean = |f: fn(&ForecastRow) -> f64| {
        (!rows.is_empty()).then(|| rows.iter().map(f).sum::<f64>() / n)
    };
    Ok(ForecastReport {
        method: method.label(),
        start_origin,
        end_origin: t_len,
        horizon: 1,
        mean_l2: mean(|r| r.l2),
        mean_linf: mean(|r| r.linf),
        rows,
        missing,
    })
}

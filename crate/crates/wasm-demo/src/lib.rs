//! Browser bindings for the demo page in `www/`. Every function takes plain
//! numbers and returns a JSON string.

use serde_json::{json, Value};
use tensorar::evaluation::{
    fit_estimator, rolling_forecast, Estimator, FitConfig, ForecastMethod, ForecastOptions,
};
use tensorar::linalg::singular_values;
use tensorar::regularized::{
    fit_penalized, rate_lambda, truncate_tssn, Penalty, RegOptions, SquareModeSets,
};
use tensorar::{make_dgp, LrtarModel, RegressionDesign, TensorSeries};
use wasm_bindgen::prelude::*;

type Res<T> = Result<T, String>;

fn msg(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn export(r: Res<Value>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

fn simulate(
    p1: usize,
    p2: usize,
    rank: usize,
    t: usize,
    seed: u64,
) -> Res<(LrtarModel, TensorSeries)> {
    if p1 * p2 > 64 || t > 2000 {
        return Err(msg("demo limits: p1·p2 ≤ 64 and T ≤ 2000"));
    }
    let model = make_dgp(&[p1, p2], &[rank; 4], seed).map_err(msg)?;
    let series = model.simulate(t, 200, seed).map_err(msg)?;
    Ok((model, series))
}

fn error(model: &LrtarModel, a: &tensorar::DenseTensor) -> f64 {
    a.sub(model.transition())
        .map(|d| d.norm())
        .unwrap_or(f64::NAN)
}

/// Fits every estimator to one simulated series and reports the estimation
/// error `‖Â − A‖_F` of each.
pub fn compare_estimators_json(
    p1: usize,
    p2: usize,
    rank: usize,
    t: usize,
    seed: u64,
) -> Res<Value> {
    let (model, series) = simulate(p1, p2, rank, t, seed)?;
    let design = RegressionDesign::from_series(&series).map_err(msg)?;
    let config = FitConfig::with_ranks(&[rank; 4]);
    let rows: Vec<Value> = Estimator::ALL
        .iter()
        .map(|&e| match fit_estimator(&design, e, &config) {
            Ok(f) => json!({
                "estimator": e.name(),
                "error": error(&model, &f.estimate),
                "lambda": f.lambda,
                "ranks": f.ranks,
                "converged": f.converged,
            }),
            Err(err) => json!({ "estimator": e.name(), "failure": err.to_string() }),
        })
        .collect();
    Ok(json!({ "spectral_radius": model.spectral_radius(), "fits": rows }))
}

/// SSN at `λ = lambda_scale · rate` and its truncation at
/// `γ = gamma_scale · λ`: singular values of every square matricization,
/// the truncated multilinear ranks and both estimation errors.
pub fn threshold_explorer_json(
    p1: usize,
    p2: usize,
    rank: usize,
    t: usize,
    seed: u64,
    lambda_scale: f64,
    gamma_scale: f64,
) -> Res<Value> {
    if !(lambda_scale > 0.0) || !(gamma_scale >= 0.0) {
        return Err(msg("scales must be positive"));
    }
    let (model, series) = simulate(p1, p2, rank, t, seed)?;
    let design = RegressionDesign::from_series(&series).map_err(msg)?;
    let lambda = lambda_scale * rate_lambda(&design);
    let fit =
        fit_penalized(&design, Penalty::Ssn, &RegOptions::fixed(lambda), None).map_err(msg)?;
    let gamma = gamma_scale * lambda;
    let trunc = truncate_tssn(&fit.estimate, gamma).map_err(msg)?;
    let spectra: Vec<Vec<f64>> = SquareModeSets::new(2)
        .sets()
        .iter()
        .map(|s| {
            singular_values(&fit.estimate.matricize(s).unwrap())
                .iter()
                .copied()
                .collect()
        })
        .collect();
    let unfoldings: Vec<Vec<f64>> = (0..4)
        .map(|i| {
            singular_values(&fit.estimate.unfold(i).unwrap())
                .iter()
                .copied()
                .collect()
        })
        .collect();
    Ok(json!({
        "lambda": lambda,
        "gamma": gamma,
        "ssn_error": error(&model, &fit.estimate),
        "tssn_error": error(&model, &trunc.estimate),
        "ranks": trunc.ranks,
        "true_ranks": vec![rank; 4],
        "square_spectra": spectra,
        "unfolding_spectra": unfoldings,
        "converged": fit.converged,
    }))
}

/// One-step rolling forecast errors of a refitted estimator against the
/// zero forecast over the last `origins` time points.
pub fn forecast_race_json(
    p1: usize,
    p2: usize,
    rank: usize,
    t: usize,
    seed: u64,
    estimator: &str,
    origins: usize,
) -> Res<Value> {
    let (_, series) = simulate(p1, p2, rank, t, seed)?;
    let estimator: Estimator = estimator.parse().map_err(msg)?;
    if origins == 0 || origins + 3 > t {
        return Err(msg("origins must lie in 1..=T-3"));
    }
    let start = t - origins + 1;
    let mut config = FitConfig::with_ranks(&[rank; 4]);
    config.reg = RegOptions::fixed(rate_lambda(
        &RegressionDesign::from_series(&series).map_err(msg)?,
    ));
    let opts = ForecastOptions::default();
    let fitted = rolling_forecast(
        &series,
        &ForecastMethod::Fit { estimator, config },
        start,
        &opts,
    )
    .map_err(msg)?;
    let zero = rolling_forecast(&series, &ForecastMethod::Zero, start, &opts).map_err(msg)?;
    let l2 = |r: &tensorar::evaluation::ForecastReport| {
        r.rows
            .iter()
            .map(|x| json!([x.origin, x.l2]))
            .collect::<Vec<_>>()
    };
    Ok(json!({
        "estimator": estimator.name(),
        "fitted": l2(&fitted),
        "zero": l2(&zero),
        "mean_fitted": fitted.mean_l2,
        "mean_zero": zero.mean_l2,
        "missing": fitted.missing,
    }))
}

#[wasm_bindgen]
pub fn compare_estimators(
    p1: usize,
    p2: usize,
    rank: usize,
    t: usize,
    seed: u64,
) -> Result<String, JsError> {
    export(compare_estimators_json(p1, p2, rank, t, seed))
}

#[wasm_bindgen]
pub fn threshold_explorer(
    p1: usize,
    p2: usize,
    rank: usize,
    t: usize,
    seed: u64,
    lambda_scale: f64,
    gamma_scale: f64,
) -> Result<String, JsError> {
    export(threshold_explorer_json(
        p1,
        p2,
        rank,
        t,
        seed,
        lambda_scale,
        gamma_scale,
    ))
}

#[wasm_bindgen]
pub fn forecast_race(
    p1: usize,
    p2: usize,
    rank: usize,
    t: usize,
    seed: u64,
    estimator: &str,
    origins: usize,
) -> Result<String, JsError> {
    export(forecast_race_json(
        p1, p2, rank, t, seed, estimator, origins,
    ))
}

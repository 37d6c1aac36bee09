use crate::error::{Error, Result};
use crate::model::TensorSeries;
use crate::tensor::DenseTensor;

fn check_shape(transition: &DenseTensor, state: &[usize]) -> Result<()> {
    let expected: Vec<usize> = state.iter().chain(state).copied().collect();
    if transition.dims() != expected.as_slice() {
        return Err(Error::DimensionMismatch {
            expected,
            found: transition.dims().to_vec(),
        });
    }
    Ok(())
}

/// `(ℓ2, ℓ∞)` norms of `actual − <A, prev>`.
pub fn prediction_errors(
    transition: &DenseTensor,
    prev: &DenseTensor,
    actual: &DenseTensor,
) -> Result<(f64, f64)> {
    check_shape(transition, actual.dims())?;
    let forecast = transition.generalized_inner(prev)?;
    let mut sq = 0.0;
    let mut max: f64 = 0.0;
    for (f, y) in forecast.data().iter().zip(actual.data()) {
        let e = y - f;
        sq += e * e;
        max = max.max(e.abs());
    }
    Ok((sq.sqrt(), max))
}

/// Mean one-step `(ℓ2, ℓ∞)` errors of a fitted transition tensor over
/// `t = 2..T`.
pub fn in_sample_errors(transition: &DenseTensor, series: &TensorSeries) -> Result<(f64, f64)> {
    check_shape(transition, series.dims())?;
    if series.len() < 2 {
        return Err(crate::error::invalid("need at least two observations"));
    }
    let obs = series.observations();
    let (mut l2, mut linf) = (0.0, 0.0);
    for w in obs.windows(2) {
        let (a, b) = prediction_errors(transition, &w[0], &w[1])?;
        l2 += a;
        linf += b;
    }
    let n = (obs.len() - 1) as f64;
    Ok((l2 / n, linf / n))
}

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg;
use crate::tensor::DenseTensor;
use crate::tucker::{project, TuckerDecomposition};

#[derive(Debug, Clone)]
pub struct Truncation {
    pub estimate: DenseTensor,
    pub tucker: TuckerDecomposition,
    pub ranks: Vec<usize>,
    /// Some mode had no singular value above the threshold and was kept at rank 1.
    pub floored: bool,
}

/// Keeps, for every mode `i`, the left singular vectors of `A_(i)` whose
/// singular values exceed `gamma`, and projects `A` onto their span.
pub fn truncate_tssn(estimate: &DenseTensor, gamma: f64) -> Result<Truncation> {
    if !(gamma >= 0.0) {
        return Err(invalid(format!(
            "truncation threshold must be nonnegative, got {gamma}"
        )));
    }
    let mut floored = false;
    let mut factors: Vec<DMatrix<f64>> = Vec::with_capacity(estimate.order());
    for mode in 0..estimate.order() {
        let s = linalg::svd(&estimate.unfold(mode)?);
        let mut r = s.singular_values.iter().filter(|&&v| v > gamma).count();
        if r == 0 {
            r = 1;
            floored = true;
        }
        factors.push(s.u.columns(0, r).into_owned());
    }
    let core = project(estimate, &factors)?;
    let tucker = TuckerDecomposition::new(core, factors)?;
    Ok(Truncation {
        estimate: tucker.reconstruct(),
        ranks: tucker.ranks().to_vec(),
        tucker,
        floored,
    })
}

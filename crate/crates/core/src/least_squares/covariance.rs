use nalgebra::DMatrix;

use super::RegressionDesign;
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::model::{response_modes, LrtarModel};
use crate::tensor::{kron_reverse, matricization_permutation};
use crate::tucker::TuckerDecomposition;

/// Singular values below this fraction of the largest are dropped by the pseudo-inverse.
const PINV_TOL: f64 = 1e-10;

/// Jacobian of `vec(A_[S_2])` with respect to
/// `(vec(G_[S_2]), vec(U_1), …, vec(U_{2d}))`.
pub fn jacobian(tucker: &TuckerDecomposition) -> Result<DMatrix<f64>> {
    let order = tucker.core.order();
    if order % 2 != 0 {
        return Err(invalid("transition Tucker form must have even order"));
    }
    let d = order / 2;
    let u = &tucker.factors;
    let dims = tucker.dims();
    let p2: usize = dims.iter().product();
    let s2 = response_modes(d);

    let refs: Vec<&DMatrix<f64>> = u.iter().collect();
    let pred = kron_reverse(&refs[..d]);
    let resp = kron_reverse(&refs[d..]);
    let mut blocks = vec![pred.kronecker(&resp)];

    for i in 0..order {
        let others: Vec<&DMatrix<f64>> = (0..order).filter(|&j| j != i).map(|j| refs[j]).collect();
        let g_i = tucker.core.unfold(i)?;
        let lead = kron_reverse(&others) * g_i.transpose();
        let unperm = lead.kronecker(&DMatrix::<f64>::identity(dims[i], dims[i]));
        let perm = matricization_permutation(&dims, &[i], &s2)?;
        let block = DMatrix::from_fn(p2, unperm.ncols(), |q, c| unperm[(perm[q], c)]);
        blocks.push(block);
    }
    let ncols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut h = DMatrix::zeros(p2, ncols);
    let mut col = 0;
    for b in blocks {
        h.columns_mut(col, b.ncols()).copy_from(&b);
        col += b.ncols();
    }
    Ok(h)
}

/// Plug-in asymptotic covariance of `√T vec((Â − A)_[S_2])` for the
/// low-Tucker-rank estimator: `H (Hᵀ J H)^† Hᵀ` with `J = Σ̂_y ⊗ Σ̂_e⁻¹`.
///
/// `Σ̂_e` is the residual covariance of the model on the design and `Σ̂_y`
/// the sample second moment of the predictors.
pub fn asymptotic_covariance(
    model: &LrtarModel,
    design: &RegressionDesign,
) -> Result<DMatrix<f64>> {
    let tucker = model
        .tucker()
        .ok_or_else(|| invalid("asymptotic covariance needs a Tucker-form model"))?;
    if model.state_dims() != design.dims() {
        return Err(Error::DimensionMismatch {
            expected: design.dims().to_vec(),
            found: model.state_dims().to_vec(),
        });
    }
    let t = design.sample_size() as f64;
    let resid = design.residuals(&model.transition_matrix());
    let sigma_e = resid.transpose() * &resid / t;
    let sigma_y = design.gram() / t;
    for (name, m) in [
        ("residual covariance", &sigma_e),
        ("predictor covariance", &sigma_y),
    ] {
        let (lo, hi) = linalg::min_max_eigenvalues(m);
        if lo <= 0.0 {
            return Err(Error::Numerical(format!(
                "{name} is not positive definite (eigenvalues in [{lo:e}, {hi:e}])"
            )));
        }
    }
    let sigma_e_inv = sigma_e
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("residual covariance Cholesky failed".into()))?
        .inverse();
    let j = sigma_y.kronecker(&sigma_e_inv);
    let h = jacobian(tucker)?;
    let info = h.transpose() * &j * &h;
    let cov = &h * linalg::pinv_symmetric(&info, PINV_TOL) * h.transpose();
    Ok((&cov + cov.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_dgp;
    use crate::tensor::DenseTensor;
    use crate::tucker::hosvd;

    /// Directional derivative by multilinearity: replacing one block with a
    /// basis element gives the exact derivative column.
    fn jacobian_oracle(t: &TuckerDecomposition) -> DMatrix<f64> {
        let d = t.core.order() / 2;
        let s2 = response_modes(d);
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let core_dims = t.core.dims().to_vec();
        let gmap = crate::tensor::MatricizationMap::new(&core_dims, &s2).unwrap();
        for c in 0..t.core.len() {
            let mut e = DMatrix::zeros(gmap.row_dim(), gmap.col_dim());
            e.as_mut_slice()[c] = 1.0;
            let core = gmap.invert(&e).unwrap();
            let tt = TuckerDecomposition::new(core, t.factors.clone()).unwrap();
            cols.push(tt.reconstruct().matricize(&s2).unwrap().as_slice().to_vec());
        }
        for i in 0..t.factors.len() {
            let (rows, rcols) = t.factors[i].shape();
            for c in 0..rows * rcols {
                let mut f = t.factors.clone();
                f[i] = DMatrix::zeros(rows, rcols);
                f[i].as_mut_slice()[c] = 1.0;
                let tt = TuckerDecomposition::new(t.core.clone(), f).unwrap();
                cols.push(tt.reconstruct().matricize(&s2).unwrap().as_slice().to_vec());
            }
        }
        let n = cols[0].len();
        DMatrix::from_fn(n, cols.len(), |q, c| cols[c][q])
    }

    #[test]
    fn jacobian_matches_multilinear_oracle() {
        let model = make_dgp(&[3, 2], &[2, 1, 2, 2], 4).unwrap();
        let h = jacobian(model.tucker().unwrap()).unwrap();
        let oracle = jacobian_oracle(model.tucker().unwrap());
        assert_eq!(h.shape(), oracle.shape());
        assert!((h - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn full_rank_covariance_is_inverse_information() {
        let a = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, -0.2, 0.3]);
        let noise = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
        let model = LrtarModel::new(DenseTensor::from_matrix(&a), noise).unwrap();
        let tucker = hosvd(model.transition(), &[2, 2]).unwrap();
        let model = model.with_tucker(tucker).unwrap();
        let series = model.simulate(400, 50, 9).unwrap();
        let design = RegressionDesign::from_series(&series).unwrap();
        let cov = asymptotic_covariance(&model, &design).unwrap();

        let t = design.sample_size() as f64;
        let resid = design.residuals(&model.transition_matrix());
        let se = resid.transpose() * &resid / t;
        let sy = design.gram() / t;
        let expect = sy.try_inverse().unwrap().kronecker(&se);
        assert!((&cov - &expect).abs().max() < 1e-8 * expect.abs().max());
        assert!((&cov - cov.transpose()).abs().max() < 1e-10);
        let (lo, _) = linalg::min_max_eigenvalues(&cov);
        assert!(lo >= -1e-10);
    }

    #[test]
    fn requires_tucker_form() {
        let model = LrtarModel::new(DenseTensor::zeros(&[2, 2]), DMatrix::identity(2, 2)).unwrap();
        let series = LrtarModel::new(
            DenseTensor::from_matrix(&(DMatrix::identity(2, 2) * 0.5)),
            DMatrix::identity(2, 2),
        )
        .unwrap()
        .simulate(20, 0, 1)
        .unwrap();
        let design = RegressionDesign::from_series(&series).unwrap();
        assert!(asymptotic_covariance(&model, &design).is_err());
    }
}

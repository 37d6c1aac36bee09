//! Tucker decompositions and the truncated HOSVD.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::tensor::DenseTensor;

/// Default relative tolerance for multilinear rank detection.
pub const RANK_TOL: f64 = 1e-8;

/// `core ×_1 factors[0] ⋯ ×_d factors[d-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerDecomposition {
    pub core: DenseTensor,
    pub factors: Vec<DMatrix<f64>>,
}

impl TuckerDecomposition {
    pub fn new(core: DenseTensor, factors: Vec<DMatrix<f64>>) -> Result<Self> {
        if factors.len() != core.order() {
            return Err(invalid(format!(
                "{} factors supplied for an order-{} core",
                factors.len(),
                core.order()
            )));
        }
        for (i, (f, &r)) in factors.iter().zip(core.dims()).enumerate() {
            if f.ncols() != r {
                return Err(invalid(format!(
                    "factor {i} has {} columns but core dim is {r}",
                    f.ncols()
                )));
            }
        }
        Ok(Self { core, factors })
    }

    pub fn ranks(&self) -> &[usize] {
        self.core.dims()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    pub fn reconstruct(&self) -> DenseTensor {
        self.core
            .multi_mode_product(self.factors.iter().enumerate())
            .expect("factor shapes validated at construction")
    }

    /// Largest deviation of any factor Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        self.factors
            .iter()
            .map(|u| {
                let g = u.transpose() * u;
                (g - DMatrix::identity(u.ncols(), u.ncols())).abs().max()
            })
            .fold(0.0, f64::max)
    }
}

/// Truncated HOSVD: factor `i` holds the top `ranks[i]` left singular vectors
/// of the mode-`i` unfolding, and the core is `t ×_i U_iᵀ`.
pub fn hosvd(t: &DenseTensor, ranks: &[usize]) -> Result<TuckerDecomposition> {
    if ranks.len() != t.order() {
        return Err(Error::DimensionMismatch {
            expected: t.dims().to_vec(),
            found: ranks.to_vec(),
        });
    }
    let mut factors = Vec::with_capacity(ranks.len());
    for (mode, (&r, &p)) in ranks.iter().zip(t.dims()).enumerate() {
        if r == 0 || r > p {
            return Err(invalid(format!(
                "rank {r} for mode {mode} must lie in 1..={p}"
            )));
        }
        factors.push(linalg::leading_left_singular_vectors(&t.unfold(mode)?, r));
    }
    let core = project(t, &factors)?;
    TuckerDecomposition::new(core, factors)
}

/// `t ×_1 U_1ᵀ ⋯ ×_d U_dᵀ`.
pub fn project(t: &DenseTensor, factors: &[DMatrix<f64>]) -> Result<DenseTensor> {
    let transposed: Vec<DMatrix<f64>> = factors.iter().map(|u| u.transpose()).collect();
    t.multi_mode_product(transposed.iter().enumerate())
}

/// Matrix ranks of every one-mode unfolding, counting singular values above
/// `tol · σ_max` of that unfolding.
pub fn multilinear_ranks(t: &DenseTensor, tol: f64) -> Vec<usize> {
    (0..t.order())
        .map(|mode| linalg::numerical_rank(&t.unfold(mode).expect("mode in range"), tol))
        .collect()
}

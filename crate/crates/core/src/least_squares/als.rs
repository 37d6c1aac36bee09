use crate::clock::Stopwatch;

use nalgebra::DMatrix;

use super::{rrr_matrix, rrr_rank, FitReport, RegressionDesign};
use crate::error::{invalid, Error, Result};
use crate::linalg::solve_ridge;
use crate::model::response_modes;
use crate::regularized::{self, Penalty, RegOptions};
use crate::tensor::{advance, dematricize, kron_reverse, DenseTensor};
use crate::tucker::{hosvd, TuckerDecomposition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlsOptions {
    /// Stop when the relative change of the objective over a sweep falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge added to every block's normal equations, relative to their mean diagonal.
    pub ridge: f64,
    /// Record the objective after every block update in `FitReport::block_trace`.
    pub record_blocks: bool,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            ridge: 1e-10,
            record_blocks: false,
        }
    }
}

struct AlsState<'a> {
    design: &'a RegressionDesign,
    /// Predictors as columns (`p × T`), so each observation is contiguous.
    x_cols: DMatrix<f64>,
    y_cols: DMatrix<f64>,
    dims: Vec<usize>,
    ranks: Vec<usize>,
    core: DenseTensor,
    factors: Vec<DMatrix<f64>>,
    ridge: f64,
}

impl AlsState<'_> {
    fn d(&self) -> usize {
        self.dims.len()
    }

    fn predictor_kron(&self) -> DMatrix<f64> {
        let refs: Vec<&DMatrix<f64>> = self.factors[..self.d()].iter().collect();
        kron_reverse(&refs)
    }

    fn response_kron(&self) -> DMatrix<f64> {
        let refs: Vec<&DMatrix<f64>> = self.factors[self.d()..].iter().collect();
        kron_reverse(&refs)
    }

    /// `G_[S_2]`, of shape `∏r_{d+i} × ∏r_i`.
    fn core_matrix(&self) -> DMatrix<f64> {
        self.core
            .matricize(&response_modes(self.d()))
            .expect("core has order 2d")
    }

    fn transition_matrix(&self) -> DMatrix<f64> {
        self.response_kron() * self.core_matrix() * self.predictor_kron().transpose()
    }

    fn objective(&self) -> f64 {
        self.design.loss(&self.transition_matrix())
    }

    /// Least-squares update of predictor factor `U_k`, `k < d`.
    fn update_predictor(&mut self, k: usize) -> Result<()> {
        let d = self.d();
        let w = self.response_kron() * self.core_matrix();
        let wtw = w.transpose() * &w;
        let wty = w.transpose() * &self.y_cols;

        let rdims = &self.ranks[..d];
        let (pk, rk) = (self.dims[k], self.ranks[k]);
        let r1: usize = rdims.iter().product();
        let n = pk * rk;

        // Offsets of the non-k modes in the projected space (dims r_i) and in
        // the partially projected space (mode k kept at p_k).
        let mut zdims = rdims.to_vec();
        zdims[k] = pk;
        let stride = |dims: &[usize], i: usize| -> usize { dims[..i].iter().product() };
        let (rs_k, zs_k) = (stride(rdims, k), stride(&zdims, k));
        let mut other_dims = rdims.to_vec();
        other_dims[k] = 1;
        let mut others = Vec::new();
        let mut idx = vec![0; d];
        loop {
            let mut ro = 0;
            let mut zo = 0;
            for i in 0..d {
                ro += idx[i] * stride(rdims, i);
                zo += idx[i] * stride(&zdims, i);
            }
            others.push((ro, zo));
            if !advance(&mut idx, &other_dims) {
                break;
            }
        }

        let projections: Vec<(usize, DMatrix<f64>)> = (0..d)
            .filter(|&i| i != k)
            .map(|i| (i, self.factors[i].transpose()))
            .collect();
        let mut normal = DMatrix::zeros(n, n);
        let mut rhs = DMatrix::zeros(n, 1);
        let mut ct = DMatrix::zeros(r1, n);
        for t in 0..self.x_cols.ncols() {
            let y_prev = DenseTensor::new(
                self.dims.clone(),
                self.x_cols.column(t).iter().copied().collect(),
            )?;
            let z = y_prev.multi_mode_product(projections.iter().map(|(i, m)| (*i, m)))?;
            ct.fill(0.0);
            for b in 0..rk {
                for a in 0..pk {
                    let c = a + pk * b;
                    for &(ro, zo) in &others {
                        ct[(ro + b * rs_k, c)] = z.data()[zo + a * zs_k];
                    }
                }
            }
            normal += ct.transpose() * (&wtw * &ct);
            rhs += ct.transpose() * wty.column(t);
        }
        let theta = solve_ridge(&normal, &rhs, self.ridge)?;
        self.factors[k] = DMatrix::from_column_slice(pk, rk, theta.as_slice());
        Ok(())
    }

    /// Least-squares update of response factor `U_{d+k}`.
    fn update_response(&mut self, k: usize) -> Result<()> {
        let d = self.d();
        let resp_ranks = self.ranks[d..].to_vec();
        let m_all = self.core_matrix() * (self.predictor_kron().transpose() * &self.x_cols);
        let lifts: Vec<(usize, &DMatrix<f64>)> = (0..d)
            .filter(|&i| i != k)
            .map(|i| (i, &self.factors[d + i]))
            .collect();
        let r = resp_ranks[k];
        let pk = self.dims[k];
        let mut s = DMatrix::zeros(r, r);
        let mut cross = DMatrix::zeros(pk, r);
        for t in 0..m_all.ncols() {
            let m_t = DenseTensor::new(
                resp_ranks.clone(),
                m_all.column(t).iter().copied().collect(),
            )?;
            let n_k = m_t.multi_mode_product(lifts.iter().copied())?.unfold(k)?;
            let y_t = DenseTensor::new(
                self.dims.clone(),
                self.y_cols.column(t).iter().copied().collect(),
            )?;
            let y_k = y_t.unfold(k)?;
            s += &n_k * n_k.transpose();
            cross += y_k * n_k.transpose();
        }
        let ut = solve_ridge(&s, &cross.transpose(), self.ridge)?;
        self.factors[d + k] = ut.transpose();
        Ok(())
    }

    fn update_core(&mut self) -> Result<()> {
        let d = self.d();
        let l = self.predictor_kron();
        let k = self.response_kron();
        let z = l.transpose() * &self.x_cols;
        let szz = &z * z.transpose();
        let ktk = k.transpose() * &k;
        let rhs_mat = k.transpose() * (&self.y_cols * z.transpose());
        let normal = szz.kronecker(&ktk);
        let rhs = DMatrix::from_column_slice(rhs_mat.len(), 1, rhs_mat.as_slice());
        let theta = solve_ridge(&normal, &rhs, self.ridge)?;
        let g = DMatrix::from_column_slice(rhs_mat.nrows(), rhs_mat.ncols(), theta.as_slice());
        self.core = dematricize(&g, &self.ranks, &response_modes(d))?;
        Ok(())
    }
}

fn validate_ranks(design: &RegressionDesign, ranks: &[usize]) -> Result<()> {
    let dims = design.dims();
    let d = dims.len();
    if ranks.len() != 2 * d {
        return Err(invalid(format!(
            "need {} ranks for state dims {dims:?}, got {ranks:?}",
            2 * d
        )));
    }
    for (i, &r) in ranks.iter().enumerate() {
        let p = dims[i % d];
        if r == 0 || r > p {
            return Err(invalid(format!(
                "rank {r} at position {i} must lie in 1..={p}"
            )));
        }
    }
    Ok(())
}

/// Starting point: RRR when the Gram matrix is invertible, otherwise an
/// MN-regularized estimate.
fn default_init(design: &RegressionDesign, ranks: &[usize]) -> Result<DenseTensor> {
    match rrr_matrix(design, rrr_rank(ranks)) {
        Ok(b) => design.tensor_from_matrix(&b),
        Err(Error::RankDeficient { .. }) => {
            let lambda = 0.1 * regularized::lambda_max(design, Penalty::Mn);
            let fit = regularized::fit_mn(design, &RegOptions::fixed(lambda))?;
            Ok(fit.estimate)
        }
        Err(e) => Err(e),
    }
}

/// Low-Tucker-rank estimator via alternating least squares over the
/// predictor factors, the response factors and the core.
///
/// The factors are left unconstrained during the sweeps; the returned
/// estimate is re-normalized by a HOSVD with sign-fixed factors.
pub fn fit_ltr(
    design: &RegressionDesign,
    ranks: &[usize],
    init: Option<&DenseTensor>,
    opts: &AlsOptions,
) -> Result<FitReport> {
    let start = Stopwatch::start();
    validate_ranks(design, ranks)?;
    let init = match init {
        Some(a) => {
            design.transition_matrix(a)?;
            a.clone()
        }
        None => default_init(design, ranks)?,
    };
    let h = hosvd(&init, ranks)?;
    let mut state = AlsState {
        design,
        x_cols: design.predictor().transpose(),
        y_cols: design.response().transpose(),
        dims: design.dims().to_vec(),
        ranks: ranks.to_vec(),
        core: h.core,
        factors: h.factors,
        ridge: opts.ridge,
    };
    let d = state.d();
    let floor = 1e-12 * design.response_scale();

    let mut prev = state.objective();
    let mut trace = vec![prev];
    let mut blocks = if opts.record_blocks {
        vec![prev]
    } else {
        Vec::new()
    };
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_iter {
        sweeps += 1;
        for k in 0..d {
            state.update_predictor(k)?;
            if opts.record_blocks {
                blocks.push(state.objective());
            }
        }
        for k in 0..d {
            state.update_response(k)?;
            if opts.record_blocks {
                blocks.push(state.objective());
            }
        }
        state.update_core()?;
        let obj = state.objective();
        if opts.record_blocks {
            blocks.push(obj);
        }
        trace.push(obj);
        if !obj.is_finite() {
            return Err(Error::Numerical("ALS objective diverged".into()));
        }
        if (prev - obj).abs() <= opts.tol * prev.max(floor) {
            converged = true;
            break;
        }
        prev = obj;
    }

    let raw = TuckerDecomposition::new(state.core, state.factors)?.reconstruct();
    let tucker = hosvd(&raw, ranks)?;
    let estimate = tucker.reconstruct();
    Ok(FitReport {
        estimator: "LTR".into(),
        estimate,
        ranks: Some(ranks.to_vec()),
        tucker: Some(tucker),
        objective_trace: trace,
        block_trace: blocks,
        iterations: sweeps,
        converged,
        elapsed: start.seconds(),
        lambda: None,
        gamma: None,
        rank_floored: false,
        bic_table: None,
        admm: None,
    })
}

//! Dense linear-algebra helpers on top of nalgebra: sign-normalized SVD,
//! nuclear-norm proximal map, pseudo-inverses and spectral quantities.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Thin SVD with singular values sorted in decreasing order and the first
/// nonzero entry of every left singular vector made positive.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

/// Entries at or below this magnitude (relative to the column max) are
/// treated as zero when choosing a singular vector's sign.
const SIGN_TOL: f64 = 1e-12;

/// Flips column `j` of `u` (and row `j` of `v_t`) so the first nonzero entry of the column is positive.
fn normalize_signs(u: &mut DMatrix<f64>, v_t: Option<&mut DMatrix<f64>>) {
    let mut flips = Vec::new();
    for j in 0..u.ncols() {
        let col = u.column(j);
        let scale = col.amax();
        if scale == 0.0 {
            continue;
        }
        if let Some(first) = col.iter().find(|x| x.abs() > SIGN_TOL * scale) {
            if *first < 0.0 {
                flips.push(j);
            }
        }
    }
    for &j in &flips {
        u.column_mut(j).neg_mut();
    }
    if let Some(v_t) = v_t {
        for &j in &flips {
            v_t.row_mut(j).neg_mut();
        }
    }
}

/// Column-wise sign normalization for a matrix of orthonormal columns.
pub fn normalize_column_signs(u: &mut DMatrix<f64>) {
    normalize_signs(u, None);
}

pub fn svd(m: &DMatrix<f64>) -> Svd {
    let s = m.clone().svd(true, true);
    let (u, sv, v_t) = (s.u.unwrap(), s.singular_values, s.v_t.unwrap());
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let mut u = u.select_columns(&order);
    let mut v_t = v_t.select_rows(&order);
    let singular_values = DVector::from_iterator(order.len(), order.iter().map(|&i| sv[i]));
    normalize_signs(&mut u, Some(&mut v_t));
    Svd {
        u,
        singular_values,
        v_t,
    }
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(sv)
}

/// Top-`r` left singular vectors (sign-normalized).
pub fn leading_left_singular_vectors(m: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let s = svd(m);
    s.u.columns(0, r).into_owned()
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().sum()
}

pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Number of singular values exceeding `rel_tol * σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Proximal map of `tau * ||·||_*`: soft-thresholds the singular values.
pub fn soft_threshold_svd(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    soft_threshold_svd_with_rank(m, tau).0
}

/// Like [`soft_threshold_svd`], also returning the rank of the result.
pub fn soft_threshold_svd_with_rank(m: &DMatrix<f64>, tau: f64) -> (DMatrix<f64>, usize) {
    assert!(tau >= 0.0, "threshold must be nonnegative");
    if tau == 0.0 {
        return (m.clone(), numerical_rank(m, 0.0));
    }
    let s = m.clone().svd(true, true);
    let (u, sv, v_t) = (s.u.unwrap(), s.singular_values, s.v_t.unwrap());
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    let mut rank = 0;
    for j in 0..sv.len() {
        let shrunk = sv[j] - tau;
        if shrunk > 0.0 {
            rank += 1;
            out.ger(shrunk, &u.column(j), &v_t.row(j).transpose(), 1.0);
        }
    }
    (out, rank)
}

/// Moore–Penrose inverse of a symmetric matrix, discarding eigenvalues
/// whose magnitude is below `rel_tol * max |λ|`.
pub fn pinv_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.amax();
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    if lmax == 0.0 {
        return out;
    }
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > rel_tol * lmax {
            let v = eig.eigenvectors.column(j);
            out.ger(1.0 / l, &v, &v, 1.0);
        }
    }
    out
}

/// Symmetric square root of a positive-definite matrix.
pub fn sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    if let Some(l) = eig.eigenvalues.iter().find(|&&l| l <= 0.0) {
        return Err(Error::Numerical(format!(
            "matrix is not positive definite (eigenvalue {l:e})"
        )));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

pub fn min_max_eigenvalues(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Solves `(a + ridge·s·I) x = b` for symmetric PSD `a`, where `s` is the
/// mean diagonal of `a`.
pub fn solve_ridge(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (a.trace() / n as f64).max(f64::MIN_POSITIVE);
    let mut reg = a.clone();
    for i in 0..n {
        reg[(i, i)] += ridge * scale;
    }
    match Cholesky::new(reg.clone()) {
        Some(ch) => Ok(ch.solve(b)),
        None => {
            let pinv = pinv_symmetric(&reg, 1e-14);
            Ok(pinv * b)
        }
    }
}

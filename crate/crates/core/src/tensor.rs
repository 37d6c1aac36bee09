//! Dense tensors stored in first-index-fastest order, and the matricization
//! machinery built on top of them.
//!
//! Modes are zero-based throughout the API: a tensor of order `d` has modes
//! `0..d`. The flat buffer of a tensor is its vectorization, so a 2nd-order
//! tensor shares its layout with a column-major `DMatrix`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(invalid("tensor order must be at least 1"));
    }
    if dims.iter().any(|&p| p == 0) {
        return Err(invalid(format!(
            "tensor dims must be positive, got {dims:?}"
        )));
    }
    Ok(dims.iter().product())
}

/// Advances a first-index-fastest multi-index; returns false after the last one.
#[inline]
pub(crate) fn advance(index: &mut [usize], dims: &[usize]) -> bool {
    for (i, p) in index.iter_mut().zip(dims) {
        *i += 1;
        if *i < *p {
            return true;
        }
        *i = 0;
    }
    false
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if data.len() != len {
            return Err(invalid(format!(
                "data length {} does not match dims {dims:?} (expected {len})",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let len = check_dims(dims).expect("invalid tensor dims");
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len = check_dims(dims).expect("invalid tensor dims");
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0; dims.len()];
        loop {
            data.push(f(&idx));
            if !advance(&mut idx, dims) {
                break;
            }
        }
        Self {
            dims: dims.to_vec(),
            data,
        }
    }

    /// Wraps a vector as a tensor of the given dims.
    pub fn from_vector(dims: &[usize], v: &DVector<f64>) -> Result<Self> {
        Self::new(dims.to_vec(), v.as_slice().to_vec())
    }

    /// A 2nd-order tensor with the entries of `m`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            dims: vec![1],
            data: vec![value],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// vec(self) as a column vector.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data)
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (i, p) in index.iter().zip(&self.dims) {
            debug_assert!(i < p);
            off += i * stride;
            stride *= p;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Full contraction `<self, other>` of two equal-shape tensors.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims.clone(),
                found: other.dims.clone(),
            });
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_same_dims(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    /// Multi-mode matricization with the given modes collapsed into rows.
    pub fn matricize(&self, row_modes: &[usize]) -> Result<DMatrix<f64>> {
        Ok(MatricizationMap::new(&self.dims, row_modes)?.apply(self))
    }

    /// One-mode matricization `t_(mode)`.
    pub fn unfold(&self, mode: usize) -> Result<DMatrix<f64>> {
        self.matricize(&[mode])
    }

    /// Mode-`k` product `self ×_k m`, replacing dimension `p_k` with `m.nrows()`.
    pub fn mode_product(&self, m: &DMatrix<f64>, mode: usize) -> Result<Self> {
        if mode >= self.order() {
            return Err(invalid(format!(
                "mode {mode} out of range for order-{} tensor",
                self.order()
            )));
        }
        let pk = self.dims[mode];
        if m.ncols() != pk {
            return Err(Error::DimensionMismatch {
                expected: vec![m.nrows(), pk],
                found: vec![m.nrows(), m.ncols()],
            });
        }
        let q = m.nrows();
        let left: usize = self.dims[..mode].iter().product();
        let right: usize = self.dims[mode + 1..].iter().product();
        let mut dims = self.dims.clone();
        dims[mode] = q;
        let mut data = vec![0.0; left * q * right];
        for r in 0..right {
            let src = &self.data[r * left * pk..(r + 1) * left * pk];
            let dst = &mut data[r * left * q..(r + 1) * left * q];
            for a in 0..pk {
                let xs = &src[a * left..(a + 1) * left];
                for j in 0..q {
                    let w = m[(j, a)];
                    if w == 0.0 {
                        continue;
                    }
                    let ys = &mut dst[j * left..(j + 1) * left];
                    for (y, x) in ys.iter_mut().zip(xs) {
                        *y += w * x;
                    }
                }
            }
        }
        Ok(Self { dims, data })
    }

    /// Applies a sequence of mode products, e.g. `t ×_1 U_1ᵀ ×_2 U_2ᵀ`.
    pub fn multi_mode_product<'a>(
        &self,
        products: impl IntoIterator<Item = (usize, &'a DMatrix<f64>)>,
    ) -> Result<Self> {
        let mut out = self.clone();
        for (mode, m) in products {
            out = out.mode_product(m, mode)?;
        }
        Ok(out)
    }

    /// Generalized inner product contracting the leading modes of `self`
    /// with all modes of `y`. Returns a `[1]`-shaped tensor when the orders match.
    pub fn generalized_inner(&self, y: &Self) -> Result<Self> {
        let m = y.order();
        if m > self.order() || self.dims[..m] != y.dims[..] {
            return Err(Error::DimensionMismatch {
                expected: self.dims[..m.min(self.order())].to_vec(),
                found: y.dims.clone(),
            });
        }
        let inner = y.len();
        let out_dims = if m == self.order() {
            vec![1]
        } else {
            self.dims[m..].to_vec()
        };
        let outer = self.len() / inner;
        let data = (0..outer)
            .map(|b| {
                self.data[b * inner..(b + 1) * inner]
                    .iter()
                    .zip(&y.data)
                    .map(|(a, c)| a * c)
                    .sum()
            })
            .collect();
        Ok(Self {
            dims: out_dims,
            data,
        })
    }

    /// Outer product `self ∘ y`, of order `ord(self) + ord(y)`.
    pub fn outer(&self, y: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&y.dims);
        let mut data = Vec::with_capacity(self.len() * y.len());
        for b in &y.data {
            data.extend(self.data.iter().map(|a| a * b));
        }
        Self { dims, data }
    }
}

fn validate_modes(order: usize, row_modes: &[usize]) -> Result<()> {
    for w in row_modes.windows(2) {
        if w[0] >= w[1] {
            return Err(invalid(format!(
                "row modes must be strictly increasing without duplicates, got {row_modes:?}"
            )));
        }
    }
    if let Some(&m) = row_modes.iter().find(|&&m| m >= order) {
        return Err(invalid(format!(
            "mode {m} out of range for order-{order} tensor"
        )));
    }
    Ok(())
}

/// Index bookkeeping for one multi-mode matricization `X_[S]`.
///
/// `positions[f]` is the column-major offset in the `row_dim × col_dim`
/// matrix of the tensor element with flat offset `f`; the map is a
/// permutation of `0..∏p_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatricizationMap {
    tensor_dims: Vec<usize>,
    row_modes: Vec<usize>,
    col_modes: Vec<usize>,
    row_dim: usize,
    col_dim: usize,
    positions: Vec<usize>,
}

impl MatricizationMap {
    pub fn new(tensor_dims: &[usize], row_modes: &[usize]) -> Result<Self> {
        check_dims(tensor_dims)?;
        validate_modes(tensor_dims.len(), row_modes)?;
        let d = tensor_dims.len();
        let col_modes: Vec<usize> = (0..d).filter(|m| !row_modes.contains(m)).collect();

        // I_k / J_k: products of the preceding dims within the same side.
        let mut row_stride = vec![0; d];
        let mut col_stride = vec![0; d];
        let mut acc = 1;
        for &m in row_modes {
            row_stride[m] = acc;
            acc *= tensor_dims[m];
        }
        let row_dim = acc;
        acc = 1;
        for &m in &col_modes {
            col_stride[m] = acc;
            acc *= tensor_dims[m];
        }
        let col_dim = acc;

        let len = row_dim * col_dim;
        let mut positions = Vec::with_capacity(len);
        let mut idx = vec![0; d];
        loop {
            let mut i = 0;
            let mut j = 0;
            for k in 0..d {
                i += idx[k] * row_stride[k];
                j += idx[k] * col_stride[k];
            }
            positions.push(i + j * row_dim);
            if !advance(&mut idx, tensor_dims) {
                break;
            }
        }
        Ok(Self {
            tensor_dims: tensor_dims.to_vec(),
            row_modes: row_modes.to_vec(),
            col_modes,
            row_dim,
            col_dim,
            positions,
        })
    }

    pub fn tensor_dims(&self) -> &[usize] {
        &self.tensor_dims
    }

    pub fn row_modes(&self) -> &[usize] {
        &self.row_modes
    }

    pub fn col_modes(&self) -> &[usize] {
        &self.col_modes
    }

    pub fn row_dim(&self) -> usize {
        self.row_dim
    }

    pub fn col_dim(&self) -> usize {
        self.col_dim
    }

    /// Column-major matrix offset of every flat tensor offset.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// (row, col) of the element at flat tensor offset `flat`.
    pub fn matrix_index(&self, flat: usize) -> (usize, usize) {
        let pos = self.positions[flat];
        (pos % self.row_dim, pos / self.row_dim)
    }

    pub fn apply(&self, t: &DenseTensor) -> DMatrix<f64> {
        assert_eq!(t.dims, self.tensor_dims, "tensor dims differ from map");
        let mut buf = vec![0.0; t.len()];
        for (x, &pos) in t.data.iter().zip(&self.positions) {
            buf[pos] = *x;
        }
        DMatrix::from_vec(self.row_dim, self.col_dim, buf)
    }

    pub fn invert(&self, m: &DMatrix<f64>) -> Result<DenseTensor> {
        if m.nrows() != self.row_dim || m.ncols() != self.col_dim {
            return Err(Error::DimensionMismatch {
                expected: vec![self.row_dim, self.col_dim],
                found: vec![m.nrows(), m.ncols()],
            });
        }
        let src = m.as_slice();
        let data = self.positions.iter().map(|&pos| src[pos]).collect();
        Ok(DenseTensor {
            dims: self.tensor_dims.clone(),
            data,
        })
    }
}

/// Inverse of [`DenseTensor::matricize`].
pub fn dematricize(m: &DMatrix<f64>, dims: &[usize], row_modes: &[usize]) -> Result<DenseTensor> {
    MatricizationMap::new(dims, row_modes)?.invert(m)
}

/// Kronecker product taken in reverse order: `mats[n-1] ⊗ ⋯ ⊗ mats[0]`.
///
/// This is the ordering that makes `vec(X ×_1 U_1 ⋯ ×_d U_d) = (U_d ⊗ ⋯ ⊗ U_1) vec(X)`
/// under first-index-fastest vectorization.
pub fn kron_reverse(mats: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for m in mats {
        out = m.kronecker(&out);
    }
    out
}

/// Index permutation `perm` with `vec(X_[to]) [q] = vec(X_[from]) [perm[q]]`.
///
/// This realizes the permutation matrices relating two matricizations of
/// the same tensor without materializing them.
pub fn matricization_permutation(
    dims: &[usize],
    from: &[usize],
    to: &[usize],
) -> Result<Vec<usize>> {
    let src = MatricizationMap::new(dims, from)?;
    let dst = MatricizationMap::new(dims, to)?;
    let mut perm = vec![0; src.positions.len()];
    for (&pd, &ps) in dst.positions.iter().zip(&src.positions) {
        perm[pd] = ps;
    }
    Ok(perm)
}

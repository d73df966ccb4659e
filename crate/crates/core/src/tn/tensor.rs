//! Dense complex tensors stored row-major.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{HtnError, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Dense multi-axis array of complex scalars in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    dims: Vec<usize>,
    data: Vec<C64>,
}

impl ComplexTensor {
    pub fn new(dims: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(HtnError::shape(format!("axis lengths must be positive, got {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(HtnError::shape(format!(
                "dims {dims:?} require {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "axis lengths must be positive");
        let len = dims.iter().product();
        Self { dims: dims.to_vec(), data: vec![ZERO; len] }
    }

    pub fn scalar(value: C64) -> Self {
        Self { dims: vec![], data: vec![value] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = ONE;
        }
        t
    }

    pub fn from_real(dims: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(dims.to_vec(), values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn vector(values: Vec<C64>) -> Self {
        Self { dims: vec![values.len()], data: values }
    }

    /// Matrix from row-major entries.
    pub fn matrix(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Entries drawn i.i.d. from the standard complex normal distribution.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let len: usize = dims.iter().product();
        let data = (0..len)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            })
            .collect();
        Self { dims: dims.to_vec(), data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.dims)
    }

    pub fn get(&self, index: &[usize]) -> C64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: C64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.dims.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| {
                assert!(i < d, "index out of bounds");
                acc * d + i
            })
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != self.data.len() || dims.iter().any(|&d| d == 0) {
            return Err(HtnError::shape(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    /// New tensor whose axis `i` is axis `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank {
            return Err(HtnError::shape(format!("permutation {perm:?} for rank {rank}")));
        }
        for &p in perm {
            if p >= rank || seen[p] {
                return Err(HtnError::shape(format!("invalid permutation {perm:?}")));
            }
            seen[p] = true;
        }
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let old_strides = self.strides();
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; rank];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[src]);
            // odometer increment over the new layout
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                src += src_strides[ax];
                if idx[ax] < new_dims[ax] {
                    break;
                }
                src -= src_strides[ax] * new_dims[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self { dims: new_dims, data })
    }

    pub fn conj(&self) -> Self {
        Self { dims: self.dims.clone(), data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, alpha: C64) -> Self {
        Self { dims: self.dims.clone(), data: self.data.iter().map(|z| z * alpha).collect() }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius distance to `other`; panics on shape mismatch.
    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dims, other.dims, "shape mismatch in distance");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims, other.dims, "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Permutes `row_axes` to the front and returns the tensor viewed as a
    /// `rows x cols` row-major matrix.
    pub fn matricize(&self, row_axes: &[usize], col_axes: &[usize]) -> Result<(Self, usize, usize)> {
        let mut perm: Vec<usize> = row_axes.to_vec();
        perm.extend_from_slice(col_axes);
        let t = self.permute(&perm)?;
        let rows: usize = row_axes.iter().map(|&a| self.dims[a]).product();
        let cols: usize = col_axes.iter().map(|&a| self.dims[a]).product();
        let t = t.reshape(&[rows, cols])?;
        Ok((t, rows, cols))
    }
}

pub(crate) fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

/// Row-major matrix product `a (m x k) * b (k x n)`.
pub(crate) fn matmul(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
    let mut out = vec![ZERO; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == ZERO {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// Contracts `a` and `b` over the listed axis pairs. The result carries the
/// unpaired axes of `a` followed by the unpaired axes of `b`.
pub fn contract(a: &ComplexTensor, b: &ComplexTensor, pairs: &[(usize, usize)]) -> Result<ComplexTensor> {
    let mut used_a = vec![false; a.rank()];
    let mut used_b = vec![false; b.rank()];
    for &(ia, ib) in pairs {
        if ia >= a.rank() || ib >= b.rank() {
            return Err(HtnError::shape(format!(
                "pair ({ia}, {ib}) out of range for ranks {} and {}",
                a.rank(),
                b.rank()
            )));
        }
        if used_a[ia] || used_b[ib] {
            return Err(HtnError::shape(format!("axis repeated in pairs {pairs:?}")));
        }
        used_a[ia] = true;
        used_b[ib] = true;
        if a.dims[ia] != b.dims[ib] {
            return Err(HtnError::Contraction {
                axis_a: ia,
                axis_b: ib,
                len_a: a.dims[ia],
                len_b: b.dims[ib],
            });
        }
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|&i| !used_b[i]).collect();
    let paired_a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let paired_b: Vec<usize> = pairs.iter().map(|p| p.1).collect();

    let (am, m, k) = a.matricize(&free_a, &paired_a)?;
    let (bm, _, n) = b.matricize(&paired_b, &free_b)?;
    let data = matmul(am.data(), bm.data(), m, k, n);

    let mut dims: Vec<usize> = free_a.iter().map(|&i| a.dims[i]).collect();
    dims.extend(free_b.iter().map(|&i| b.dims[i]));
    Ok(ComplexTensor { dims, data })
}

//! Density matrices and the partial trace.

use rand::Rng;

use super::linalg::eigh;
use super::tensor::{ComplexTensor, C64, ONE, ZERO};
use crate::error::{HtnError, Result};

/// Relative tolerance for the Hermiticity check.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Floor below which eigenvalues count as negative.
pub const PSD_TOL: f64 = 1e-12;

/// A (possibly sub-normalized) density matrix, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl DensityMatrix {
    /// Validated constructor: Hermitian, positive semidefinite, trace in `[0, 1]`.
    pub fn new(dim: usize, data: Vec<C64>) -> Result<Self> {
        let rho = Self::from_unchecked(dim, data)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Only the shape is checked. Intermediate results of the forward pass use
    /// this; `validate` can be called afterwards.
    pub fn from_unchecked(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 {
            return Err(HtnError::invalid("density matrix dimension must be positive"));
        }
        if data.len() != dim * dim {
            return Err(HtnError::shape(format!(
                "{} entries for a {dim}x{dim} density matrix",
                data.len()
            )));
        }
        Ok(DensityMatrix { dim, data })
    }

    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let d = amplitudes.len();
        let mut data = vec![ZERO; d * d];
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = amplitudes[i] * amplitudes[j].conj();
            }
        }
        Self::new(d, data)
    }

    pub fn basis_state(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(HtnError::invalid(format!("basis index {index} >= dimension {dim}")));
        }
        let mut data = vec![ZERO; dim * dim];
        data[index * dim + index] = ONE;
        Self::from_unchecked(dim, data)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        let diag = vec![1.0 / dim as f64; dim];
        Self::diagonal(&diag)
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mut data = vec![ZERO; d * d];
        for (i, &x) in diag.iter().enumerate() {
            data[i * d + i] = C64::new(x, 0.0);
        }
        Self::new(d, data)
    }

    /// Random full-rank state `G G^dagger / tr` from a complex Ginibre matrix.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let g = ComplexTensor::random(&[dim, dim], rng);
        let g = g.data();
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = ZERO;
                for k in 0..dim {
                    acc += g[i * dim + k] * g[j * dim + k].conj();
                }
                data[i * dim + j] = acc;
            }
        }
        let tr: f64 = (0..dim).map(|i| data[i * dim + i].re).sum();
        for z in &mut data {
            *z /= tr;
        }
        DensityMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    pub fn diagonal_entries(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).collect()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh(self.dim, &self.data).0
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.data[i * d + j] - self.data[j * d + i].conj()).norm());
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let scale = self.data.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let defect = self.hermiticity_defect();
        if defect > HERMITIAN_TOL * scale {
            return Err(HtnError::invalid(format!("matrix is not Hermitian (defect {defect:e})")));
        }
        let min = self.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(HtnError::invalid(format!("matrix is not PSD (eigenvalue {min:e})")));
        }
        let tr = self.trace();
        if !(-PSD_TOL..=1.0 + PSD_TOL).contains(&tr) {
            return Err(HtnError::invalid(format!("trace {tr} outside [0, 1]")));
        }
        Ok(())
    }

    /// `alpha * rho` without revalidation.
    pub fn scaled(&self, alpha: f64) -> Self {
        DensityMatrix { dim: self.dim, data: self.data.iter().map(|z| z * alpha).collect() }
    }

    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        let (a, b) = (self.dim, other.dim);
        let d = a * b;
        let mut data = vec![ZERO; d * d];
        for i in 0..a {
            for j in 0..a {
                let x = self.data[i * a + j];
                if x == ZERO {
                    continue;
                }
                for k in 0..b {
                    for l in 0..b {
                        data[(i * b + k) * d + j * b + l] = x * other.data[k * b + l];
                    }
                }
            }
        }
        DensityMatrix { dim: d, data }
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }
}

/// Traces out the subsystems listed in `traced`. `dims` lists subsystem
/// dimensions with the first subsystem most significant; the remaining
/// subsystems keep their relative order.
pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], traced: &[usize]) -> Result<DensityMatrix> {
    let total: usize = dims.iter().product();
    if total != rho.dim() || dims.iter().any(|&d| d == 0) {
        return Err(HtnError::invalid(format!(
            "subsystem dims {dims:?} do not multiply to {}",
            rho.dim()
        )));
    }
    if let Some(&bad) = traced.iter().find(|&&t| t >= dims.len()) {
        return Err(HtnError::invalid(format!("subsystem {bad} out of range")));
    }
    let kept: Vec<usize> = (0..dims.len()).filter(|i| !traced.contains(i)).collect();
    let gone: Vec<usize> = (0..dims.len()).filter(|i| traced.contains(i)).collect();
    let kept_dims: Vec<usize> = kept.iter().map(|&i| dims[i]).collect();
    let gone_dims: Vec<usize> = gone.iter().map(|&i| dims[i]).collect();
    let dk: usize = kept_dims.iter().product();
    let dg: usize = gone_dims.iter().product();

    // stride of each subsystem in the full index
    let mut strides = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let offsets = |sel: &[usize], sel_dims: &[usize], flat: usize| -> usize {
        let mut rem = flat;
        let mut off = 0;
        for p in (0..sel.len()).rev() {
            off += (rem % sel_dims[p]) * strides[sel[p]];
            rem /= sel_dims[p];
        }
        off
    };
    let kept_off: Vec<usize> = (0..dk).map(|x| offsets(&kept, &kept_dims, x)).collect();
    let gone_off: Vec<usize> = (0..dg).map(|x| offsets(&gone, &gone_dims, x)).collect();

    let n = rho.dim();
    let src = rho.data();
    let mut out = vec![ZERO; dk * dk];
    for i in 0..dk {
        for j in 0..dk {
            let mut acc = ZERO;
            for &g in &gone_off {
                acc += src[(kept_off[i] + g) * n + kept_off[j] + g];
            }
            out[i * dk + j] = acc;
        }
    }
    DensityMatrix::from_unchecked(dk, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn product_state_trace_out_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DensityMatrix::random(2, &mut rng);
        let b = DensityMatrix::basis_state(2, 0).unwrap();
        let out = partial_trace(&a.kron(&b), &[2, 2], &[1]).unwrap();
        assert!(out.max_abs_diff(&a) < 1e-15);
    }

    #[test]
    fn bell_state_reduces_to_maximally_mixed() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = DensityMatrix::pure(&[c(h), ZERO, ZERO, c(h)]).unwrap();
        let half = DensityMatrix::maximally_mixed(2).unwrap();
        for traced in [0, 1] {
            let out = partial_trace(&bell, &[2, 2], &[traced]).unwrap();
            assert!(out.max_abs_diff(&half) < 1e-15);
        }
    }

    #[test]
    fn matches_explicit_four_loop_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = DensityMatrix::random(4, &mut rng);
        let d = rho.data();
        let over_b = partial_trace(&rho, &[2, 2], &[1]).unwrap();
        let over_a = partial_trace(&rho, &[2, 2], &[0]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut sb = ZERO;
                let mut sa = ZERO;
                for k in 0..2 {
                    sb += d[(i * 2 + k) * 4 + j * 2 + k];
                    sa += d[(k * 2 + i) * 4 + k * 2 + j];
                }
                assert!((over_b.get(i, j) - sb).norm() < 1e-15);
                assert!((over_a.get(i, j) - sa).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn middle_subsystem_of_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = DensityMatrix::random(2, &mut rng);
        let b = DensityMatrix::random(3, &mut rng);
        let c = DensityMatrix::random(2, &mut rng);
        let abc = a.kron(&b).kron(&c);
        let ac = partial_trace(&abc, &[2, 3, 2], &[1]).unwrap();
        assert!(ac.max_abs_diff(&a.kron(&c)) < 1e-14);
        let b_only = partial_trace(&abc, &[2, 3, 2], &[0, 2]).unwrap();
        assert!(b_only.max_abs_diff(&b) < 1e-14);
    }

    #[test]
    fn dims_mismatch_rejected() {
        let rho = DensityMatrix::maximally_mixed(4).unwrap();
        assert!(matches!(partial_trace(&rho, &[2, 3], &[0]), Err(HtnError::InvalidArgument(_))));
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        assert!(DensityMatrix::new(2, vec![c(1.0), c(0.5), c(0.0), c(0.0)]).is_err());
        assert!(DensityMatrix::diagonal(&[1.5, 0.0]).is_err());
        assert!(DensityMatrix::diagonal(&[0.5, -0.1]).is_err());
        assert!(DensityMatrix::diagonal(&[0.25, 0.0]).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn preserves_trace_and_hermiticity(seed in 0u64..1000, which in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = DensityMatrix::random(12, &mut rng);
            let out = partial_trace(&rho, &[2, 3, 2], &[which]).unwrap();
            proptest::prop_assert!((out.trace() - rho.trace()).abs() < 1e-12);
            proptest::prop_assert!(out.hermiticity_defect() < 1e-12);
            proptest::prop_assert!(out.validate().is_ok());
        }
    }
}

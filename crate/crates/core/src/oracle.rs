//! Brute-force reference computations on the full Hilbert space. Exponential
//! in the number of sites; used to cross-check the contracted forward pass.

use rand::Rng;

use crate::error::{HtnError, Result};
use crate::model::{depolarize, normalize, HtnModel, LabelState, LossConfig, LossKind};
use crate::model::{cross_entropy_term, mse_term};
use crate::tn::linalg::{complete_basis, polar_rows};
use crate::tn::{contract, partial_trace, ComplexTensor, DensityMatrix, C64, ZERO};

/// Dense matrix of the whole isometric chain, `rows x cols` row-major.
/// Rows are ordered `(r_0, o_0, r_1, o_1, ...)`, columns `(s_0, s_1, ...)`,
/// first site most significant.
pub struct DenseIsometry {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
    /// Subsystem dims of the row space: `[xi, o_0, xi, o_1, ...]`.
    pub row_dims: Vec<usize>,
}

pub fn dense_isometry(model: &HtnModel) -> Result<DenseIsometry> {
    let mut t = ComplexTensor::new(vec![1, 1, 1], vec![C64::new(1.0, 0.0)])?;
    let mut row_dims = Vec::new();
    for (k, w) in model.sites().iter().enumerate() {
        let [_, s, r, o, c] = model.architecture().site_dims(k);
        let (out, inp) = (t.dims()[0], t.dims()[1]);
        // [O, I, c] x [c, s, r, o, c'] -> [O, I, s, r, o, c']
        let next = contract(&t, w, &[(2, 0)])?;
        let next = next.permute(&[0, 3, 4, 1, 2, 5])?;
        t = next.reshape(&[out * r * o, inp * s, c])?;
        row_dims.push(r);
        row_dims.push(o);
    }
    let (rows, cols) = (t.dims()[0], t.dims()[1]);
    Ok(DenseIsometry { rows, cols, data: t.into_data(), row_dims })
}

fn reduction_weights(model: &HtnModel, row_dims: &[usize]) -> Vec<f64> {
    // D_B on each row index, identity on the output legs
    let mut weights = vec![1.0];
    for (k, pair) in row_dims.chunks(2).enumerate() {
        let d = model.reduction()[k].diag();
        let mut next = Vec::with_capacity(weights.len() * pair[0] * pair[1]);
        for w in &weights {
            for dr in d {
                for _ in 0..pair[1] {
                    next.push(w * dr);
                }
            }
        }
        weights = next;
    }
    weights
}

fn conjugate_apply(v: &[C64], rows: usize, cols: usize, sigma: &[C64]) -> Vec<C64> {
    // v sigma v^dagger
    let mut vs = vec![ZERO; rows * cols];
    for i in 0..rows {
        for k in 0..cols {
            let x = v[i * cols + k];
            if x == ZERO {
                continue;
            }
            for j in 0..cols {
                vs[i * cols + j] += x * sigma[k * cols + j];
            }
        }
    }
    let mut out = vec![ZERO; rows * rows];
    for i in 0..rows {
        for j in 0..rows {
            let mut acc = ZERO;
            for k in 0..cols {
                acc += vs[i * cols + k] * v[j * cols + k].conj();
            }
            out[i * rows + j] = acc;
        }
    }
    out
}

// tr_B of rho_full (D_B (x) I), written as the partial trace of the PSD
// operator sqrt(D_B) rho_full sqrt(D_B).
fn reduce(model: &HtnModel, full: Vec<C64>, row_dims: &[usize]) -> Result<DensityMatrix> {
    let n = row_dims.iter().product::<usize>();
    let weights: Vec<f64> = reduction_weights(model, row_dims).iter().map(|w| w.sqrt()).collect();
    let mut scaled = full;
    for i in 0..n {
        for j in 0..n {
            scaled[i * n + j] *= weights[i] * weights[j];
        }
    }
    let rho = DensityMatrix::from_unchecked(n, scaled)?;
    let traced: Vec<usize> = (0..row_dims.len()).step_by(2).collect();
    partial_trace(&rho, row_dims, &traced)
}

/// `tr_B(V sigma V^dagger (D_B (x) I))` with dense matrices.
pub fn stinespring_forward(model: &HtnModel, sigma: &DensityMatrix) -> Result<DensityMatrix> {
    let v = dense_isometry(model)?;
    if sigma.dim() != v.cols {
        return Err(HtnError::shape(format!("input dim {} vs {}", sigma.dim(), v.cols)));
    }
    let full = conjugate_apply(&v.data, v.rows, v.cols, sigma.data());
    reduce(model, full, &v.row_dims)
}

/// Same channel through an explicit unitary: the isometry is completed to a
/// square unitary and the input is padded with ancillas in `|0>`.
pub fn stinespring_unitary_forward(model: &HtnModel, sigma: &DensityMatrix) -> Result<DensityMatrix> {
    let v = dense_isometry(model)?;
    let (n, m) = (v.rows, v.cols);
    if sigma.dim() != m {
        return Err(HtnError::shape(format!("input dim {} vs {m}", sigma.dim())));
    }
    let extra = complete_basis(n, m, &v.data);
    let mut u = vec![ZERO; n * n];
    for i in 0..n {
        u[i * n..i * n + m].copy_from_slice(&v.data[i * m..(i + 1) * m]);
        u[i * n + m..(i + 1) * n].copy_from_slice(&extra[i * (n - m)..(i + 1) * (n - m)]);
    }
    let mut padded = vec![ZERO; n * n];
    for i in 0..m {
        padded[i * n..i * n + m].copy_from_slice(&sigma.data()[i * m..(i + 1) * m]);
    }
    let full = conjugate_apply(&u, n, n, &padded);
    reduce(model, full, &v.row_dims)
}

/// Loss of one sample computed entirely from dense matrices.
pub fn dense_sample_loss(model: &HtnModel, features: &[f64], label: &LabelState, cfg: &LossConfig) -> Result<f64> {
    let sigma = model.encode(features)?;
    let input = DensityMatrix::pure(&sigma.dense_amplitudes())?;
    let rho = stinespring_forward(model, &input)?;
    let processed = depolarize(&normalize(&rho, cfg.norm)?, cfg.lambda)?;
    match cfg.kind {
        LossKind::CrossEntropy => cross_entropy_term(&processed, label),
        LossKind::Mse => Ok(mse_term(&processed, label)),
    }
}

/// Random isometry `d_in -> d_out * d_env`, as a row-major matrix.
pub fn random_isometry<R: Rng + ?Sized>(d_in: usize, d_big: usize, rng: &mut R) -> Vec<C64> {
    let g = ComplexTensor::random(&[d_in, d_big], rng);
    let rows = polar_rows(d_in, d_big, g.data());
    crate::tn::linalg::adjoint(d_in, d_big, &rows)
}

/// `tr_env(V rho V^dagger)` with the environment as the second factor.
pub fn apply_stinespring(v: &[C64], d_out: usize, d_env: usize, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let d_in = rho.dim();
    let full = conjugate_apply(v, d_out * d_env, d_in, rho.data());
    let full = DensityMatrix::from_unchecked(d_out * d_env, full)?;
    partial_trace(&full, &[d_out, d_env], &[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{encode_rotational, forward, Architecture};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn contracted_forward_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for outs in [vec![2], vec![1, 2], vec![1, 2, 2], vec![1, 1, 2, 2]] {
            let n = outs.len();
            let arch = Architecture::new(3, 3, outs, 2).unwrap();
            let model = HtnModel::random_with_reduction(arch, &mut rng).unwrap();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let sigma = encode_rotational(&x, 0).unwrap();
            let mps = forward(&model, &sigma).unwrap();
            let input = DensityMatrix::pure(&sigma.dense_amplitudes()).unwrap();
            let dense = stinespring_forward(&model, &input).unwrap();
            assert!(mps.max_abs_diff(&dense) < 1e-12, "n = {n}");
            let unitary = stinespring_unitary_forward(&model, &input).unwrap();
            assert!(unitary.max_abs_diff(&dense) < 1e-12);
        }
    }

    #[test]
    fn random_channel_is_trace_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_isometry(4, 8, &mut rng);
        let rho = DensityMatrix::random(4, &mut rng);
        let out = apply_stinespring(&v, 4, 2, &rho).unwrap();
        assert!((out.trace() - 1.0).abs() < 1e-12);
        out.validate().unwrap();
    }
}

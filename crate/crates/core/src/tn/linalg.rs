//! Dense matrix decompositions on row-major complex slices, backed by nalgebra.

use nalgebra::DMatrix;

use super::tensor::{C64, ZERO};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-14;

pub(crate) fn to_dmatrix(rows: usize, cols: usize, data: &[C64]) -> DMatrix<C64> {
    assert_eq!(data.len(), rows * cols);
    DMatrix::from_row_slice(rows, cols, data)
}

/// Thin SVD `a = u * diag(s) * vh` with singular values sorted descending.
/// `u` is `rows x k`, `vh` is `k x cols`, `k = min(rows, cols)`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub rows: usize,
    pub cols: usize,
    pub k: usize,
    pub u: Vec<C64>,
    pub s: Vec<f64>,
    pub vh: Vec<C64>,
}

pub fn svd(rows: usize, cols: usize, data: &[C64]) -> Svd {
    let m = to_dmatrix(rows, cols, data);
    let dec = m.svd(true, true);
    let u = dec.u.expect("u requested");
    let vt = dec.v_t.expect("v_t requested");
    let k = rows.min(cols);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]).then(i.cmp(&j)));

    let mut uo = vec![ZERO; rows * k];
    let mut vho = vec![ZERO; k * cols];
    let mut s = Vec::with_capacity(k);
    for (new, &old) in order.iter().enumerate() {
        s.push(dec.singular_values[old]);
        for i in 0..rows {
            uo[i * k + new] = u[(i, old)];
        }
        for j in 0..cols {
            vho[new * cols + j] = vt[(old, j)];
        }
    }
    Svd { rows, cols, k, u: uo, s, vh: vho }
}

/// Thin QR `a = q * r` with `q` of shape `rows x k` (orthonormal columns) and
/// `r` of shape `k x cols`, `k = min(rows, cols)`.
pub fn qr_thin(rows: usize, cols: usize, data: &[C64]) -> (Vec<C64>, Vec<C64>) {
    let dec = to_dmatrix(rows, cols, data).qr();
    let (q, r) = (dec.q(), dec.r());
    let k = rows.min(cols);
    let mut qo = Vec::with_capacity(rows * k);
    for i in 0..rows {
        qo.extend((0..k).map(|j| q[(i, j)]));
    }
    let mut ro = Vec::with_capacity(k * cols);
    for i in 0..k {
        ro.extend((0..cols).map(|j| r[(i, j)]));
    }
    (qo, ro)
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues ascend; column `j` of
/// the returned row-major `vecs` is the eigenvector for `vals[j]`.
pub fn eigh(dim: usize, data: &[C64]) -> (Vec<f64>, Vec<C64>) {
    let mut m = to_dmatrix(dim, dim, data);
    // enforce exact Hermiticity so the solver sees a Hermitian input
    for i in 0..dim {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..dim {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let mut vals = Vec::with_capacity(dim);
    let mut vecs = vec![ZERO; dim * dim];
    for (new, &old) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[old]);
        for i in 0..dim {
            vecs[i * dim + new] = eig.eigenvectors[(i, old)];
        }
    }
    (vals, vecs)
}

/// `U f(diag) U^dagger` for a Hermitian matrix.
pub fn herm_apply(dim: usize, data: &[C64], f: impl Fn(f64) -> f64) -> Vec<C64> {
    let (vals, vecs) = eigh(dim, data);
    let fv: Vec<f64> = vals.iter().map(|&x| f(x)).collect();
    let mut out = vec![ZERO; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = ZERO;
            for k in 0..dim {
                acc += vecs[i * dim + k] * fv[k] * vecs[j * dim + k].conj();
            }
            out[i * dim + j] = acc;
        }
    }
    out
}

/// Nearest matrix with orthonormal rows (`rows <= cols`) in Frobenius norm,
/// `U V^dagger` from the thin SVD. Null directions are completed by the SVD
/// basis, so rank-deficient inputs still map to an exact co-isometry.
pub fn polar_rows(rows: usize, cols: usize, data: &[C64]) -> Vec<C64> {
    assert!(rows <= cols, "polar_rows needs rows <= cols");
    if let Some(out) = polar_rows_gram(rows, cols, data) {
        return out;
    }
    let d = svd(rows, cols, data);
    let k = d.k;
    let mut out = vec![ZERO; rows * cols];
    for i in 0..rows {
        for p in 0..k {
            let uip = d.u[i * k + p];
            if uip == ZERO {
                continue;
            }
            for j in 0..cols {
                out[i * cols + j] += uip * d.vh[p * cols + j];
            }
        }
    }
    out
}

fn gram_rows(rows: usize, cols: usize, a: &[C64]) -> Vec<C64> {
    let mut g = vec![ZERO; rows * rows];
    for i in 0..rows {
        let ri = &a[i * cols..(i + 1) * cols];
        for j in i..rows {
            let rj = &a[j * cols..(j + 1) * cols];
            let v: C64 = ri.iter().zip(rj).map(|(x, y)| x * y.conj()).sum();
            g[i * rows + j] = v;
            g[j * rows + i] = v.conj();
        }
    }
    g
}

// `(a a^dagger)^(-1/2) a`, which equals `U V^dagger` for full row rank. Only
// used when well conditioned and the result checks out to 1e-13.
fn polar_rows_gram(rows: usize, cols: usize, a: &[C64]) -> Option<Vec<C64>> {
    let g = gram_rows(rows, cols, a);
    let (vals, _) = eigh(rows, &g);
    if !(vals[0] > 1e-3 * vals[rows - 1]) {
        return None;
    }
    let inv_sqrt = herm_apply(rows, &g, |x| 1.0 / x.sqrt());
    let mut out = vec![ZERO; rows * cols];
    for i in 0..rows {
        let (head, _) = out.split_at_mut((i + 1) * cols);
        let oi = &mut head[i * cols..];
        for k in 0..rows {
            let c = inv_sqrt[i * rows + k];
            for (o, x) in oi.iter_mut().zip(&a[k * cols..(k + 1) * cols]) {
                *o += c * x;
            }
        }
    }
    let check = gram_rows(rows, cols, &out);
    let defect = (0..rows * rows)
        .map(|idx| (check[idx] - if idx / rows == idx % rows { C64::new(1.0, 0.0) } else { ZERO }).norm())
        .fold(0.0, f64::max);
    (defect <= 1e-13).then_some(out)
}

/// Conjugate transpose of a row-major `rows x cols` matrix.
pub fn adjoint(rows: usize, cols: usize, data: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j].conj();
        }
    }
    out
}

/// Orthonormal basis vectors (as columns of a `dim x extra` row-major matrix)
/// completing the span of the orthonormal columns of `basis` (`dim x k`).
pub fn complete_basis(dim: usize, k: usize, basis: &[C64]) -> Vec<C64> {
    let extra = dim - k;
    if extra == 0 {
        return Vec::new();
    }
    // projector onto the complement; its top eigenvectors span the complement
    let mut proj = vec![ZERO; dim * dim];
    for i in 0..dim {
        proj[i * dim + i] = C64::new(1.0, 0.0);
        for j in 0..dim {
            let mut acc = ZERO;
            for p in 0..k {
                acc += basis[i * k + p] * basis[j * k + p].conj();
            }
            proj[i * dim + j] -= acc;
        }
    }
    let (_, vecs) = eigh(dim, &proj);
    let mut out = vec![ZERO; dim * extra];
    for i in 0..dim {
        for (c, col) in ((dim - extra)..dim).enumerate() {
            out[i * extra + c] = vecs[i * dim + col];
        }
    }
    out
}

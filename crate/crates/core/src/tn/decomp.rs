//! Truncated SVD splits and polar projection onto isometries.

use super::linalg::{polar_rows, svd};
use super::tensor::{ComplexTensor, C64};
use crate::error::{HtnError, Result};

#[derive(Clone, Debug)]
pub struct SvdSplit {
    /// Axes: the left axes of the input, then the new bond.
    pub left: ComplexTensor,
    /// Retained singular values, descending.
    pub singular_values: Vec<f64>,
    /// Axes: the new bond, then the right axes of the input.
    pub right: ComplexTensor,
    /// Root-sum-square of the discarded singular values.
    pub truncation_error: f64,
}

fn check_partition(rank: usize, left: &[usize], right: &[usize]) -> Result<()> {
    let mut seen = vec![false; rank];
    for &a in left.iter().chain(right) {
        if a >= rank || seen[a] {
            return Err(HtnError::invalid(format!(
                "axes {left:?} | {right:?} do not partition a rank-{rank} tensor"
            )));
        }
        seen[a] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(HtnError::invalid(format!(
            "axes {left:?} | {right:?} do not cover a rank-{rank} tensor"
        )));
    }
    Ok(())
}

/// Splits `t` across the `left_axes | right_axes` cut, keeping at most
/// `max_rank` singular values. `left` has orthonormal columns and `right`
/// orthonormal rows; `t ~ left * diag(s) * right`.
pub fn svd_split(
    t: &ComplexTensor,
    left_axes: &[usize],
    right_axes: &[usize],
    max_rank: usize,
) -> Result<SvdSplit> {
    if max_rank < 1 {
        return Err(HtnError::invalid("max_rank must be at least 1"));
    }
    check_partition(t.rank(), left_axes, right_axes)?;
    let (m, rows, cols) = t.matricize(left_axes, right_axes)?;
    let d = svd(rows, cols, m.data());
    let keep = max_rank.min(d.k);
    let truncation_error = d.s[keep..].iter().fold(0.0, |acc, x| acc + x * x).sqrt();

    let mut left = Vec::with_capacity(rows * keep);
    for i in 0..rows {
        left.extend_from_slice(&d.u[i * d.k..i * d.k + keep]);
    }
    let right = d.vh[..keep * cols].to_vec();

    let mut ldims: Vec<usize> = left_axes.iter().map(|&a| t.dims()[a]).collect();
    ldims.push(keep);
    let mut rdims = vec![keep];
    rdims.extend(right_axes.iter().map(|&a| t.dims()[a]));
    Ok(SvdSplit {
        left: ComplexTensor::new(ldims, left)?,
        singular_values: d.s[..keep].to_vec(),
        right: ComplexTensor::new(rdims, right)?,
        truncation_error,
    })
}

/// Nearest isometry (Frobenius norm) mapping the `in_axes` space into the
/// space of the remaining axes. The axis order of `t` is preserved.
pub fn isometrize(t: &ComplexTensor, in_axes: &[usize]) -> Result<ComplexTensor> {
    let out_axes: Vec<usize> = (0..t.rank()).filter(|a| !in_axes.contains(a)).collect();
    check_partition(t.rank(), in_axes, &out_axes)?;
    if t.data().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(HtnError::Degenerate("tensor has non-finite entries".into()));
    }
    let (m, rows, cols) = t.matricize(in_axes, &out_axes)?;
    if rows > cols {
        return Err(HtnError::IsometryDirection { input: rows, output: cols });
    }
    let w = polar_rows(rows, cols, m.data());
    let mut perm_dims: Vec<usize> = in_axes.iter().map(|&a| t.dims()[a]).collect();
    perm_dims.extend(out_axes.iter().map(|&a| t.dims()[a]));
    let permuted = ComplexTensor::new(perm_dims, w)?;
    // invert the (in_axes ++ out_axes) permutation
    let order: Vec<usize> = in_axes.iter().chain(&out_axes).copied().collect();
    let mut inverse = vec![0; order.len()];
    for (pos, &axis) in order.iter().enumerate() {
        inverse[axis] = pos;
    }
    permuted.permute(&inverse)
}

/// Largest entrywise deviation of `W W^dagger` from the identity on the
/// `in_axes` space.
pub fn isometry_defect(t: &ComplexTensor, in_axes: &[usize]) -> Result<f64> {
    let out_axes: Vec<usize> = (0..t.rank()).filter(|a| !in_axes.contains(a)).collect();
    let (m, rows, cols) = t.matricize(in_axes, &out_axes)?;
    let d = m.data();
    let mut worst: f64 = 0.0;
    for i in 0..rows {
        for j in 0..rows {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..cols {
                acc += d[i * cols + k] * d[j * cols + k].conj();
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((acc - C64::new(target, 0.0)).norm());
        }
    }
    Ok(worst)
}

//! Contraction, truncated SVD splits, polar isometrization and partial traces
//! on small random tensors.
//!
//! cargo run --example tensor_basics

use htn::tn::{contract, isometrize, isometry_defect, partial_trace, svd_split, ComplexTensor, DensityMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> htn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let a = ComplexTensor::random(&[3, 4, 5], &mut rng);
    let b = ComplexTensor::random(&[5, 2], &mut rng);
    let ab = contract(&a, &b, &[(2, 0)])?;
    println!("contract [3,4,5] x [5,2] over one axis -> {:?}", ab.dims());

    for rank in [1, 2, 4, 8] {
        let split = svd_split(&ab, &[0], &[1, 2], rank)?;
        let back = contract(
            &contract(&split.left, &ComplexTensor::from_real(&[split.singular_values.len(); 2], &diag(&split.singular_values))?, &[(1, 0)])?,
            &split.right,
            &[(1, 0)],
        )?;
        println!(
            "max_rank {rank}: kept {} values, truncation error {:.3e}, reconstruction error {:.3e}",
            split.singular_values.len(),
            split.truncation_error,
            back.distance(&ab)
        );
    }

    let w = ComplexTensor::random(&[2, 2, 4], &mut rng);
    let iso = isometrize(&w, &[0, 1])?;
    println!("isometry defect before {:.3e}, after {:.3e}", isometry_defect(&w, &[0, 1])?, isometry_defect(&iso, &[0, 1])?);

    let rho = DensityMatrix::random(8, &mut rng);
    for traced in [vec![0], vec![1, 2], vec![0, 2]] {
        let r = partial_trace(&rho, &[2, 2, 2], &traced)?;
        println!("trace out {traced:?}: dim {}, trace {:.12}", r.dim(), r.trace());
    }
    Ok(())
}

fn diag(s: &[f64]) -> Vec<f64> {
    let n = s.len();
    let mut out = vec![0.0; n * n];
    for (i, &x) in s.iter().enumerate() {
        out[i * n + i] = x;
    }
    out
}

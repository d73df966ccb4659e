//! Compiles a random matrix into a post-selected circuit and compares the
//! simulated output with the dense product.
//!
//! cargo run --example compile_matrix -- [dim] [single|deferred] [seed]

use htn::qcompile::{compile_matrix, serialize, simulate, AncillaMode, StateVector};
use htn::tn::{ComplexTensor, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> htn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let d: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let mode = match args.get(2).map(String::as_str) {
        Some("deferred") => AncillaMode::Deferred,
        _ => AncillaMode::Single,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0));
    let m = ComplexTensor::random(&[d, d], &mut rng).into_data();
    let circuit = compile_matrix(d, &m, mode)?;
    print!("{}", serialize(&circuit));

    let psi = StateVector::normalized(ComplexTensor::random(&[d], &mut rng).into_data())?;
    let sim = simulate(&circuit, &psi)?;
    let mpsi: Vec<C64> = (0..d).map(|i| (0..d).map(|j| m[i * d + j] * psi.amplitudes()[j]).sum()).collect();
    let norm2: f64 = mpsi.iter().map(|z| z.norm_sqr()).sum();
    let want = StateVector::normalized(mpsi)?;
    println!("fidelity with M psi / |M psi|: {:.15}", sim.output.fidelity(&want));
    println!("retention {:.6}, predicted |M psi|^2 / r^2 = {:.6}", sim.retention, norm2 / circuit.rescale.powi(2));
    Ok(())
}

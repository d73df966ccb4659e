//! MPS contraction of the channel against the dense Stinespring construction
//! for a few random small models.
//!
//! cargo run --example forward_oracle -- [n_models] [seed]

use htn::model::{encode_rotational, forward, Architecture, HtnModel};
use htn::oracle::stinespring_forward;
use htn::tn::DensityMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> htn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let count: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let mut rng = ChaCha8Rng::seed_from_u64(args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0));
    println!("sites chi xi outputs       trace(rho)  max |mps - dense|");
    for _ in 0..count {
        let n = rng.gen_range(2..=4);
        let mut outs = vec![1; n];
        outs[n - 1] = 2;
        // small xi cannot host the site isometries at every chi
        let arch = loop {
            if let Ok(a) = Architecture::new(rng.gen_range(1..=4), rng.gen_range(1..=4), outs.clone(), 2) {
                break a;
            }
        };
        let model = HtnModel::random_with_reduction(arch.clone(), &mut rng)?;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sigma = encode_rotational(&x, 0)?;
        let mps = forward(&model, &sigma)?;
        let dense = stinespring_forward(&model, &DensityMatrix::pure(&sigma.dense_amplitudes())?)?;
        println!(
            "{n:>5} {:>3} {:>2} {:<14} {:>10.6} {:>18.2e}",
            arch.chi,
            arch.xi,
            format!("{outs:?}"),
            mps.trace(),
            mps.max_abs_diff(&dense)
        );
    }
    Ok(())
}

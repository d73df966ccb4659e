//! Analytic gradients of the batch loss against central finite differences
//! on one random three-site model.
//!
//! cargo run --example gradient_check -- [seed]

use htn::model::{batch_loss, encode_rotational, loss_and_gradient, Architecture, HtnModel, LabelState, LossConfig, LossKind};
use htn::tn::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn main() -> htn::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = Architecture::new(2, 2, vec![1, 2, 2], 4)?;
    let model = HtnModel::random_with_reduction(arch.clone(), &mut rng)?;
    let batch = (0..3)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            Ok((encode_rotational(&x, 0)?, LabelState::new(rng.gen_range(0..4), 4)?))
        })
        .collect::<htn::Result<Vec<_>>>()?;

    for kind in [LossKind::CrossEntropy, LossKind::Mse] {
        let cfg = LossConfig { kind, lambda: 0.05, ..LossConfig::default() };
        let (_, grad) = loss_and_gradient(&batch, &model, &cfg)?;
        let loss_at = |m: &HtnModel| batch_loss(&batch, m, &cfg).map(|b| b.loss);
        println!("{kind:?}");
        for k in 0..arch.n_sites() {
            // Gradients are 2 dL/d conj(W): real part pairs with Re W, imaginary with Im W.
            let i = rng.gen_range(0..model.sites()[k].len());
            for (dir, an) in [(C64::new(1.0, 0.0), grad.sites[k].data()[i].re), (C64::new(0.0, 1.0), grad.sites[k].data()[i].im)] {
                let (mut plus, mut minus) = (model.clone(), model.clone());
                plus.sites_mut()[k].data_mut()[i] += dir * H;
                minus.sites_mut()[k].data_mut()[i] -= dir * H;
                let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * H);
                println!("  site {k} entry {i:>3} {}: analytic {an:>12.8} fd {fd:>12.8}", if dir.re > 0.0 { "re" } else { "im" });
            }
            let j = rng.gen_range(0..arch.xi);
            let (mut plus, mut minus) = (model.clone(), model.clone());
            plus.reduction_mut()[k].diag_mut()[j] += H;
            minus.reduction_mut()[k].diag_mut()[j] -= H;
            let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * H);
            println!("  D_{k}[{j}]           : analytic {:>12.8} fd {fd:>12.8}", grad.reduction[k][j]);
        }
    }
    Ok(())
}

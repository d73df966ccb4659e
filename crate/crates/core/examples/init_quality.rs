//! Training loss of the data-derived initialization against many random
//! initializations on Iris.
//!
//! cargo run --release --example init_quality -- [chi] [xi] [n_random] [lambda]

use htn::experiment::{prepare_data, to_samples, DatasetConfig, ExperimentConfig, ModelConfig};
use htn::model::{batch_loss, Architecture, HtnModel, LossConfig};
use htn::train::init_from_data;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> htn::Result<()> {
    let (chi, xi, n_random): (usize, usize, usize) = (arg(1, 8), arg(2, 2), arg(3, 50));
    let loss = LossConfig { lambda: arg(4, htn::model::DEFAULT_LAMBDA), ..LossConfig::default() };
    let cfg = ExperimentConfig {
        name: None,
        dataset: DatasetConfig::Iris { path: concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv").into() },
        split: Default::default(),
        model: ModelConfig { chi, xi, output_dims: None, init: Default::default() },
        loss,
        sweep: Default::default(),
        grid: None,
    };
    let data = prepare_data(&cfg)?;
    let arch = Architecture::new(chi, xi, Architecture::default_output_dims(4, 3)?, 3)?;
    let train_set = to_samples(&data.train, arch.output_dim())?;
    let init = batch_loss(&train_set, &init_from_data(arch.clone(), &train_set, 0)?, &loss)?.loss;
    let mut random = Vec::with_capacity(n_random);
    for seed in 0..n_random as u64 {
        let model = HtnModel::random(arch.clone(), &mut ChaCha8Rng::seed_from_u64(seed))?;
        random.push(batch_loss(&train_set, &model, &loss)?.loss);
    }
    let best = random.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = random.iter().sum::<f64>() / random.len() as f64;
    println!("data init   {init:.5}");
    println!("random best {best:.5}  mean {mean:.5}  ({n_random} draws)");
    println!("init / best {:.4}   init / mean {:.4}", init / best, init / mean);
    Ok(())
}

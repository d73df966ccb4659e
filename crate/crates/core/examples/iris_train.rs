//! Train one Iris model and print the per-sweep curve.
//!
//! cargo run --release --example iris_train -- [chi] [xi] [t] [sweeps] [adam_steps]

use std::time::Instant;

use htn::experiment::{prepare_data, to_samples, DatasetConfig, ExperimentConfig, ModelConfig};
use htn::model::{Architecture, LossConfig, NormVariant};
use htn::train::{init_from_data, train, SweepConfig};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> htn::Result<()> {
    let (chi, xi, t): (usize, usize, f64) = (arg(1, 8), arg(2, 2), arg(3, 0.1));
    let sweep = SweepConfig { n_sweeps: arg(4, 5), adam_steps_per_site: arg(5, 50), ..SweepConfig::default() };
    let cfg = ExperimentConfig {
        name: None,
        dataset: DatasetConfig::Iris { path: concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv").into() },
        split: Default::default(),
        model: ModelConfig { chi, xi, output_dims: None, init: Default::default() },
        loss: LossConfig { norm: NormVariant::Threshold { t }, ..LossConfig::default() },
        sweep: sweep.clone(),
        grid: None,
    };
    let data = prepare_data(&cfg)?;
    let arch = Architecture::new(chi, xi, Architecture::default_output_dims(4, 3)?, 3)?;
    println!("bonds {:?}, output legs {:?}", arch.bonds, arch.output_dims);
    let train_set = to_samples(&data.train, arch.output_dim())?;
    let test_set = to_samples(data.test.as_ref().expect("held-out split"), arch.output_dim())?;
    let mut model = init_from_data(arch, &train_set, 0)?;
    let start = Instant::now();
    let report = train(&mut model, &train_set, Some(&test_set), &cfg.loss, &sweep)?;
    println!("sweep  train_loss  train_acc  test_loss  test_acc  retained");
    for r in std::iter::once(&report.initial).chain(&report.sweeps) {
        let te = r.test.as_ref().expect("test set given");
        println!(
            "{:>5}  {:>10.5}  {:>9.3}  {:>9.5}  {:>8.3}  {:>8.4}",
            r.sweep, r.train.loss, r.train.accuracy, te.loss, te.accuracy, r.train.retained_trace
        );
    }
    println!("{:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

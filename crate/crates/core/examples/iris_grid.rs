//! Iris grid over chi, xi and the threshold t, printed as a table and written
//! to an output directory (one JSON per cell plus aggregate.csv).
//!
//! cargo run --release --example iris_grid -- [out_dir] [sweeps] [adam_steps]

use std::time::Instant;

use htn::experiment::{run_experiment, ExperimentConfig};

fn main() -> htn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let out = args.get(1).cloned().unwrap_or_else(|| "iris_grid_out".into());
    let sweeps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let steps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(50);
    let text = format!(
        r#"{{
            "dataset": {{"kind": "iris", "path": "{}/data/iris.csv"}},
            "model": {{"chi": 2, "xi": 2}},
            "sweep": {{"n_sweeps": {sweeps}, "adam_steps_per_site": {steps}}},
            "grid": {{"chi": [2, 8], "xi": [2, 32], "t": [1.0, 0.5, 0.1, 0.01, 0.001, 0.0001]}}
        }}"#,
        env!("CARGO_MANIFEST_DIR")
    );
    let cfg = ExperimentConfig::from_json(&text)?;
    let start = Instant::now();
    let run = run_experiment(&cfg, out.as_ref())?;
    println!("  xi  chi        t  train_loss  test_loss  train_acc  test_acc  retained");
    for r in &run.records {
        match (r.final_train(), r.final_test()) {
            (Some(tr), Some(te)) => println!(
                "{:>4} {:>4} {:>8} {:>11.5} {:>10.5} {:>10.3} {:>9.3} {:>9.4}",
                r.cell.xi,
                r.cell.chi,
                r.cell.t_or_w().unwrap_or(f64::NAN),
                tr.loss,
                te.loss,
                tr.accuracy,
                te.accuracy,
                tr.retained_trace
            ),
            _ => println!("{:>4} {:>4} failed: {:?}", r.cell.xi, r.cell.chi, r.error),
        }
    }
    println!("{} cells in {:.1}s, output in {out}", run.records.len(), start.elapsed().as_secs_f64());
    Ok(())
}

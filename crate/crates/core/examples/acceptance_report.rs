//! Runs acceptance criteria and prints one line each.
//!
//! cargo run --release --example acceptance_report -- [ids, e.g. 1,2,7] [grid_adam_steps]

use htn::verify::{run_criterion, VerifyOptions, CRITERIA};

fn main() -> htn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let ids: Vec<u32> = match args.get(1) {
        Some(s) => s.split(',').filter_map(|x| x.trim().parse().ok()).collect(),
        None => CRITERIA.iter().map(|c| c.0).filter(|&i| i != 9 && i != 11).collect(),
    };
    let mut opts = VerifyOptions::default();
    if let Some(steps) = args.get(2).and_then(|s| s.parse().ok()) {
        opts.grid_adam_steps = steps;
    }
    for id in ids {
        println!("{}", run_criterion(id, &opts)?.line());
    }
    Ok(())
}

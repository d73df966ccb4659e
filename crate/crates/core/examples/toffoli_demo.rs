//! Post-selected Toffoli separating two overlapping product states.
//!
//! cargo run --example toffoli_demo

use htn::qcompile::toffoli_separation_demo;

fn main() -> htn::Result<()> {
    let report = toffoli_separation_demo()?;
    print!("{}", report.circuit);
    for c in &report.cases {
        println!("{:>5} -> {}  fidelity {:.15}  retention {:.3}", c.input, c.expected, c.fidelity, c.retention);
    }
    println!("overlap before {:.4}, after {:.1e}", report.input_overlap, report.output_overlap);
    Ok(())
}

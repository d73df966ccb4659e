//! Non-unitary matrices as post-selected circuits, and a statevector
//! simulator to run them.

pub mod circuit;
pub mod compile;
pub mod text;

pub use circuit::{simulate, CompiledCircuit, Gate, Simulation, StateVector, MAX_QUBITS, RETENTION_FLOOR};
pub use compile::{
    compile_matrix, parse_matrix_json, toffoli_circuit, toffoli_separation_demo, AncillaMode, MatrixJson,
    SeparationCase, ToffoliReport,
};
pub use text::{parse, serialize};

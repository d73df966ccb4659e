//! Post-selected circuits and an exact statevector simulator.
//!
//! Qubit 0 is the most significant bit of a basis index. System qubits come
//! first, ancillas after them; every ancilla starts in `|0>`.

use serde::{Deserialize, Serialize};

use crate::error::{HtnError, Result};
use crate::tn::{C64, ZERO};

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 12;
/// Below this retained probability the shot counts as discarded.
pub const RETENTION_FLOOR: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    /// Dense unitary on the leading `log2(dim)` qubits, row-major.
    Unitary { dim: usize, matrix: Vec<C64> },
    /// `RY(angle) = [[cos a/2, -sin a/2], [sin a/2, cos a/2]]` on `target`
    /// when every `(qubit, value)` control matches.
    Cry { angle: f64, controls: Vec<(usize, bool)>, target: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompiledCircuit {
    pub n_qubits: usize,
    pub n_system: usize,
    pub gates: Vec<Gate>,
    /// Qubits projected onto `|0>` at the end.
    pub postselect: Vec<usize>,
    /// Largest singular value divided out of the compiled matrix.
    pub rescale: f64,
}

impl CompiledCircuit {
    pub fn n_ancillas(&self) -> usize {
        self.n_qubits - self.n_system
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits > MAX_QUBITS {
            return Err(HtnError::invalid(format!("{} qubits exceed the simulator cap {MAX_QUBITS}", self.n_qubits)));
        }
        if self.n_system > self.n_qubits {
            return Err(HtnError::invalid("more system qubits than qubits"));
        }
        if !(self.rescale > 0.0 && self.rescale.is_finite()) {
            return Err(HtnError::invalid(format!("rescale {} must be positive", self.rescale)));
        }
        for g in &self.gates {
            match g {
                Gate::Unitary { dim, matrix } => {
                    if !dim.is_power_of_two() || *dim > (1 << self.n_qubits) || matrix.len() != dim * dim {
                        return Err(HtnError::shape(format!("unitary of dim {dim} on {} qubits", self.n_qubits)));
                    }
                }
                Gate::Cry { angle, controls, target } => {
                    if !(0.0..=std::f64::consts::PI).contains(angle) {
                        return Err(HtnError::invalid(format!("rotation angle {angle} outside [0, pi]")));
                    }
                    if *target >= self.n_qubits || controls.iter().any(|&(q, _)| q >= self.n_qubits || q == *target) {
                        return Err(HtnError::invalid("rotation qubits out of range or overlapping"));
                    }
                }
            }
        }
        for &q in &self.postselect {
            if q < self.n_system || q >= self.n_qubits {
                return Err(HtnError::invalid(format!("post-selected qubit {q} is not an ancilla")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// Requires unit norm within `1e-12`.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if !amps.len().is_power_of_two() {
            return Err(HtnError::shape(format!("{} amplitudes is not a power of two", amps.len())));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(HtnError::invalid(format!("state norm {norm} is not 1")));
        }
        Ok(StateVector { n_qubits: amps.len().trailing_zeros() as usize, amps })
    }

    /// Rescales to unit norm; fails on the zero vector.
    pub fn normalized(amps: Vec<C64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(HtnError::Degenerate("zero state vector".into()));
        }
        Self::new(amps.into_iter().map(|a| a / norm).collect())
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let mut amps = vec![ZERO; 1 << n_qubits];
        *amps.get_mut(index).ok_or_else(|| HtnError::invalid("basis index out of range"))? = C64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    /// Tensor product of single-qubit states, first factor most significant.
    pub fn product(qubits: &[[C64; 2]]) -> Result<Self> {
        let mut amps = vec![C64::new(1.0, 0.0)];
        for q in qubits {
            amps = amps.iter().flat_map(|a| [a * q[0], a * q[1]]).collect();
        }
        Self::new(amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }
}

fn bit(index: usize, q: usize, n: usize) -> bool {
    (index >> (n - 1 - q)) & 1 == 1
}

fn apply(gate: &Gate, amps: &mut [C64], n: usize) {
    match gate {
        Gate::Unitary { dim, matrix } => {
            let rest = amps.len() / dim;
            let mut col = vec![ZERO; *dim];
            for low in 0..rest {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = amps[i * rest + low];
                }
                for i in 0..*dim {
                    let row = &matrix[i * dim..(i + 1) * dim];
                    amps[i * rest + low] = row.iter().zip(&col).map(|(m, c)| m * c).sum();
                }
            }
        }
        Gate::Cry { angle, controls, target } => {
            let (s, c) = (angle / 2.0).sin_cos();
            let mask = 1usize << (n - 1 - target);
            for i0 in 0..amps.len() {
                if i0 & mask != 0 || !controls.iter().all(|&(q, v)| bit(i0, q, n) == v) {
                    continue;
                }
                let i1 = i0 | mask;
                let (a0, a1) = (amps[i0], amps[i1]);
                amps[i0] = a0 * c - a1 * s;
                amps[i1] = a0 * s + a1 * c;
            }
        }
    }
}

/// Output on the qubits that are not post-selected, renormalized, and the
/// probability of passing post-selection.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub output: StateVector,
    pub retention: f64,
}

pub fn simulate(circuit: &CompiledCircuit, input: &StateVector) -> Result<Simulation> {
    circuit.validate()?;
    if input.n_qubits() != circuit.n_system {
        return Err(HtnError::shape(format!(
            "input has {} qubits, circuit expects {}",
            input.n_qubits(),
            circuit.n_system
        )));
    }
    let n = circuit.n_qubits;
    let shift = circuit.n_ancillas();
    let mut amps = vec![ZERO; 1 << n];
    for (i, &a) in input.amplitudes().iter().enumerate() {
        amps[i << shift] = a;
    }
    for g in &circuit.gates {
        apply(g, &mut amps, n);
    }
    let kept: Vec<usize> = (0..n).filter(|q| !circuit.postselect.contains(q)).collect();
    let mut out = vec![ZERO; 1 << kept.len()];
    for (i, &a) in amps.iter().enumerate() {
        if circuit.postselect.iter().any(|&q| bit(i, q, n)) {
            continue;
        }
        let j = kept.iter().fold(0, |acc, &q| (acc << 1) | usize::from(bit(i, q, n)));
        out[j] = a;
    }
    let retention: f64 = out.iter().map(|a| a.norm_sqr()).sum();
    if retention < RETENTION_FLOOR {
        return Err(HtnError::VanishedState { trace: retention });
    }
    let norm = retention.sqrt();
    Ok(Simulation { output: StateVector::new(out.into_iter().map(|a| a / norm).collect())?, retention })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn empty_circuit_is_identity() {
        let circ = CompiledCircuit { n_qubits: 2, n_system: 2, gates: vec![], postselect: vec![], rescale: 1.0 };
        let psi = StateVector::normalized(vec![c(1.0), c(2.0), C64::new(0.0, 1.0), c(-1.0)]).unwrap();
        let sim = simulate(&circ, &psi).unwrap();
        assert!((sim.output.fidelity(&psi) - 1.0).abs() < 1e-14);
        assert!((sim.retention - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_rotation_on_matching_control_discards_everything() {
        let circ = CompiledCircuit {
            n_qubits: 2,
            n_system: 1,
            gates: vec![Gate::Cry { angle: PI, controls: vec![(0, true)], target: 1 }],
            postselect: vec![1],
            rescale: 1.0,
        };
        let one = StateVector::basis(1, 1).unwrap();
        assert!(matches!(simulate(&circ, &one), Err(HtnError::VanishedState { .. })));
        let zero = StateVector::basis(1, 0).unwrap();
        assert!((simulate(&circ, &zero).unwrap().retention - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unitary_acts_on_leading_qubits() {
        // X on qubit 0 of two
        let x = vec![ZERO, c(1.0), c(1.0), ZERO];
        let circ = CompiledCircuit {
            n_qubits: 2,
            n_system: 2,
            gates: vec![Gate::Unitary { dim: 2, matrix: x }],
            postselect: vec![],
            rescale: 1.0,
        };
        let out = simulate(&circ, &StateVector::basis(2, 1).unwrap()).unwrap().output;
        assert!((out.fidelity(&StateVector::basis(2, 3).unwrap()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_angles_and_system_postselection() {
        let mut circ = CompiledCircuit {
            n_qubits: 2,
            n_system: 1,
            gates: vec![Gate::Cry { angle: 4.0, controls: vec![], target: 1 }],
            postselect: vec![1],
            rescale: 1.0,
        };
        assert!(circ.validate().is_err());
        circ.gates.clear();
        circ.postselect = vec![0];
        assert!(circ.validate().is_err());
    }
}

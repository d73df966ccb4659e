//! Arbitrary matrices as post-selected circuits: `M = U S V^dagger` becomes
//! `V^dagger`, one controlled rotation per singular value, then `U`. The
//! rotation for pattern `k` leaves amplitude `s_k / r` on ancilla `|0>`.

use serde::{Deserialize, Serialize};

use super::circuit::{simulate, CompiledCircuit, Gate, StateVector, MAX_QUBITS};
use super::text;
use crate::error::{HtnError, Result};
use crate::tn::linalg::svd;
use crate::tn::{C64, ONE, ZERO};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AncillaMode {
    /// One ancilla shared by all rotations. Their control patterns are
    /// disjoint, so each basis state meets exactly one rotation.
    #[default]
    Single,
    /// One ancilla per singular value.
    Deferred,
}

fn pattern(k: usize, n_sys: usize) -> Vec<(usize, bool)> {
    (0..n_sys).map(|q| (q, (k >> (n_sys - 1 - q)) & 1 == 1)).collect()
}

/// Compiles a `d x d` row-major matrix, `d` a power of two.
pub fn compile_matrix(d: usize, m: &[C64], mode: AncillaMode) -> Result<CompiledCircuit> {
    if d == 0 || !d.is_power_of_two() || m.len() != d * d {
        return Err(HtnError::shape(format!("need a square matrix of power-of-two size, got {d} with {} entries", m.len())));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(HtnError::invalid("matrix has non-finite entries"));
    }
    let n_sys = d.trailing_zeros() as usize;
    let n_anc = match mode {
        AncillaMode::Single => 1,
        AncillaMode::Deferred => d,
    };
    if n_sys + n_anc > MAX_QUBITS {
        return Err(HtnError::invalid(format!("{} qubits exceed the simulator cap {MAX_QUBITS}", n_sys + n_anc)));
    }
    let f = svd(d, d, m);
    let r = f.s[0];
    if !(r > 0.0) {
        return Err(HtnError::Degenerate("cannot compile the zero matrix".into()));
    }
    let mut gates = vec![Gate::Unitary { dim: d, matrix: f.vh.clone() }];
    for (k, &s) in f.s.iter().enumerate() {
        let target = match mode {
            AncillaMode::Single => n_sys,
            AncillaMode::Deferred => n_sys + k,
        };
        let angle = 2.0 * (s / r).clamp(0.0, 1.0).acos();
        gates.push(Gate::Cry { angle, controls: pattern(k, n_sys), target });
    }
    gates.push(Gate::Unitary { dim: d, matrix: f.u.clone() });
    let circuit = CompiledCircuit {
        n_qubits: n_sys + n_anc,
        n_system: n_sys,
        gates,
        postselect: (n_sys..n_sys + n_anc).collect(),
        rescale: r,
    };
    circuit.validate()?;
    Ok(circuit)
}

/// `{"real": [[...]], "imag": [[...]]}`; `imag` may be omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub real: Vec<Vec<f64>>,
    #[serde(default)]
    pub imag: Option<Vec<Vec<f64>>>,
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<(usize, Vec<C64>)> {
        let d = self.real.len();
        if self.real.iter().any(|r| r.len() != d) {
            return Err(HtnError::shape("matrix rows must all have the matrix size"));
        }
        if let Some(im) = &self.imag {
            if im.len() != d || im.iter().any(|r| r.len() != d) {
                return Err(HtnError::shape("imag part shape differs from real part"));
            }
        }
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let im = self.imag.as_ref().map_or(0.0, |m| m[i][j]);
                out.push(C64::new(self.real[i][j], im));
            }
        }
        Ok((d, out))
    }
}

pub fn parse_matrix_json(text: &str) -> Result<(usize, Vec<C64>)> {
    serde_json::from_str::<MatrixJson>(text)?.to_matrix()
}

/// Two system qubits and one ancilla: the ancilla flips iff both system
/// qubits are `|1>`, that branch is discarded, and an `X` on qubit 1 aligns
/// the survivors with the computational basis.
pub fn toffoli_circuit() -> CompiledCircuit {
    let x_on_second = vec![
        ZERO, ONE, ZERO, ZERO, //
        ONE, ZERO, ZERO, ZERO, //
        ZERO, ZERO, ZERO, ONE, //
        ZERO, ZERO, ONE, ZERO,
    ];
    CompiledCircuit {
        n_qubits: 3,
        n_system: 2,
        gates: vec![
            Gate::Cry { angle: std::f64::consts::PI, controls: vec![(0, true), (1, true)], target: 2 },
            Gate::Unitary { dim: 4, matrix: x_on_second },
        ],
        postselect: vec![2],
        rescale: 1.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationCase {
    pub input: String,
    pub expected: String,
    pub fidelity: f64,
    pub retention: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToffoliReport {
    pub circuit: String,
    pub cases: Vec<SeparationCase>,
    /// `|<a|b>|^2` of the two inputs.
    pub input_overlap: f64,
    /// Same for the two post-selected outputs.
    pub output_overlap: f64,
}

/// Runs `|+1>` and `|1+>` through [`toffoli_circuit`].
pub fn toffoli_separation_demo() -> Result<ToffoliReport> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = [C64::new(h, 0.0), C64::new(h, 0.0)];
    let one = [ZERO, ONE];
    let a = StateVector::product(&[plus, one])?;
    let b = StateVector::product(&[one, plus])?;
    let circuit = toffoli_circuit();
    let sa = simulate(&circuit, &a)?;
    let sb = simulate(&circuit, &b)?;
    let cases = vec![
        SeparationCase {
            input: "|+1>".into(),
            expected: "|00>".into(),
            fidelity: sa.output.fidelity(&StateVector::basis(2, 0)?),
            retention: sa.retention,
        },
        SeparationCase {
            input: "|1+>".into(),
            expected: "|11>".into(),
            fidelity: sb.output.fidelity(&StateVector::basis(2, 3)?),
            retention: sb.retention,
        },
    ];
    Ok(ToffoliReport {
        circuit: text::serialize(&circuit),
        cases,
        input_overlap: a.fidelity(&b),
        output_overlap: sa.output.fidelity(&sb.output),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tn::ComplexTensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn apply(d: usize, m: &[C64], x: &[C64]) -> Vec<C64> {
        (0..d).map(|i| (0..d).map(|j| m[i * d + j] * x[j]).sum()).collect()
    }

    #[test]
    fn random_matrices_match_the_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in [2, 4, 8] {
            for mode in [AncillaMode::Single, AncillaMode::Deferred] {
                let m = ComplexTensor::random(&[d, d], &mut rng).into_data();
                let psi = StateVector::normalized(ComplexTensor::random(&[d], &mut rng).into_data()).unwrap();
                let c = compile_matrix(d, &m, mode).unwrap();
                let sim = simulate(&c, &psi).unwrap();
                let mpsi = apply(d, &m, psi.amplitudes());
                let n2: f64 = mpsi.iter().map(|z| z.norm_sqr()).sum();
                let want = StateVector::normalized(mpsi).unwrap();
                for (x, y) in sim.output.amplitudes().iter().zip(want.amplitudes()) {
                    assert!((x - y).norm() < 1e-10, "d {d} {mode:?}");
                }
                assert!((sim.retention - n2 / (c.rescale * c.rescale)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unitaries_compile_to_zero_angles() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let m = vec![C64::new(h, 0.0), C64::new(h, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0)];
        let c = compile_matrix(2, &m, AncillaMode::Single).unwrap();
        assert!((c.rescale - 1.0).abs() < 1e-12);
        for g in &c.gates {
            if let Gate::Cry { angle, .. } = g {
                assert!(angle.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn projector_keeps_the_zero_component() {
        let m = vec![ONE, ZERO, ZERO, ZERO];
        let c = compile_matrix(2, &m, AncillaMode::Single).unwrap();
        let psi = StateVector::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let sim = simulate(&c, &psi).unwrap();
        assert!((sim.retention - 0.36).abs() < 1e-12);
        assert!((sim.output.fidelity(&StateVector::basis(1, 0).unwrap()) - 1.0).abs() < 1e-12);
        assert!(matches!(compile_matrix(2, &[ZERO; 4], AncillaMode::Single), Err(HtnError::Degenerate(_))));
    }

    #[test]
    fn toffoli_demo_separates_perfectly() {
        let r = toffoli_separation_demo().unwrap();
        for case in &r.cases {
            assert!((case.fidelity - 1.0).abs() < 1e-12);
            assert!((case.retention - 0.5).abs() < 1e-12);
        }
        assert!((r.input_overlap - 0.25).abs() < 1e-12);
        assert!(r.output_overlap < 1e-24);
    }

    #[test]
    fn matrix_json_with_and_without_imag() {
        let (d, m) = parse_matrix_json(r#"{"real": [[1, 2], [3, 4]]}"#).unwrap();
        assert_eq!((d, m[3]), (2, C64::new(4.0, 0.0)));
        let (_, m) = parse_matrix_json(r#"{"real": [[1, 0], [0, 1]], "imag": [[0, 1], [0, 0]]}"#).unwrap();
        assert_eq!(m[1], C64::new(0.0, 1.0));
        assert!(parse_matrix_json(r#"{"real": [[1, 2]]}"#).is_err());
    }
}

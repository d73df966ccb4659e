//! Line-oriented circuit format.
//!
//! ```text
//! QUBITS <total> <system>
//! RESCALE <r>
//! U <dim> <re> <im> <re> <im> ...      row-major entries
//! CRY <angle> <q>=<0|1>,<q>=<0|1> <target>   "-" for no controls
//! POST <q>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Numbers are written
//! in shortest round-trip form, so parse(serialize(c)) == c exactly.

use super::circuit::{CompiledCircuit, Gate};
use crate::error::{HtnError, Result};
use crate::tn::C64;

pub fn serialize(circuit: &CompiledCircuit) -> String {
    let mut out = format!("QUBITS {} {}\nRESCALE {:?}\n", circuit.n_qubits, circuit.n_system, circuit.rescale);
    for g in &circuit.gates {
        match g {
            Gate::Unitary { dim, matrix } => {
                out.push_str(&format!("U {dim}"));
                for z in matrix {
                    out.push_str(&format!(" {:?} {:?}", z.re, z.im));
                }
            }
            Gate::Cry { angle, controls, target } => {
                let ctl = if controls.is_empty() {
                    "-".to_string()
                } else {
                    controls.iter().map(|&(q, v)| format!("{q}={}", u8::from(v))).collect::<Vec<_>>().join(",")
                };
                out.push_str(&format!("CRY {angle:?} {ctl} {target}"));
            }
        }
        out.push('\n');
    }
    for q in &circuit.postselect {
        out.push_str(&format!("POST {q}\n"));
    }
    out
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| HtnError::Parse { line, message: format!("missing {what}") })?;
    tok.parse().map_err(|_| HtnError::Parse { line, message: format!("bad {what}: {tok:?}") })
}

pub fn parse(text: &str) -> Result<CompiledCircuit> {
    let mut header: Option<(usize, usize)> = None;
    let mut rescale: Option<f64> = None;
    let mut gates = Vec::new();
    let mut postselect = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let mut toks = s.split_whitespace();
        let op = toks.next().unwrap_or_default();
        match op {
            "QUBITS" => header = Some((num(toks.next(), line, "qubit count")?, num(toks.next(), line, "system count")?)),
            "RESCALE" => rescale = Some(num(toks.next(), line, "rescale")?),
            "U" => {
                let dim: usize = num(toks.next(), line, "dimension")?;
                let mut matrix = Vec::with_capacity(dim * dim);
                for _ in 0..dim * dim {
                    let re: f64 = num(toks.next(), line, "real part")?;
                    let im: f64 = num(toks.next(), line, "imaginary part")?;
                    matrix.push(C64::new(re, im));
                }
                gates.push(Gate::Unitary { dim, matrix });
            }
            "CRY" => {
                let angle: f64 = num(toks.next(), line, "angle")?;
                let ctl = toks.next().ok_or_else(|| HtnError::Parse { line, message: "missing controls".into() })?;
                let mut controls = Vec::new();
                if ctl != "-" {
                    for part in ctl.split(',') {
                        let (q, v) = part
                            .split_once('=')
                            .ok_or_else(|| HtnError::Parse { line, message: format!("bad control {part:?}") })?;
                        let q: usize = num(Some(q), line, "control qubit")?;
                        let v = match v {
                            "0" => false,
                            "1" => true,
                            _ => return Err(HtnError::Parse { line, message: format!("bad control value {v:?}") }),
                        };
                        controls.push((q, v));
                    }
                }
                let target = num(toks.next(), line, "target")?;
                gates.push(Gate::Cry { angle, controls, target });
            }
            "POST" => postselect.push(num(toks.next(), line, "qubit")?),
            other => return Err(HtnError::Parse { line, message: format!("unknown instruction {other:?}") }),
        }
        if let Some(extra) = toks.next() {
            return Err(HtnError::Parse { line, message: format!("unexpected token {extra:?}") });
        }
    }
    let (n_qubits, n_system) = header.ok_or_else(|| HtnError::Parse { line: 0, message: "missing QUBITS".into() })?;
    let circuit = CompiledCircuit {
        n_qubits,
        n_system,
        gates,
        postselect,
        rescale: rescale.unwrap_or(1.0),
    };
    circuit.validate()?;
    Ok(circuit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let c = CompiledCircuit {
            n_qubits: 3,
            n_system: 2,
            gates: vec![
                Gate::Unitary { dim: 2, matrix: vec![C64::new(0.1, -0.3), C64::new(1.0 / 3.0, 0.0), C64::new(0.0, 2.5e-17), C64::new(-1.0, 0.0)] },
                Gate::Cry { angle: 1.234567890123, controls: vec![(0, true), (1, false)], target: 2 },
                Gate::Cry { angle: 0.0, controls: vec![], target: 2 },
            ],
            postselect: vec![2],
            rescale: 2.75,
        };
        assert_eq!(parse(&serialize(&c)).unwrap(), c);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "QUBITS 2 1\n# note\nCRY 0.5 0=2 1\n";
        match parse(text) {
            Err(HtnError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("BOGUS\n"), Err(HtnError::Parse { line: 1, .. })));
    }
}

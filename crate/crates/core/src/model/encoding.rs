//! Rotational product-state encoding of real features.

use std::f64::consts::FRAC_PI_2;

use crate::error::{HtnError, Result};
use crate::tn::{C64, ONE, ZERO};

/// Product input state: one qubit per feature plus `ancilla_count` qubits
/// fixed to `|0>`. The ancillas are implicit in the isometric site tensors
/// and are never contracted explicitly.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedState {
    pub site_vectors: Vec<[C64; 2]>,
    pub ancilla_count: usize,
}

impl EncodedState {
    pub fn n_sites(&self) -> usize {
        self.site_vectors.len()
    }

    pub fn ancilla_vector() -> [C64; 2] {
        [ONE, ZERO]
    }

    /// Full `2^n` amplitude vector of the feature sites, first site most
    /// significant. Exponential; meant for small reference computations.
    pub fn dense_amplitudes(&self) -> Vec<C64> {
        let mut amps = vec![ONE];
        for v in &self.site_vectors {
            let mut next = Vec::with_capacity(amps.len() * 2);
            for a in &amps {
                next.push(a * v[0]);
                next.push(a * v[1]);
            }
            amps = next;
        }
        amps
    }
}

/// Maps each feature `x` in `[0, 1]` to `(cos(pi x / 2), sin(pi x / 2))`.
pub fn encode_rotational(features: &[f64], ancilla_count: usize) -> Result<EncodedState> {
    let mut site_vectors = Vec::with_capacity(features.len());
    for (index, &x) in features.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(HtnError::EncodingRange { index, value: x });
        }
        let angle = FRAC_PI_2 * x;
        site_vectors.push([C64::new(angle.cos(), 0.0), C64::new(angle.sin(), 0.0)]);
    }
    Ok(EncodedState { site_vectors, ancilla_count })
}

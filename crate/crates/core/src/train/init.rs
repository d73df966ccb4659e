//! Data-derived initialization.
//!
//! Sites are fixed greedily from left to right. At site `k` every sample
//! contributes the operator `beta_i (x) |phi_i><phi_i|` on the site input,
//! where `beta_i` is the bond marginal of its left environment. The site maps
//! the eigenbasis of the class-balanced average onto its output slots, best
//! eigenvectors onto the slots that stay coherent on the outgoing bond.
//! Sites carrying an output leg instead split the eigenbasis by the sign of
//! the difference between the two digit classes.
//! The two leg values start filling from opposite halves of the reduction
//! index, so tracing it out removes the coherence between the two readouts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HtnError, Result};
use crate::model::channel::{ket_maps, transfer_site, Env};
use crate::model::loss::check_batch;
use crate::model::{Architecture, HtnModel, ReductionOperator, Sample, SITE_IN_AXES};
use crate::tn::linalg::eigh;
use crate::tn::{isometrize, ComplexTensor, C64, ZERO};

/// At most this many samples (chosen by seed) shape the initialization.
pub const INIT_MAX_SAMPLES: usize = 2000;

fn site_operator(beta: &[C64], c: usize, phi: &[C64; 2]) -> Vec<C64> {
    let n = 2 * c;
    let mut x = vec![ZERO; n * n];
    for a in 0..c {
        for s in 0..2 {
            for b in 0..c {
                for t in 0..2 {
                    x[(a * 2 + s) * n + b * 2 + t] = beta[a * c + b] * phi[s] * phi[t].conj();
                }
            }
        }
    }
    x
}

fn quadratic_form(m: &[C64], n: usize, vecs: &[C64], j: usize) -> f64 {
    let mut acc = ZERO;
    for a in 0..n {
        for b in 0..n {
            acc += vecs[a * n + j].conj() * m[a * n + b] * vecs[b * n + j];
        }
    }
    acc.re
}

fn mean_of(ops: &[Option<Vec<C64>>], pick: impl Fn(usize) -> bool, len: usize) -> Vec<C64> {
    let chosen: Vec<&Vec<C64>> =
        ops.iter().enumerate().filter(|(l, o)| o.is_some() && pick(*l)).map(|(_, o)| o.as_ref().unwrap()).collect();
    let mut out = vec![ZERO; len];
    for op in &chosen {
        for (x, y) in out.iter_mut().zip(op.iter()) {
            *x += y;
        }
    }
    if !chosen.is_empty() {
        let s = 1.0 / chosen.len() as f64;
        out.iter_mut().for_each(|x| *x *= s);
    }
    out
}

/// Output slot order per leg value: `(r, c)` with `r` slow, starting at
/// `r = xi / 2` for leg value 1.
fn slots_for(o_val: usize, o: usize, xi: usize, c: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(xi * c);
    for i in 0..xi {
        let r = (i + o_val * xi.div_ceil(2)) % xi;
        for cc in 0..c {
            out.push((r * o + o_val) * c + cc);
        }
    }
    out
}

pub fn init_from_data(arch: Architecture, batch: &[Sample], seed: u64) -> Result<HtnModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = HtnModel::random(arch.clone(), &mut rng)?;
    check_batch(batch, &probe)?;
    let mut chosen: Vec<&Sample> = batch.iter().collect();
    if chosen.len() > INIT_MAX_SAMPLES {
        chosen.shuffle(&mut rng);
        chosen.truncate(INIT_MAX_SAMPLES);
    }
    let n = arch.n_sites();
    let xi = arch.xi;
    let ones = vec![1.0; xi];
    let mut envs = vec![Env::start(); chosen.len()];
    let mut sites = Vec::with_capacity(n);
    for k in 0..n {
        let [c_in, _, _, o, c_out] = arch.site_dims(k);
        let dim = 2 * c_in;
        let mut per_class: Vec<Option<Vec<C64>>> = vec![None; arch.n_classes];
        let mut counts = vec![0usize; arch.n_classes];
        for (env, (sigma, label)) in envs.iter().zip(&chosen) {
            let x = site_operator(&env.bond_marginal(), c_in, &sigma.site_vectors[k]);
            let acc = per_class[label.class_index].get_or_insert_with(|| vec![ZERO; dim * dim]);
            for (a, b) in acc.iter_mut().zip(&x) {
                *a += b;
            }
            counts[label.class_index] += 1;
        }
        for (op, &cnt) in per_class.iter_mut().zip(&counts) {
            if let Some(op) = op {
                op.iter_mut().for_each(|x| *x /= cnt as f64);
            }
        }
        let mean = mean_of(&per_class, |_| true, dim * dim);
        // (eigenvector column, slot)
        let mut assignment: Vec<(usize, usize)> = Vec::with_capacity(dim);
        let vecs;
        if o == 1 {
            let (_, v) = eigh(dim, &mean);
            vecs = v;
            for j in 0..dim {
                assignment.push((dim - 1 - j, j));
            }
        } else {
            let below = arch.suffix_output(k + 1);
            let digit = |l: usize| (l / below) % 2;
            let one = mean_of(&per_class, |l| digit(l) == 1, dim * dim);
            let zero = mean_of(&per_class, |l| digit(l) == 0, dim * dim);
            let diff: Vec<C64> = one.iter().zip(&zero).map(|(a, b)| a - b).collect();
            let (vals, v) = eigh(dim, &diff);
            vecs = v;
            let mut groups: [Vec<(f64, usize)>; 2] = [Vec::new(), Vec::new()];
            for (j, &lam) in vals.iter().enumerate() {
                groups[usize::from(lam > 0.0)].push((quadratic_form(&mean, dim, &vecs, j), j));
            }
            for g in groups.iter_mut() {
                g.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            }
            let mut free = [slots_for(0, o, xi, c_out), slots_for(1, o, xi, c_out)];
            free.iter_mut().for_each(|f| f.reverse());
            for g in 0..2 {
                for &(_, j) in &groups[g] {
                    let slot = match free[g].pop() {
                        Some(s) => s,
                        None => free[1 - g].pop().ok_or_else(|| HtnError::Degenerate("no free output slot".into()))?,
                    };
                    assignment.push((j, slot));
                }
            }
        }
        let out_dim = xi * o * c_out;
        let mut w = vec![ZERO; dim * out_dim];
        for &(j, slot) in &assignment {
            for a in 0..dim {
                w[a * out_dim + slot] = vecs[a * dim + j].conj();
            }
        }
        let site = isometrize(&ComplexTensor::new(arch.site_dims(k).to_vec(), w)?, &SITE_IN_AXES)?;
        if k + 1 < n {
            for (env, (sigma, _)) in envs.iter_mut().zip(&chosen) {
                *env = transfer_site(env, &ket_maps(&site, &sigma.site_vectors[k]), &ones, o);
            }
        }
        sites.push(site);
    }
    HtnModel::new(arch.clone(), sites, vec![ReductionOperator::identity(xi); n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{batch_loss, encode_rotational, LabelState, LossConfig};
    use rand::Rng;

    #[test]
    fn single_sample_beats_the_mixed_baseline() {
        let arch = Architecture::new(4, 4, vec![1, 2, 2], 3).unwrap();
        let batch = vec![(encode_rotational(&[0.3, 0.7, 0.2], 0).unwrap(), LabelState::new(2, 4).unwrap())];
        let model = init_from_data(arch, &batch, 0).unwrap();
        model.validate().unwrap();
        let loss = batch_loss(&batch, &model, &LossConfig::default()).unwrap().loss;
        assert!(loss <= (4.0f64).ln() + 1e-9, "{loss}");
    }

    #[test]
    fn separates_two_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let arch = Architecture::new(4, 2, vec![1, 1, 2], 2).unwrap();
        let batch: Vec<Sample> = (0..40)
            .map(|i| {
                let l = i % 2;
                let x: Vec<f64> = (0..3).map(|_| 0.1 + 0.8 * l as f64 + rng.gen_range(-0.1..0.1)).collect();
                (encode_rotational(&x, 0).unwrap(), LabelState::new(l, 2).unwrap())
            })
            .collect();
        let model = init_from_data(arch.clone(), &batch, 0).unwrap();
        let loss = batch_loss(&batch, &model, &LossConfig::default()).unwrap().loss;
        assert!(loss < 0.5, "{loss}");
        let again = init_from_data(arch, &batch, 0).unwrap();
        assert_eq!(model, again);
    }
}
